"""Leader: assigns globally unique vertex ids to incoming commands, gathers
f+1 dependency-service replies, unions them, and hands the result to the
proposer that owns the vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .core import Batch, Command, Deps, Proposal, VertexId, union_deps
from .messages import (
    ClientRequest,
    DepReply,
    DepRequest,
    Effect,
    Message,
    Note,
    ProposeRequest,
    Send,
    SetTimer,
)


@dataclass
class AssignEvent:
    leader: str
    v: VertexId
    cmd: Union[Command, Batch]


@dataclass
class _Pending:
    cmd: Union[Command, Batch]
    replies: dict[str, Deps] = field(default_factory=dict)
    targets: tuple[str, ...] = ()


class Leader:
    """One of the L leaders; operates independently of its peers.

    Thrifty mode sends dependency requests to only f+1 nodes (rotating with
    the vertex sequence); the per-vertex retransmit timer widens to all 2f+1
    nodes if the quorum does not come back in time. Replies beyond the
    (f+1)-th are ignored, and the union of exactly f+1 replies is proposed.
    """

    def __init__(
        self,
        name: str,
        index: int,
        f: int,
        dep_nodes: list[str],
        proposers: list[str],
        batch_size: int = 1,
        flush_ms: float = 5.0,
        retransmit_ms: float = 50.0,
        thrifty: bool = False,
        dep_quorum_override: Optional[int] = None,
    ) -> None:
        self.name = name
        self.index = index
        self.f = f
        self.dep_nodes = dep_nodes
        self.proposers = proposers
        self.batch_size = batch_size
        self.flush_ms = flush_ms
        self.retransmit_ms = retransmit_ms
        self.thrifty = thrifty
        # fault-injection switch: aggregate fewer than f+1 replies, used to
        # validate that the history checker catches broken quorums
        self.dep_quorum = dep_quorum_override if dep_quorum_override else f + 1
        self.next_seq = 0
        self.pending: dict[VertexId, _Pending] = {}
        self.batch_buffer: list[Command] = []

    def on_message(self, src: str, msg: Message, now: float) -> list[Effect]:
        if isinstance(msg, ClientRequest):
            if self.batch_size > 1:
                return self._buffer(msg.cmd)
            return self.assign_vertex_id(msg.cmd)
        if isinstance(msg, DepReply):
            return self.on_dep_reply(src, msg)
        return []

    def _buffer(self, cmd: Command) -> list[Effect]:
        self.batch_buffer.append(cmd)
        if len(self.batch_buffer) >= self.batch_size:
            return self._flush()
        if len(self.batch_buffer) == 1:
            return [SetTimer(self.flush_ms, ("flush", self.next_seq))]
        return []

    def _flush(self) -> list[Effect]:
        if not self.batch_buffer:
            return []
        batch = Batch(tuple(self.batch_buffer))
        self.batch_buffer = []
        return self.assign_vertex_id(batch)

    def assign_vertex_id(self, cmd: Union[Command, Batch]) -> list[Effect]:
        v = VertexId(self.index, self.next_seq)
        self.next_seq += 1
        targets = self._initial_targets(v)
        self.pending[v] = _Pending(cmd, targets=targets)
        out: list[Effect] = [Note(AssignEvent(self.name, v, cmd))]
        out.extend(Send(d, DepRequest(v, cmd)) for d in targets)
        out.append(SetTimer(self.retransmit_ms, ("dep-retx", v)))
        return out

    def _initial_targets(self, v: VertexId) -> tuple[str, ...]:
        if not self.thrifty:
            return tuple(self.dep_nodes)
        n = len(self.dep_nodes)
        start = v.seq % n
        return tuple(self.dep_nodes[(start + i) % n] for i in range(self.f + 1))

    def on_dep_reply(self, node: str, reply: DepReply) -> list[Effect]:
        pending = self.pending.get(reply.v)
        if pending is None:
            return []  # stale retransmission for an already-proposed vertex
        if node in pending.replies:
            return []
        pending.replies[node] = reply.deps
        if len(pending.replies) < self.dep_quorum:
            return []
        deps = None
        for d in pending.replies.values():
            deps = d if deps is None else union_deps(deps, d)
        del self.pending[reply.v]
        proposer = self.proposers[reply.v.leader_index % len(self.proposers)]
        return [Send(proposer, ProposeRequest(reply.v, Proposal(pending.cmd, deps)))]

    def on_timer(self, key: tuple, now: float) -> list[Effect]:
        if key[0] == "flush":
            return self._flush()
        if key[0] == "dep-retx":
            v = key[1]
            pending = self.pending.get(v)
            if pending is None:
                return []
            # widen to every node; with thrifty off this is a plain resend
            pending.targets = tuple(self.dep_nodes)
            out: list[Effect] = [
                Send(d, DepRequest(v, pending.cmd))
                for d in pending.targets
                if d not in pending.replies
            ]
            out.append(SetTimer(self.retransmit_ms, ("dep-retx", v)))
            return out
        return []
