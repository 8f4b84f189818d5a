"""Shared domain types: vertex ids, commands, dependency sets, proposals,
and the per-replica graph of committed vertices.

Everything here is an immutable value; instances can be shared freely
between logical threads and used as dict keys.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterator, Optional, Union

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; deterministic across processes and platforms."""
    h = _FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV64_PRIME) & _U64
    return h


@functools.total_ordering
@dataclass(frozen=True)
class VertexId:
    """Globally unique vertex identifier: (issuing leader, per-leader sequence).

    Ordered lexicographically on (seq, leader_index) so that leaders
    interleave fairly when a cycle batch is flattened; any deterministic
    total order would do, but it must be identical on every replica.
    """

    leader_index: int
    seq: int

    def sort_key(self) -> tuple[int, int]:
        return (self.seq, self.leader_index)

    def __lt__(self, other: "VertexId") -> bool:
        return self.sort_key() < other.sort_key()

    def encode(self) -> bytes:
        """Canonical 8-byte encoding: two unsigned 32-bit big-endian ints."""
        return self.leader_index.to_bytes(4, "big") + self.seq.to_bytes(4, "big")

    @staticmethod
    def decode(data: bytes) -> "VertexId":
        return VertexId(int.from_bytes(data[:4], "big"), int.from_bytes(data[4:8], "big"))

    def owner_replica(self, num_replicas: int) -> int:
        return fnv1a64(self.encode()) % num_replicas


@dataclass(frozen=True)
class Get:
    key: bytes


@dataclass(frozen=True)
class Set:
    key: bytes
    value: bytes


Op = Union[Get, Set]


@dataclass(frozen=True)
class Command:
    """A client-issued KV operation.

    client_seq strictly increases across distinct commands from one client;
    retries of the same command reuse the same client_seq.
    """

    client_id: str
    client_seq: int
    op: Op


@dataclass(frozen=True)
class Noop:
    """Recovery filler command: no effect, conflicts with nothing."""


NOOP = Noop()


@dataclass(frozen=True)
class Batch:
    """An ordered group of commands agreed on as a single vertex."""

    commands: tuple[Command, ...]


Payload = Union[Command, Batch, Noop]


def _footprint(x: Payload) -> Iterator[tuple[bytes, bool]]:
    """(key, is_write) pairs touched by a payload. Noop touches nothing."""
    if isinstance(x, Command):
        if isinstance(x.op, Get):
            yield (x.op.key, False)
        else:
            yield (x.op.key, True)
    elif isinstance(x, Batch):
        for cmd in x.commands:
            yield from _footprint(cmd)


def conflicts(x: Payload, y: Payload) -> bool:
    """True iff x and y touch a common key and at least one side writes it.

    Symmetric; Noop never conflicts, two reads never conflict. Batches
    conflict when any member pair does.
    """
    seen: dict[bytes, bool] = {}
    for key, is_write in _footprint(x):
        seen[key] = seen.get(key, False) or is_write
    for key, is_write in _footprint(y):
        if key in seen and (is_write or seen[key]):
            return True
    return False


@dataclass(frozen=True)
class ExactDeps:
    """Dependency set as an explicit set of vertex ids."""

    vertices: frozenset[VertexId]

    def expand(self) -> frozenset[VertexId]:
        return self.vertices

    def union(self, other: "Deps") -> "ExactDeps":
        if not isinstance(other, ExactDeps):
            raise TypeError("cannot union exact deps with compact deps")
        return ExactDeps(self.vertices | other.vertices)

    def sorted_vertices(self) -> list[VertexId]:
        return sorted(self.vertices, key=VertexId.sort_key)


@dataclass(frozen=True)
class CompactDeps:
    """Dependency set as one watermark per leader.

    watermarks[i] = highest sequence s such that every (i, k), k <= s, is a
    dependency; None means no dependency on leader i. The array length is
    fixed at cluster configuration time to the number of leaders.
    """

    watermarks: tuple[Optional[int], ...]

    def expand(self) -> frozenset[VertexId]:
        return frozenset(
            VertexId(i, k)
            for i, w in enumerate(self.watermarks)
            if w is not None
            for k in range(w + 1)
        )

    def union(self, other: "Deps") -> "CompactDeps":
        if not isinstance(other, CompactDeps):
            raise TypeError("cannot union compact deps with exact deps")
        if len(self.watermarks) != len(other.watermarks):
            raise ValueError("compact deps built for different leader counts")
        merged = tuple(
            b if a is None else a if b is None else max(a, b)
            for a, b in zip(self.watermarks, other.watermarks)
        )
        return CompactDeps(merged)


Deps = Union[ExactDeps, CompactDeps]

EMPTY_DEPS = ExactDeps(frozenset())


def expand_deps(d: Deps) -> frozenset[VertexId]:
    return d.expand()


def union_deps(a: Deps, b: Deps) -> Deps:
    return a.union(b)


@dataclass(frozen=True)
class Proposal:
    """The unit of consensus for one vertex: a payload plus its deps.

    A noop conflicts with nothing, so a noop proposal carries no deps."""

    cmd: Payload
    deps: Deps

    def __post_init__(self) -> None:
        if isinstance(self.cmd, Noop) and self.deps.expand():
            raise ValueError("noop proposals carry empty dependencies")


NOOP_PROPOSAL = Proposal(NOOP, EMPTY_DEPS)


class AgreementViolation(Exception):
    """Two different proposals observed as committed for the same vertex."""


class CommitGraph:
    """Map of committed vertices plus execution status.

    Committed entries are immutable: re-committing a vertex with a different
    proposal raises AgreementViolation. The edge set of a vertex is its deps
    expansion with the vertex itself removed (compact deps can cover their
    own id; the self-edge is meaningless and dropped).
    """

    def __init__(self) -> None:
        self.committed: dict[VertexId, Proposal] = {}
        self.executed: set[VertexId] = set()

    def add(self, v: VertexId, p: Proposal) -> bool:
        """Record a committed vertex. Returns False on duplicate delivery."""
        existing = self.committed.get(v)
        if existing is not None:
            if existing != p:
                raise AgreementViolation(f"vertex {v}: {existing} vs {p}")
            return False
        self.committed[v] = p
        return True

    def edges(self, v: VertexId) -> frozenset[VertexId]:
        return self.committed[v].deps.expand() - {v}

    def is_executed(self, v: VertexId) -> bool:
        return v in self.executed

    def mark_executed(self, v: VertexId) -> None:
        assert v in self.committed
        self.executed.add(v)

    def frontier(self) -> list[VertexId]:
        """Committed but not yet executed vertices."""
        return [v for v in self.committed if v not in self.executed]
