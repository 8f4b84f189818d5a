"""Wire-level message types exchanged between roles, and the effect values
roles hand back to whatever transport is driving them.

Roles are pure state machines: feed them a message or an expired timer, get
back a list of effects. The simulator and the socket transport both consume
the same effect vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .core import Batch, Command, Deps, Proposal, VertexId


@dataclass(frozen=True)
class ClientRequest:
    cmd: Command


@dataclass(frozen=True)
class DepRequest:
    v: VertexId
    cmd: Union[Command, Batch]


@dataclass(frozen=True)
class DepReply:
    v: VertexId
    cmd: Union[Command, Batch]
    deps: Deps


@dataclass(frozen=True)
class ProposeRequest:
    v: VertexId
    proposal: Proposal


@dataclass(frozen=True)
class Phase1a:
    v: VertexId
    round: int


@dataclass(frozen=True)
class Phase1b:
    v: VertexId
    round: int
    voted_round: Optional[int]
    voted_value: Optional[Proposal]


@dataclass(frozen=True)
class Phase2a:
    v: VertexId
    round: int
    value: Proposal


@dataclass(frozen=True)
class Phase2b:
    v: VertexId
    round: int


@dataclass(frozen=True)
class Nack:
    v: VertexId
    promised: int


@dataclass(frozen=True)
class Commit:
    v: VertexId
    proposal: Proposal


@dataclass(frozen=True)
class ClientResponse:
    client_id: str
    client_seq: int
    output_available: bool
    output: Optional[bytes]


Message = Union[
    ClientRequest,
    DepRequest,
    DepReply,
    ProposeRequest,
    Phase1a,
    Phase1b,
    Phase2a,
    Phase2b,
    Nack,
    Commit,
    ClientResponse,
]


@dataclass(frozen=True)
class Send:
    dst: str
    msg: Message


@dataclass(frozen=True)
class SetTimer:
    delay_ms: float
    key: tuple


@dataclass(frozen=True)
class Note:
    """A history record; transports append it to the run's event log."""

    event: object


Effect = Union[Send, SetTimer, Note]
