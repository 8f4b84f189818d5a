"""Built-in protocol mutations.

Each switch breaks one safety-critical rule; the acceptance suite proves
that the history checker (or the model checker) catches every one of them.
They exist only to validate the checkers and are all off by default.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Mutations:
    # leader aggregates a single dependency reply instead of f+1
    dep_quorum_one: bool = False
    # acceptors accept phase-2 messages below their promised round
    acceptor_ignores_promises: bool = False
    # replicas execute commits immediately, ignoring deps and SCC order
    replica_skip_scc: bool = False
    # client table keeps only the largest executed id per client
    client_table_largest_only: bool = False


NO_MUTATIONS = Mutations()

ALL_MUTATIONS = {
    "dep-quorum-one": Mutations(dep_quorum_one=True),
    "acceptor-ignores-promises": Mutations(acceptor_ignores_promises=True),
    "replica-skip-scc": Mutations(replica_skip_scc=True),
    "client-table-largest-only": Mutations(client_table_largest_only=True),
}
