import random
from fractions import Fraction

import pytest

from fuzz_helpers import fuzz_config, mutation_config, random_workload
from graphsmr.core import Get, NOOP, Proposal, Set, VertexId, ExactDeps, EMPTY_DEPS, Command
from graphsmr.harness import (
    ALL_MUTATIONS,
    ConfigError,
    Crash,
    LinkFault,
    Partition,
    SimConfig,
    check_history,
    export_history,
    role_loads,
    run_simulation,
)
from graphsmr.harness.history import Invoke, Reply
from graphsmr.leader import AssignEvent
from graphsmr.replica import CommitSeen, ExecEvent, RespondEvent


def simple_workload(clients=2, commands=3):
    rng = random.Random(99)
    return random_workload(rng, clients, commands, 0.3)


class TestDeterminism:
    def test_same_seed_byte_identical_history(self):
        cfg = dict(seed=7, min_delay_ms=1.0, max_delay_ms=9.0, drop_prob=0.1,
                   dup_prob=0.05)
        a = run_simulation(SimConfig(**cfg), simple_workload())
        b = run_simulation(SimConfig(**cfg), simple_workload())
        assert export_history(a.history) == export_history(b.history)

    def test_different_seed_differs(self):
        a = run_simulation(SimConfig(seed=1, max_delay_ms=9.0), simple_workload())
        b = run_simulation(SimConfig(seed=2, max_delay_ms=9.0), simple_workload())
        assert export_history(a.history) != export_history(b.history)


class TestEightDelays:
    def test_unloaded_zero_jitter_latency_is_eight_link_delays(self):
        for delay in (1.0, 2.5):
            res = run_simulation(
                SimConfig(seed=0, min_delay_ms=delay, max_delay_ms=delay),
                simple_workload(clients=1, commands=4),
            )
            assert res.completed
            assert res.latencies_ms() == [8 * delay] * 4


class TestMessageCounts:
    def run_loads(self, f, leaders, replicas):
        res = run_simulation(
            SimConfig(seed=11, f=f, leaders=leaders, replicas=replicas),
            simple_workload(clients=4, commands=5),
        )
        assert res.completed
        assert check_history(res.history).ok
        return role_loads(res)

    def test_f1_r2_formulas(self):
        # N = 3: leader 2N+2 = 8, proposer 2N+R+1 = 9, dep 2, acceptor 2,
        # replica 1 + 1/R = 3/2; exact integers/rationals, zero tolerance
        loads = self.run_loads(f=1, leaders=2, replicas=2)
        assert loads["leader"] == 8
        assert loads["proposer"] == 9
        assert loads["dep"] == 2
        assert loads["acceptor"] == 2
        assert loads["replica"] == Fraction(3, 2)

    def test_f2_r3_formulas(self):
        # N = 5: leader 12, proposer 14, replica 4/3
        loads = self.run_loads(f=2, leaders=3, replicas=3)
        assert loads["leader"] == 12
        assert loads["proposer"] == 14
        assert loads["dep"] == 2
        assert loads["acceptor"] == 2
        assert loads["replica"] == Fraction(4, 3)

    def test_more_leaders_leave_per_command_loads_unchanged(self):
        loads = self.run_loads(f=1, leaders=4, replicas=2)
        assert loads["leader"] == 8
        assert loads["proposer"] == 9


class TestVertexIdInvariants:
    def test_ids_unique_and_contiguous_per_leader(self):
        res = run_simulation(
            SimConfig(seed=3, max_delay_ms=6.0, drop_prob=0.1),
            simple_workload(clients=3, commands=4),
        )
        per_leader: dict[str, list[int]] = {}
        seen = set()
        for _t, _n, ev in res.history:
            if isinstance(ev, AssignEvent):
                assert ev.v not in seen
                seen.add(ev.v)
                per_leader.setdefault(ev.leader, []).append(ev.v.seq)
        for leader, seqs in per_leader.items():
            assert seqs == list(range(len(seqs)))


class TestFaults:
    def test_leader_crash_clients_still_answered(self):
        # one crash total: within the global failure budget, so the run
        # must complete, not merely stay safe
        res = run_simulation(
            SimConfig(seed=21, max_delay_ms=4.0, max_sim_ms=120_000),
            simple_workload(clients=3, commands=4),
            [Crash("leader-1", 30.0)],
        )
        assert res.completed
        assert check_history(res.history).ok

    def test_partition_heals_and_run_completes(self):
        res = run_simulation(
            SimConfig(seed=22, max_delay_ms=3.0, max_sim_ms=120_000),
            simple_workload(clients=2, commands=3),
            [Partition(frozenset({"rep-1", "acc-2"}), 10.0, 400.0)],
        )
        assert res.completed
        assert check_history(res.history).ok

    def test_link_fault_overrides_probabilities(self):
        res = run_simulation(
            SimConfig(seed=23, max_sim_ms=120_000),
            simple_workload(clients=2, commands=3),
            [LinkFault("leader-0", "dep-0", drop=1.0)],
        )
        assert res.completed
        assert res.received.get("dep-0", 0) < res.received["dep-1"]

    def test_recovery_noop_fills_stuck_vertex(self):
        from graphsmr.harness.history import check_history as check

        workload = [[Set(b"hot", b"a")], [Set(b"hot", b"b")]]
        res = run_simulation(
            SimConfig(seed=5, max_sim_ms=30_000),
            workload,
            [Crash("leader-0", 1.5)],
        )
        assert res.completed
        assert check(res.history).ok
        noop_vertices = {
            ev.v
            for _t, _n, ev in res.history
            if isinstance(ev, CommitSeen) and ev.proposal.cmd == NOOP
        }
        assert VertexId(0, 0) in noop_vertices


class TestCoupledMode:
    def test_coupled_requires_square_deployment(self):
        with pytest.raises(ConfigError):
            run_simulation(
                SimConfig(seed=0, coupled=True, leaders=2, replicas=2),
                simple_workload(),
            )

    def test_coupled_smoke(self):
        res = run_simulation(
            SimConfig(seed=1, coupled=True, leaders=3, replicas=3),
            simple_workload(clients=2, commands=3),
        )
        assert res.completed
        assert check_history(res.history).ok
        # co-located hops skip the network: fewer than 8 delays end to end
        assert max(res.latencies_ms()) < 8.0


class TestConfigValidation:
    def test_too_few_leaders_rejected(self):
        with pytest.raises(ConfigError):
            run_simulation(SimConfig(seed=0, f=2, leaders=2, replicas=3), simple_workload())

    def test_too_few_replicas_rejected(self):
        with pytest.raises(ConfigError):
            run_simulation(SimConfig(seed=0, f=2, leaders=3, replicas=2), simple_workload())

    def test_bad_probability_rejected(self):
        with pytest.raises(ConfigError):
            run_simulation(SimConfig(seed=0, drop_prob=1.5), simple_workload())


class TestCheckerOnSyntheticHistories:
    """The checker must judge histories on their own terms, so feed it
    hand-built records with known defects."""

    V1, V2 = VertexId(0, 0), VertexId(1, 0)
    W1 = Command("ca", 1, Set(b"k", b"1"))
    W2 = Command("cb", 1, Set(b"k", b"2"))

    def _rec(self, i, ev):
        return (float(i), i, ev)

    def test_clean_history_ok(self):
        p1 = Proposal(self.W1, EMPTY_DEPS)
        p2 = Proposal(self.W2, ExactDeps(frozenset({self.V1})))
        records = [
            self._rec(0, CommitSeen("rep-0", self.V1, p1)),
            self._rec(1, ExecEvent("rep-0", self.V1, "ca", 1, self.W1.op, True, b"OK", 0)),
            self._rec(2, CommitSeen("rep-0", self.V2, p2)),
            self._rec(3, ExecEvent("rep-0", self.V2, "cb", 1, self.W2.op, True, b"OK", 1)),
        ]
        assert check_history(records).ok

    def test_vertex_agreement_violation(self):
        records = [
            self._rec(0, CommitSeen("rep-0", self.V1, Proposal(self.W1, EMPTY_DEPS))),
            self._rec(1, CommitSeen("rep-1", self.V1, Proposal(self.W2, EMPTY_DEPS))),
        ]
        verdict = check_history(records)
        assert not verdict.ok
        assert verdict.violations[0].kind == "per-vertex-agreement"
        assert len(verdict.violations[0].events) == 2

    def test_dependency_invariant_violation(self):
        records = [
            self._rec(0, CommitSeen("rep-0", self.V1, Proposal(self.W1, EMPTY_DEPS))),
            self._rec(1, CommitSeen("rep-0", self.V2, Proposal(self.W2, EMPTY_DEPS))),
        ]
        verdict = check_history(records)
        assert any(v.kind == "dependency-invariant" for v in verdict.violations)

    def test_conflicting_order_violation(self):
        p1 = Proposal(self.W1, ExactDeps(frozenset({self.V2})))
        p2 = Proposal(self.W2, ExactDeps(frozenset({self.V1})))
        records = [
            self._rec(0, CommitSeen("rep-0", self.V1, p1)),
            self._rec(1, CommitSeen("rep-0", self.V2, p2)),
            self._rec(2, ExecEvent("rep-0", self.V1, "ca", 1, self.W1.op, True, b"OK", 0)),
            self._rec(3, ExecEvent("rep-0", self.V2, "cb", 1, self.W2.op, True, b"OK", 1)),
            self._rec(4, ExecEvent("rep-1", self.V2, "cb", 1, self.W2.op, True, b"OK", 0)),
            self._rec(5, ExecEvent("rep-1", self.V1, "ca", 1, self.W1.op, True, b"OK", 1)),
        ]
        verdict = check_history(records)
        assert any(v.kind == "conflicting-order" for v in verdict.violations)

    def test_exactly_once_violation(self):
        records = [
            self._rec(0, ExecEvent("rep-0", self.V1, "ca", 1, self.W1.op, True, b"OK", 0)),
            self._rec(1, ExecEvent("rep-0", self.V2, "ca", 1, self.W1.op, True, b"OK", 1)),
        ]
        verdict = check_history(records)
        assert any(v.kind == "exactly-once" for v in verdict.violations)

    def test_skip_without_application_violation(self):
        records = [
            self._rec(0, ExecEvent("rep-0", self.V1, "ca", 1, self.W1.op, False, None, 0)),
        ]
        verdict = check_history(records)
        assert any(v.kind == "skipped-unexecuted" for v in verdict.violations)

    def test_unbacked_response_violation(self):
        records = [
            self._rec(0, RespondEvent("rep-0", self.V1, "ca", 1, True, b"OK")),
        ]
        verdict = check_history(records)
        assert any(v.kind == "unbacked-response" for v in verdict.violations)

    def test_replayed_state_divergence(self):
        set_a = Command("ca", 1, Set(b"a", b"1"))
        get_b = Command("cb", 1, Get(b"b"))
        records = [
            self._rec(0, ExecEvent("rep-0", self.V1, "ca", 1, set_a.op, True, b"OK", 0)),
            self._rec(1, ExecEvent("rep-0", self.V2, "cb", 1, get_b.op, True, None, 1)),
            self._rec(2, ExecEvent("rep-1", self.V2, "cb", 1, get_b.op, True, None, 0)),
            self._rec(3, ExecEvent("rep-1", self.V1, "ca", 1, set_a.op, False, None, 1)),
        ]
        verdict = check_history(records)
        assert any(v.kind == "replayed-state-divergence" for v in verdict.violations)


class TestMutationDetection:
    @pytest.mark.parametrize("name", sorted(ALL_MUTATIONS))
    def test_mutation_caught_quickly(self, name):
        for seed in range(40):
            config, workload = mutation_config(name, seed, ALL_MUTATIONS[name])
            res = run_simulation(config, workload)
            if not check_history(res.history).ok:
                return
        pytest.fail(f"{name} not caught within 40 seeds")

    def test_unmutated_protocol_clean_under_same_configs(self):
        from graphsmr.harness.mutations import NO_MUTATIONS

        for name in sorted(ALL_MUTATIONS):
            for seed in range(25):
                config, workload = mutation_config(name, seed, NO_MUTATIONS)
                res = run_simulation(config, workload)
                verdict = check_history(res.history)
                assert verdict.ok, f"{name} seed {seed}:\n{verdict}"


class TestFuzzSmoke:
    def test_hundred_seeds_safety(self):
        for seed in range(100):
            f = 1 if seed % 2 == 0 else 2
            rate = [0.0, 0.02, 0.1, 1.0][seed % 4]
            config, workload, faults = fuzz_config(seed, f, rate)
            res = run_simulation(config, workload, faults)
            verdict = check_history(res.history)
            assert verdict.ok, f"seed {seed}:\n{verdict}"


class TestCompactDeps:
    def test_compact_cluster_completes_and_checks(self):
        res = run_simulation(
            SimConfig(seed=17, compact_deps=True, max_delay_ms=5.0,
                      max_sim_ms=120_000),
            random_workload(random.Random(4), 3, 5, 1.0),
        )
        assert res.completed
        assert check_history(res.history).ok
        # every committed non-noop proposal in a compact cluster carries
        # compact deps
        from graphsmr.core import CompactDeps

        kinds = {
            type(ev.proposal.deps)
            for _t, _n, ev in res.history
            if isinstance(ev, CommitSeen) and ev.proposal.cmd != NOOP
        }
        assert kinds == {CompactDeps}


class TestClientBookkeeping:
    def test_invokes_and_replies_recorded(self):
        res = run_simulation(SimConfig(seed=2), simple_workload(clients=2, commands=2))
        invokes = [ev for _t, _n, ev in res.history if isinstance(ev, Invoke)]
        replies = [ev for _t, _n, ev in res.history if isinstance(ev, Reply)]
        assert len(invokes) == 4
        assert len(replies) == 4


class TestThriftyEndToEnd:
    def test_thrifty_with_drops_completes_by_widening(self):
        res = run_simulation(
            SimConfig(seed=31, thrifty=True, drop_prob=0.15, max_delay_ms=4.0,
                      max_sim_ms=120_000),
            simple_workload(clients=3, commands=4),
        )
        assert res.completed
        assert check_history(res.history).ok

    def test_thrifty_lowers_dep_node_load(self):
        thrifty = run_simulation(
            SimConfig(seed=32, thrifty=True), simple_workload(clients=3, commands=4)
        )
        assert thrifty.completed
        loads = role_loads(thrifty)
        # f+1 of 2f+1 nodes contacted: average dep load drops below 2
        assert loads["dep"] < 2
        assert loads["leader"] < 8


class TestHistoryTimestamps:
    def test_non_decreasing_under_service_queueing(self):
        res = run_simulation(
            SimConfig(seed=34, service_cost_ms=1.0, min_delay_ms=0.1,
                      max_delay_ms=0.1, max_sim_ms=1_000_000),
            simple_workload(clients=20, commands=3),
        )
        assert res.completed
        times = [t for t, _n, _ev in res.history]
        assert times == sorted(times)


class TestBatchFlushBound:
    def test_flush_batches_bounded_by_client_population(self):
        # a huge batch size with a small closed-loop population: the flush
        # timer emits whatever arrived, so no batch exceeds the population
        res = run_simulation(
            SimConfig(seed=33, batch_size=1000, max_sim_ms=120_000),
            simple_workload(clients=6, commands=3),
        )
        assert res.completed
        assert check_history(res.history).ok
        from graphsmr.core import Batch

        sizes = [
            len(ev.cmd.commands)
            for _t, _n, ev in res.history
            if isinstance(ev, AssignEvent) and isinstance(ev.cmd, Batch)
        ]
        assert sizes and all(1 <= s <= 6 for s in sizes)
