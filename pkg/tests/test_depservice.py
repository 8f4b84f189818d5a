import itertools

from hypothesis import given, strategies as st

from graphsmr.core import (
    Command,
    CompactDeps,
    ExactDeps,
    Get,
    Set,
    VertexId,
    conflicts,
    expand_deps,
    union_deps,
)
from graphsmr.depservice import DepServiceNode
from graphsmr.messages import DepReply, DepRequest, Send


def wr(key=b"k"):
    # fresh write command factory; client identity is irrelevant here
    counter = itertools.count(1)

    def make(seq=None):
        return Command("c", seq if seq is not None else next(counter), Set(key, b"v"))

    return make


def test_five_command_state_exact_mode():
    # commands a..e at (0,1), (0,0), (1,2), (1,0), (2,1), all on one key
    node = DepServiceNode("d0", num_leaders=4)
    stored = [(0, 1), (0, 0), (1, 2), (1, 0), (2, 1)]
    for i, (leader, seq) in enumerate(stored):
        node.handle_dep_request(VertexId(leader, seq), Command("c", i + 1, Set(b"k", b"v")))
    deps = node.handle_dep_request(VertexId(3, 0), Command("x", 1, Set(b"k", b"v")))
    assert deps == ExactDeps(frozenset(VertexId(l, s) for l, s in stored))


def test_five_command_state_compact_mode():
    node = DepServiceNode("d0", num_leaders=3, compact=True)
    stored = [(0, 1), (0, 0), (1, 2), (1, 0), (2, 1)]
    for i, (leader, seq) in enumerate(stored):
        node.handle_dep_request(VertexId(leader, seq), Command("c", i + 1, Set(b"k", b"v")))
    deps = node.handle_dep_request(VertexId(2, 5), Command("x", 1, Set(b"k", b"v")))
    assert deps == CompactDeps((1, 2, 1))
    assert len(expand_deps(deps)) == 7


def test_empty_state_returns_empty_deps():
    node = DepServiceNode("d0", num_leaders=2)
    deps = node.handle_dep_request(VertexId(0, 0), Command("c", 1, Set(b"k", b"v")))
    assert expand_deps(deps) == frozenset()


def test_duplicate_request_returns_cached_reply():
    node = DepServiceNode("d0", num_leaders=2)
    v0, v1 = VertexId(0, 0), VertexId(1, 0)
    first = node.handle_dep_request(v0, Command("c", 1, Set(b"k", b"v")))
    node.handle_dep_request(v1, Command("c", 2, Set(b"k", b"v")))
    again = node.handle_dep_request(v0, Command("c", 1, Set(b"k", b"v")))
    assert again == first == ExactDeps(frozenset())


def test_read_depends_only_on_writes():
    node = DepServiceNode("d0", num_leaders=2)
    node.handle_dep_request(VertexId(0, 0), Command("c", 1, Get(b"k")))
    node.handle_dep_request(VertexId(0, 1), Command("c", 2, Set(b"k", b"v")))
    deps = node.handle_dep_request(VertexId(1, 0), Command("d", 1, Get(b"k")))
    assert expand_deps(deps) == {VertexId(0, 1)}


def test_excludes_own_vertex():
    node = DepServiceNode("d0", num_leaders=2)
    v = VertexId(0, 0)
    deps = node.handle_dep_request(v, Command("c", 1, Set(b"k", b"v")))
    assert v not in expand_deps(deps)


def test_on_message_replies_to_sender():
    node = DepServiceNode("d0", num_leaders=2)
    v = VertexId(0, 0)
    cmd = Command("c", 1, Set(b"k", b"v"))
    out = node.on_message("leader-0", DepRequest(v, cmd), now=0.0)
    assert out == [Send("leader-0", DepReply(v, cmd, ExactDeps(frozenset())))]


# random single-key command streams: every pair conflicts unless both read
cmd_entries = st.lists(
    st.tuples(st.sampled_from(["r", "w"]), st.integers(0, 2)),
    min_size=1,
    max_size=8,
)


def _build_cmds(entries):
    cmds = []
    for i, (kind, leader) in enumerate(entries):
        op = Get(b"k") if kind == "r" else Set(b"k", b"v")
        cmds.append((VertexId(leader, i), Command(f"c{leader}", i + 1, op)))
    return cmds


@given(cmd_entries)
def test_local_ordering_property(entries):
    # if one node processed (v_x, x) then (v_y, y) and they conflict,
    # its reply for v_y contains v_x
    node = DepServiceNode("d0", num_leaders=3)
    replies = {}
    cmds = _build_cmds(entries)
    for v, cmd in cmds:
        replies[v] = node.handle_dep_request(v, cmd)
    for i, (vx, x) in enumerate(cmds):
        for vy, y in cmds[i + 1 :]:
            if conflicts(x, y):
                assert vx in expand_deps(replies[vy])


@given(cmd_entries)
def test_compact_reply_superset_of_exact(entries):
    exact = DepServiceNode("d0", num_leaders=3)
    compact = DepServiceNode("d1", num_leaders=3, compact=True)
    for v, cmd in _build_cmds(entries):
        e = exact.handle_dep_request(v, cmd)
        c = compact.handle_dep_request(v, cmd)
        assert expand_deps(e) <= expand_deps(c)


@given(
    cmd_entries,
    st.randoms(use_true_random=False),
)
def test_quorum_property_with_leader_aggregation(entries, rng):
    # deliver the same commands to 3 nodes in independent random orders,
    # aggregate each vertex's deps from a random f+1 quorum: any two
    # conflicting commands must end up with at least one edge between them
    nodes = [DepServiceNode(f"d{i}", num_leaders=3) for i in range(3)]
    cmds = _build_cmds(entries)
    per_node_replies = []
    for node in nodes:
        order = list(cmds)
        rng.shuffle(order)
        replies = {v: node.handle_dep_request(v, cmd) for v, cmd in order}
        per_node_replies.append(replies)

    aggregated = {}
    for v, _cmd in cmds:
        i, j = sorted(rng.sample(range(3), 2))
        aggregated[v] = union_deps(per_node_replies[i][v], per_node_replies[j][v])

    for i, (vx, x) in enumerate(cmds):
        for vy, y in cmds[i + 1 :]:
            if conflicts(x, y):
                assert vx in expand_deps(aggregated[vy]) or vy in expand_deps(
                    aggregated[vx]
                )
