import pytest

from scionsim.topology import AsId, LinkType, TopologyError, parse_topology, topological_order

BASE = """
isd 1
as 1-1 core=1
as 1-2
as 1-3
link 1-1 1 1-2 1 P2C
link 1-2 2 1-3 1 P2C
"""


def test_fig_counts(fig):
    assert len(fig.isds) == 4
    assert len(fig.ases) == 15
    kinds = [link.kind for link in fig.links.values()]
    assert kinds.count(LinkType.CORE) == 5
    assert kinds.count(LinkType.PEERING) == 2


def test_names_resolve(fig):
    assert fig.resolve("B") == AsId(1, 14)
    assert fig.resolve("1-14") == AsId(1, 14)
    with pytest.raises((KeyError, ValueError)):
        fig.resolve("nope")


def test_multi_isd_membership(fig):
    h = fig.node(fig.resolve("H"))
    assert h.member_of == {3, 4}


def test_parallel_links_kept(fig):
    f, c1 = fig.resolve("F"), fig.resolve("C1")
    parallel = [l for l in fig.links.values() if {l.a, l.b} == {f, c1}]
    assert len(parallel) == 2


def test_minimal_topology_parses():
    topo = parse_topology(BASE)
    assert topological_order(topo, 1)[0] == AsId(1, 1)


@pytest.mark.parametrize("text, fragment", [
    (BASE + "link 1-3 2 1-1 2 P2C\n", "core AS"),
    (BASE + "as 1-4\nlink 1-3 2 1-4 1 P2C\nlink 1-4 2 1-2 3 P2C\n", "customer DAG"),
    (BASE + "as 1-4\n", "unreachable"),
    ("as 1-1 core=1\n", "ISD"),
    (BASE + "link 1-2 1 1-3 5 P2C\n", "duplicate interface"),
    (BASE + "link 1-2 7 1-9 1 P2C\n", "undeclared"),
    (BASE + "link 1-2 7 1-3 7 FOO\n", "link kind"),
    (BASE + "link 1-2 7 1-3 7 CORE\n", "CORE link"),
])
def test_invalid_topologies(text, fragment):
    with pytest.raises(TopologyError, match=fragment):
        parse_topology(text)


def test_error_names_line():
    with pytest.raises(TopologyError) as info:
        parse_topology(BASE + "bogus line\n")
    assert info.value.line == len(BASE.splitlines()) + 1


def test_dumps_round_trip(fig):
    again = parse_topology(fig.dumps())
    assert again.structure() == fig.structure()
