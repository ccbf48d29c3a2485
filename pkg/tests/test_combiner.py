import pytest

from scionsim.combiner import CaseTag, combine, is_valid, most_disjoint
from scionsim.engine import Engine
from scionsim.generate import random_topology
from scionsim.oracle import enumerate_oracle, interface_route
from scionsim.path_server import LookupError_
from scionsim.segments import PathSegment, SegKind, invert
from scionsim.topology import parse_topology
from scionsim.world import SimConfig


def paths(engine, fig, src, dst):
    return engine.lookup_paths(fig.resolve(src), fig.resolve(dst))[0]


def names(fig, path):
    return [fig.node(a).label() for a in path.as_sequence]


def test_immediate(fig, fig_engine):
    found = paths(fig_engine, fig, "B", "D")
    assert [p.case_tag for p in found] == [CaseTag.IMMEDIATE]
    assert names(fig, found[0]) == ["B", "X", "C1", "D"]


def test_as_shortcut_shorter_than_immediate(fig, fig_engine):
    found = paths(fig_engine, fig, "B", "C")
    tags = [p.case_tag for p in found]
    assert tags[0] is CaseTag.AS_SHORTCUT
    immediate = [p for p in found if p.case_tag is CaseTag.IMMEDIATE]
    assert immediate and found[0].hop_count < min(p.hop_count for p in immediate)
    assert names(fig, found[0]) == ["B", "X", "C"]


def test_peering_shortcut_ranked_first(fig, fig_engine):
    found = paths(fig_engine, fig, "A", "B")
    assert found[0].case_tag is CaseTag.PEERING_SHORTCUT
    assert any(p.case_tag is CaseTag.CORE_COMBINED for p in found[1:])
    link = found[0].links(fig)[0]
    assert link.kind.name == "PEERING" and {link.a, link.b} == {fig.resolve("A"), fig.resolve("B")}


@pytest.mark.parametrize("dst", ["D", "I"])
def test_core_combined(fig, fig_engine, dst):
    found = paths(fig_engine, fig, "A", dst)
    assert found[0].case_tag is CaseTag.CORE_COMBINED
    core_isds = {a.isd for a in found[0].as_sequence if fig.node(a).is_core}
    assert core_isds == ({1} if dst == "D" else {1, 2})


def test_self_path(fig, fig_engine):
    (only,) = paths(fig_engine, fig, "B", "B")
    assert only.hop_count == 0 and only.parts == ()


def test_every_path_replays_on_topology(fig, fig_engine):
    for src in ("A", "B", "G", "K", "I", "H"):
        for dst in ("B", "C", "D", "I", "K", "H"):
            if src != dst:
                for p in paths(fig_engine, fig, src, dst):
                    assert is_valid(p, fig)
                    assert interface_route(p) in enumerate_oracle(fig, p.src, p.dst)


def test_most_disjoint_prefers_link_disjoint(fig, fig_engine):
    found = paths(fig_engine, fig, "K", "D")
    picked = most_disjoint(found, 2, fig)
    assert len(picked) == 2 and picked[0] is found[0]
    shared = {l.id for l in picked[0].links(fig)} & {l.id for l in picked[1].links(fig)}
    alternatives = [{l.id for l in p.links(fig)} & {l.id for l in found[0].links(fig)} for p in found[1:]]
    assert len(shared) == min(len(s) for s in alternatives)


def _segments(engine, as_id):
    return [s for s in engine.world[as_id].ps.up.all()]


def test_invert_involution(fig, fig_engine):
    for seg in _segments(fig_engine, fig.resolve("K")):
        back = invert(invert(seg))
        assert back == seg
        down = invert(seg)
        assert down.kind is SegKind.DOWN
        assert down.as_path()[0] == seg.as_path()[-1]


def test_single_hop_inversion(fig, fig_engine):
    pcb = next(iter(fig_engine.world[fig.resolve("X")].beacon.all_pcbs()))
    one = PathSegment.from_pcb(type(pcb)(pcb.info, pcb.hops[:1]), SegKind.DOWN)
    inv = invert(one)
    assert len(inv.hops) == 1 and inv.kind is SegKind.UP
    assert (inv.hops[0].ingress, inv.hops[0].egress) == (one.hops[0].egress, one.hops[0].ingress)


def test_up_core_hop_leads_down_segment(fig, fig_engine):
    for up in _segments(fig_engine, fig.resolve("G")):
        assert fig.node(up.last).is_core
        assert invert(up).first == up.last


LINE = """
isd 1
as 1-1 core=1
as 1-2
as 1-3
link 1-1 1 1-2 1 P2C
link 1-2 2 1-3 1 P2C
"""


def test_oracle_line_topology():
    topo = parse_topology(LINE)
    a, x, y = sorted(topo.ases)
    # the only other candidate, x -> core -> x -> y, revisits x
    assert enumerate_oracle(topo, x, y) == {((x, 0, 2), (y, 1, 0))}
    assert enumerate_oracle(topo, y, a) == {((y, 0, 1), (x, 2, 1), (a, 1, 0))}


def test_oracle_self():
    topo = parse_topology(LINE)
    a = min(topo.ases)
    assert enumerate_oracle(topo, a, a) == {((a, 0, 0),)}


def test_combine_without_segments():
    topo = parse_topology(LINE)
    a, x, y = sorted(topo.ases)
    assert combine([], [], [], x, y, topo) == []


def _converged(topo, seed, config=None, step=15.0, limit=600.0):
    """Run beaconing until the registered segment sets stop changing."""
    engine = Engine(topo, config or SimConfig(), seed=seed)
    last, t = None, step * 2
    while t <= limit:
        engine.run(until=t)
        snap = {a: frozenset(s.route() for s in engine.world[a].ps.up.all()) for a in topo.ases}
        if snap == last:
            return engine
        last, t = snap, t + step
    raise AssertionError("beaconing did not converge by %s s" % limit)


@pytest.mark.parametrize("seed", range(0, 100, 4))
def test_combined_paths_are_valley_free(seed):
    topo = random_topology(seed)
    engine = _converged(topo, seed)
    for src in sorted(topo.ases):
        for dst in sorted(topo.ases):
            try:
                found, _ = engine.lookup_paths(src, dst)
            except LookupError_:
                continue
            oracle = enumerate_oracle(topo, src, dst)
            for p in found:
                assert interface_route(p) in oracle, (src, dst, p.case_tag)
