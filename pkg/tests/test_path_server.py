from dataclasses import replace

import pytest

from scionsim.beaconing import extend_pcb, new_pcb
from scionsim.path_server import LookupError_, PathServer, SegmentStore
from scionsim.scmp import ScmpType, scmp_auth
from scionsim.segments import PathSegment, SegKind
from scionsim.topology import AsId, parse_topology
from scionsim.world import World


@pytest.fixture(scope="module")
def world(fig):
    return World(fig, seed=0)


def down(world, hops, now=0.0):
    """Terminated DOWN segment from (name, ingress, egress) triples, origin first."""
    topo = world.topo
    origin = topo.resolve(hops[0][0])
    pcb = new_pcb(origin, origin.isd, now)
    for name, ing, eg in hops:
        a = topo.resolve(name)
        pcb = extend_pcb(pcb, a, ing, eg, (), now, world[a].secrets)
    return PathSegment.from_pcb(pcb, SegKind.DOWN)


SEVEN = [
    [("C1", 0, 3), ("X", 1, 2), ("B", 1, 0)],
    [("C1", 0, 3), ("X", 1, 3), ("C", 1, 0)],
    [("C1", 0, 3), ("X", 1, 0)],
    [("C1", 0, 4), ("C", 2, 0)],
    [("C1", 0, 5), ("D", 1, 0)],
    [("C1", 0, 6), ("F", 1, 0)],
    [("C1", 0, 7), ("F", 2, 0)],
]


def fresh_ps(world, name, **kw):
    a = world.topo.resolve(name)
    s = world[a]
    return PathServer(a, world.topo, s.ctx, s.drkeys, **kw)


def test_registration_accepts_valid(world):
    ps = fresh_ps(world, "C1")
    assert ps.register([down(world, h) for h in SEVEN[:5]], 1.0) == 5


def test_expired_segment_rejected(world):
    ps = fresh_ps(world, "C1")
    seg = down(world, SEVEN[0])
    assert ps.register([seg], seg.expiry + 1) == 0
    assert ps.metrics["ps_register_rejected:expired"] == 1


def test_misdirected_segment_rejected(world):
    ps = fresh_ps(world, "X")
    assert ps.register([down(world, SEVEN[0])], 1.0) == 0


def _revocation(world, issuer, verifier, subject, now):
    return scmp_auth(world[issuer].secrets, verifier, ScmpType.REVOKE_INTERFACE, subject, now)


def test_revocation_purges_matching_segments(world):
    ps = fresh_ps(world, "C1")
    ps.register([down(world, h) for h in SEVEN], 1.0)
    c1 = world.topo.resolve("C1")
    purged = ps.process_revocation(_revocation(world, c1, c1, (c1, 3), 2.0), 2.0)
    assert purged == 3
    assert len(list(ps.all_segments())) == 4


def test_revocation_of_unused_interface(world):
    ps = fresh_ps(world, "C1")
    ps.register([down(world, h) for h in SEVEN], 1.0)
    c1 = world.topo.resolve("C1")
    assert ps.process_revocation(_revocation(world, c1, c1, (c1, 2), 2.0), 2.0) == 0


def test_forged_revocation_purges_nothing(world):
    ps = fresh_ps(world, "C1")
    ps.register([down(world, h) for h in SEVEN], 1.0)
    c1, k = world.topo.resolve("C1"), world.topo.resolve("K")
    forged = _revocation(world, k, c1, (c1, 3), 2.0)
    forged = replace(forged, issuer=c1)
    assert ps.process_revocation(forged, 2.0) == 0
    assert ps.metrics["ps_revocation_bad_proof"] == 1
    assert len(list(ps.all_segments())) == 7


def test_revoked_interface_blocks_reregistration(world):
    ps = fresh_ps(world, "C1")
    c1 = world.topo.resolve("C1")
    ps.process_revocation(_revocation(world, c1, c1, (c1, 3), 1.0), 1.0)
    assert ps.register([down(world, SEVEN[0], now=1.0)], 2.0) == 0


FAN = "isd 1\nas 1-1 core=1\nas 1-2\n" + "".join("link 1-1 %d 1-2 %d P2C\n" % (i, i) for i in range(1, 18))


def test_capacity_evicts_earliest_expiry():
    topo = parse_topology(FAN)
    w = World(topo, seed=0)
    core, leaf = sorted(topo.ases)
    ps = PathServer(core, topo, w[core].ctx, w[core].drkeys, capacity=16)
    segs = []
    for i in range(1, 18):
        pcb = extend_pcb(new_pcb(core, 1, i), core, 0, i, (), i, w[core].secrets)
        pcb = extend_pcb(pcb, leaf, i, 0, (), i, w[leaf].secrets)
        segs.append(PathSegment.from_pcb(pcb, SegKind.DOWN))
    ps.register(segs, 20.0)
    stored = ps.down.get(leaf, 20.0)
    assert len(stored) == 16
    assert min(segs, key=lambda s: s.expiry) not in stored


def test_store_refresh_and_stale():
    store = SegmentStore(4)
    topo = parse_topology(FAN)
    w = World(topo, seed=0)
    core, leaf = sorted(topo.ases)

    def seg(t):
        pcb = extend_pcb(new_pcb(core, 1, t), core, 0, 1, (), t, w[core].secrets)
        return PathSegment.from_pcb(extend_pcb(pcb, leaf, 1, 0, (), t, w[leaf].secrets), SegKind.DOWN)

    assert store.add(leaf, seg(5), 5) == "new"
    assert store.add(leaf, seg(9), 9) == "refresh"
    assert store.add(leaf, seg(7), 9) == "stale"
    assert len(store) == 1


def test_lookup_immediate_shares_core(fig, fig_engine):
    b, d = fig.resolve("B"), fig.resolve("D")
    reply = fig_engine.resolver.lookup(b, d, fig_engine.now)
    assert reply.up and reply.down
    assert {s.last for s in reply.up} & {s.first for s in reply.down}


def test_lookup_cross_isd(fig, fig_engine):
    reply = fig_engine.resolver.lookup(fig.resolve("A"), fig.resolve("I"), fig_engine.now)
    assert reply.up and reply.core and reply.down


def test_lookup_self_is_local(fig, fig_engine):
    d = fig.resolve("D")
    reply = fig_engine.resolver.lookup(d, d, fig_engine.now)
    assert (reply.down, reply.messages) == ([], 0)


def test_repeated_lookup_hits_cache(fig):
    from scionsim.engine import Engine
    from scionsim.world import SimConfig

    engine = Engine(fig, SimConfig(), seed=0)
    engine.run(until=90)
    src, dst = fig.resolve("K"), fig.resolve("I")
    first = engine.resolver.lookup(src, dst, engine.now)
    before = engine.metrics.get("ps_messages")
    second = engine.resolver.lookup(src, dst, engine.now + 1)
    assert first.messages > 0
    assert second.cached and second.messages == 0
    assert engine.metrics.get("ps_messages") == before
    assert [s.route() for s in second.segments()] == [s.route() for s in first.segments()]


def test_unknown_destination(fig, fig_engine):
    with pytest.raises(LookupError_, match="no such AS"):
        fig_engine.resolver.lookup(fig.resolve("B"), AsId(1, 999), fig_engine.now)
