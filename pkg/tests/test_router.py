from collections import Counter
from dataclasses import replace

import pytest

from scionsim.header import PacketHeader, header_for_path, reverse_header
from scionsim.router import Verdict, forward

SRC, DST = bytes((10, 0, 0, 1)), bytes((10, 0, 0, 2))


def walk(engine, start, hdr, down=frozenset(), limit=20):
    """Carry a header hop by hop; returns (final action, ASes visited, stats)."""
    topo, stats = engine.topo, Counter()
    at, arrival, visited = start, 0, []
    for _ in range(limit):
        visited.append(at)
        state = lambda ifid, a=at: None if topo.link_at(a, ifid) is None else (a, ifid) not in down
        act = forward(at, engine.world[at].secrets, state, hdr, arrival, engine.now, stats)
        if act.verdict is not Verdict.FORWARD:
            return act, visited, stats
        remote, _, remote_if = topo.link_at(at, act.egress_if).other(at)
        at, arrival, hdr = remote, remote_if, act.header
    raise AssertionError("forwarding loop")


def first_path(engine, fig, src, dst):
    paths, _ = engine.lookup_paths(fig.resolve(src), fig.resolve(dst))
    return paths[0]


def test_immediate_path_delivers(fig, fig_engine):
    path = first_path(fig_engine, fig, "B", "D")
    act, visited, stats = walk(fig_engine, path.src, header_for_path(path, SRC, DST))
    assert act.verdict is Verdict.DELIVER and act.deliver_to == DST
    assert visited == list(path.as_sequence) and len(visited) == 4
    assert not stats


@pytest.mark.parametrize("src, dst", [("B", "C"), ("A", "B"), ("A", "D"), ("A", "I"), ("K", "H"), ("D", "I")])
def test_every_case_delivers_and_replies(fig, fig_engine, src, dst):
    for path in fig_engine.lookup_paths(fig.resolve(src), fig.resolve(dst))[0]:
        act, visited, _ = walk(fig_engine, path.src, header_for_path(path, SRC, DST))
        assert act.verdict is Verdict.DELIVER
        assert visited == list(path.as_sequence)
        back, rvisited, _ = walk(fig_engine, path.dst, reverse_header(act.header))
        assert back.verdict is Verdict.DELIVER and back.deliver_to == SRC
        assert rvisited == visited[::-1]


def test_transit_never_reads_addresses(fig, fig_engine):
    path = first_path(fig_engine, fig, "A", "I")
    hdr = header_for_path(path, SRC, DST)
    topo, at, arrival = fig_engine.topo, path.src, 0
    while True:
        act = forward(at, fig_engine.world[at].secrets, lambda i: True, hdr, arrival, fig_engine.now)
        if act.verdict is not Verdict.FORWARD:
            break
        assert act.header.address_reads == 0
        remote, _, arrival = topo.link_at(at, act.egress_if).other(at)
        at, hdr = remote, act.header
    assert act.verdict is Verdict.DELIVER and act.header.address_reads == 1


def _tamper(hdr: PacketHeader, part, index):
    info, ofs = hdr.parts[part]
    ofs = list(ofs)
    ofs[index] = replace(ofs[index], mac=ofs[index].mac ^ 1)
    parts = list(hdr.parts)
    parts[part] = (info, tuple(ofs))
    return replace(hdr, parts=tuple(parts))


@pytest.mark.parametrize("src, dst", [("B", "D"), ("A", "B"), ("A", "I")])
def test_tampered_field_dropped_by_owner_or_chained_successor(fig, fig_engine, src, dst):
    # each field's MAC covers its construction-order predecessor
    path = first_path(fig_engine, fig, src, dst)
    for p, part in enumerate(path.parts):
        for i, owner in enumerate(part.ases):
            act, visited, stats = walk(fig_engine, path.src, _tamper(header_for_path(path, SRC, DST), p, i))
            assert act.verdict is Verdict.DROP and act.reason == "mac"
            assert visited[-1] in part.ases[i:i + 2]


def test_wrong_arrival_interface(fig, fig_engine):
    path = first_path(fig_engine, fig, "B", "D")
    hdr = header_for_path(path, SRC, DST)
    act = forward(path.src, fig_engine.world[path.src].secrets, lambda i: True, hdr, 0, fig_engine.now)
    x = fig.resolve("X")
    bad = forward(x, fig_engine.world[x].secrets, lambda i: True, act.header, 3, fig_engine.now)
    assert (bad.verdict, bad.reason) == (Verdict.DROP, "wrong-interface")


def test_down_link_reports_revocation(fig, fig_engine):
    path = first_path(fig_engine, fig, "B", "D")
    x = fig.resolve("X")
    act, visited, stats = walk(fig_engine, path.src, header_for_path(path, SRC, DST), down={(x, 1)})
    assert (act.verdict, act.reason, act.revoked) == (Verdict.DROP, "link-down", (x, 1))
    assert stats["drop:link-down"] == 1


def test_garbage_bytes_dropped(fig, fig_engine):
    b = fig.resolve("B")
    act = forward(b, fig_engine.world[b].secrets, lambda i: True, b"\x00" * 5, 0, 0.0)
    assert (act.verdict, act.reason) == (Verdict.DROP, "parse")
