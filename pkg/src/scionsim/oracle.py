"""
:mod:`oracle` --- brute-force path enumeration
==============================================

Independent reference computations over the topology graph alone, used
to check what beaconing and path combination discover. Nothing here looks
at beacons, segments or keys.
"""
from __future__ import annotations

from .segments import SegKind
from .topology import AsId, LinkType, Topology


def _links(topo: Topology, as_id: AsId, kind: LinkType, alive):
    for ifid, link in sorted(topo.node(as_id).interfaces.items()):
        if link.kind is kind and alive(link):
            yield link


def down_chains(topo: Topology, alive=lambda link: True) -> set:
    """Every beacon route from a core AS down provider-to-customer links.

    A route is a tuple of (AS, ingress, egress) in construction order, the
    last hop having egress 0. A route of ISD ``i`` only enters members of
    ``i`` and is not carried further by an AS that is itself core in ``i``.
    """
    out = set()
    for isd in sorted(topo.isds):
        for core in topo.core_ases(isd):
            _walk_from(topo, isd, core, alive, out)
    return out


def _walk_from(topo, isd, core, alive, out):
    def rec(hops, last_as, last_in, seen):
        for link in _links(topo, last_as, LinkType.PROVIDER_TO_CUSTOMER, alive):
            if link.a != last_as:
                continue
            child, local_if, child_if = link.other(last_as)
            node = topo.node(child)
            if child in seen or isd not in node.member_of:
                continue
            done = hops + ((last_as, last_in, local_if),)
            out.add((isd, done + ((child, child_if, 0),)))
            if isd not in node.core_in:
                rec(done, child, child_if, seen | {child})

    rec((), core, 0, {core})


def up_chains(topo: Topology, as_id: AsId, alive=lambda link: True) -> set:
    """Routes of all up-segments of ``as_id`` in the form ``PathSegment.route()`` uses."""
    out = set()
    for isd, route in down_chains(topo, alive):
        if route[-1][0] == as_id:
            out.add((SegKind.UP,) + tuple((a, e, i) for a, i, e in reversed(route)))
    return out


def _up_runs(topo, src, alive):
    """Loop-free climbs from ``src`` over customer-to-provider links, as hop lists."""
    out = [((src,), ())]
    stack = [((src,), ())]
    while stack:
        ases, ifs = stack.pop()
        here = ases[-1]
        for link in _links(topo, here, LinkType.PROVIDER_TO_CUSTOMER, alive):
            if link.b != here:
                continue
            parent, local_if, parent_if = link.other(here)
            if parent in ases:
                continue
            item = (ases + (parent,), ifs + ((local_if, parent_if),))
            out.append(item)
            stack.append(item)
    return out


def _core_runs(topo, start, alive):
    out = []
    stack = [((start,), ())]
    while stack:
        ases, ifs = stack.pop()
        here = ases[-1]
        for link in _links(topo, here, LinkType.CORE, alive):
            nxt, local_if, remote_if = link.other(here)
            if nxt in ases:
                continue
            item = (ases + (nxt,), ifs + ((local_if, remote_if),))
            out.append(item)
            stack.append(item)
    return out


def _route(ases, ifs):
    """Join an AS list and per-link (out, in) interface pairs into (AS, ingress, egress) hops."""
    hops = []
    for i, a in enumerate(ases):
        ing = ifs[i - 1][1] if i > 0 else 0
        eg = ifs[i][0] if i < len(ifs) else 0
        hops.append((a, ing, eg))
    return tuple(hops)


def enumerate_oracle(topo: Topology, src: AsId, dst: AsId, alive=lambda link: True) -> set:
    """All loop-free valley-free routes from ``src`` to ``dst`` at interface level.

    Climb provider links, optionally cross one peering link or a run of
    core links between core ASes, then descend customer links.
    """
    if src == dst:
        return {((src, 0, 0),)}
    ups = _up_runs(topo, src, alive)
    downs: dict = {}
    for ases, ifs in _up_runs(topo, dst, alive):
        top = ases[-1]
        rev = (tuple(reversed(ases)), tuple((b, a) for a, b in reversed(ifs)))
        downs.setdefault(top, []).append(rev)
    out = set()

    def emit(ases, ifs):
        if len(set(ases)) == len(ases):
            out.add(_route(ases, ifs))

    for u_ases, u_ifs in ups:
        top = u_ases[-1]
        for d_ases, d_ifs in downs.get(top, ()):
            emit(u_ases + d_ases[1:], u_ifs + d_ifs)
        for link in _links(topo, top, LinkType.PEERING, alive):
            peer, local_if, peer_if = link.other(top)
            for d_ases, d_ifs in downs.get(peer, ()):
                emit(u_ases + d_ases, u_ifs + ((local_if, peer_if),) + d_ifs)
        if topo.node(top).is_core:
            for c_ases, c_ifs in _core_runs(topo, top, alive):
                for d_ases, d_ifs in downs.get(c_ases[-1], ()):
                    emit(u_ases + c_ases[1:] + d_ases[1:], u_ifs + c_ifs + d_ifs)
    return out


def interface_route(path) -> tuple:
    """(AS, ingress, egress) per AS along an end-to-end path, junctions merged.

    Interfaces are the ones a packet crosses, so the source has no ingress
    and the destination no egress even when their opaque fields name one.
    """
    merged: list = []
    for as_id, ing, eg, _ in path.hops:
        if merged and merged[-1][0] == as_id:
            merged[-1] = (as_id, merged[-1][1], eg)
        else:
            merged.append((as_id, ing, eg))
    if not merged:
        return ((path.src, 0, 0),)
    merged[0] = (merged[0][0], 0, merged[0][2])
    merged[-1] = (merged[-1][0], merged[-1][1], 0)
    return tuple(merged)
