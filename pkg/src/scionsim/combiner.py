"""
:mod:`combiner` --- end-to-end paths from up, core and down segments
====================================================================

A path is a list of parts, one per segment used, each holding its opaque
fields in construction order. Two kinds of opaque field are carried only so
that the next one's chained MAC can be checked and are skipped when
forwarding:

* the field just before the truncation point of a shortcut segment
  (the part's info field has the shortcut flag), and
* the regular field of the AS right after its peering field.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .opaque import (INFO_CONSDIR, INFO_PEERING, INFO_SHORTCUT, KIND_CORE, KIND_DOWN, KIND_SHIFT, KIND_UP,
                     InfoField, OpaqueField)
from .segments import PathSegment, SegKind, invert
from .topology import AsId, Topology


class CaseTag(enum.IntEnum):
    IMMEDIATE = 0
    AS_SHORTCUT = 1
    PEERING_SHORTCUT = 2
    CORE_COMBINED = 3

    @property
    def rank(self) -> int:
        return {0: 0, 1: 1, 2: 1, 3: 2}[int(self)]


_KIND_BITS = {SegKind.UP: KIND_UP, SegKind.DOWN: KIND_DOWN, SegKind.CORE: KIND_CORE}


@dataclass(frozen=True)
class PathPart:
    info: InfoField
    ases: tuple  # owner AS of each opaque field, construction order
    ofs: tuple

    def verify_only(self) -> tuple:
        return verify_only_mask(self.info, self.ofs)

    def traversal(self) -> list[int]:
        """Indices of forwarding fields in travel order."""
        mask = self.verify_only()
        idx = [i for i in range(len(self.ofs)) if not mask[i]]
        return idx if self.info.consdir else idx[::-1]

    def travel_hops(self):
        for i in self.traversal():
            of = self.ofs[i]
            ing, eg = (of.ingress, of.egress) if self.info.consdir else (of.egress, of.ingress)
            yield self.ases[i], ing, eg, of

    def reversed(self) -> "PathPart":
        return PathPart(InfoField(self.info.timestamp, self.info.isd, self.info.flags ^ INFO_CONSDIR,
                                  self.info.hops), self.ases, self.ofs)


def verify_only_mask(info: InfoField, ofs) -> tuple:
    mask = [False] * len(ofs)
    if info.shortcut and ofs:
        mask[0] = True
    for i in range(1, len(ofs)):
        if ofs[i - 1].peering:
            mask[i] = True
    return tuple(mask)


def prior_of(ofs, index: int) -> OpaqueField | None:
    """The field the MAC at ``index`` is chained to: nearest earlier non-peering field."""
    for j in range(index - 1, -1, -1):
        if not ofs[j].peering:
            return ofs[j]
    return None


@dataclass(frozen=True)
class EndToEndPath:
    case_tag: CaseTag
    parts: tuple
    src: AsId
    dst: AsId

    @property
    def hops(self) -> tuple:
        return tuple(h for p in self.parts for h in p.travel_hops())

    @property
    def boundaries(self) -> tuple:
        out, n = [], 0
        for p in self.parts:
            n += len(p.traversal())
            out.append(n)
        return tuple(out)

    @property
    def expiry(self) -> float:
        if not self.parts:
            return float("inf")
        return min(of.expires_at(p.info.timestamp) for p in self.parts for of in p.ofs)

    @property
    def as_sequence(self) -> tuple:
        seq = []
        for as_id, _, _, _ in self.hops:
            if not seq or seq[-1] != as_id:
                seq.append(as_id)
        return tuple(seq) or (self.src,)

    @property
    def hop_count(self) -> int:
        return len(self.as_sequence) - 1

    @property
    def isds(self) -> frozenset:
        return frozenset(a.isd for a in self.as_sequence)

    def links(self, topo: Topology) -> list:
        """Inter-AS links traversed, in order."""
        out = []
        hops = self.hops
        for a, b in zip(hops, hops[1:]):
            if a[0] != b[0]:
                out.append(topo.link_at(a[0], a[2]))
        return out

    def reversed(self) -> "EndToEndPath":
        return EndToEndPath(self.case_tag, tuple(p.reversed() for p in reversed(self.parts)), self.dst, self.src)

    def key(self) -> tuple:
        return tuple((p.info.pack(), p.ases, tuple(of.pack() for of in p.ofs)) for p in self.parts)

    def rank_key(self):
        return (self.hop_count, -self.expiry, self.case_tag.rank, int(self.case_tag),
                self.as_sequence, self.key())


def is_valid(path: EndToEndPath, topo: Topology) -> bool:
    """Replay the hop list against the topology: adjacency, interfaces, loop freedom, endpoints."""
    seq = path.as_sequence
    if len(set(seq)) != len(seq) or seq[0] != path.src or seq[-1] != path.dst:
        return False
    hops = path.hops
    for a, b in zip(hops, hops[1:]):
        if a[0] == b[0]:
            continue
        link = topo.link_at(a[0], a[2])
        if link is None or link.other(a[0])[0] != b[0] or link.other(a[0])[2] != b[1]:
            return False
    return True


def _info(seg: PathSegment, consdir: bool, n: int, shortcut=False, peering=False) -> InfoField:
    flags = (INFO_CONSDIR if consdir else 0) | (INFO_SHORTCUT if shortcut else 0) | (INFO_PEERING if peering else 0)
    flags |= _KIND_BITS[seg.kind] << KIND_SHIFT
    return InfoField(seg.info.timestamp, seg.info.isd, flags, n)


def full_part(seg: PathSegment) -> PathPart:
    cons = seg.construction_hops()
    return PathPart(_info(seg, seg.consdir, len(cons)), tuple(h.as_id for h in cons), tuple(h.of for h in cons))


def truncated_part(seg: PathSegment, at: AsId) -> PathPart:
    """Keep the construction-order tail of ``seg`` starting at ``at``."""
    cons = seg.construction_hops()
    j = [h.as_id for h in cons].index(at)
    start = max(j - 1, 0)
    kept = cons[start:]
    return PathPart(_info(seg, seg.consdir, len(kept), shortcut=j > 0),
                    tuple(h.as_id for h in kept), tuple(h.of for h in kept))


def peered_part(seg: PathSegment, at: AsId, entry) -> PathPart:
    cons = seg.construction_hops()
    j = [h.as_id for h in cons].index(at)
    ases, ofs = [], []
    if j > 0:
        ases.append(cons[j - 1].as_id)
        ofs.append(cons[j - 1].of)
    ases.append(at)
    ofs.append(entry.of)
    if j + 1 < len(cons):
        for h in cons[j:]:
            ases.append(h.as_id)
            ofs.append(h.of)
    return PathPart(_info(seg, seg.consdir, len(ofs), shortcut=j > 0, peering=True), tuple(ases), tuple(ofs))


def _orient_core(c: PathSegment, start: AsId, end: AsId) -> PathSegment | None:
    if c.first == start and c.last == end:
        return c
    if c.last == start and c.first == end:
        return invert(c)
    return None


def combine(ups, cores, downs, src: AsId, dst: AsId, topo: Topology | None = None) -> list[EndToEndPath]:
    """All end-to-end paths obtainable from the given segments, best first."""
    if src == dst:
        return [EndToEndPath(CaseTag.IMMEDIATE, (), src, dst)]
    src_core = topo.ases[src].is_core if topo else not ups
    dst_core = topo.ases[dst].is_core if topo else not downs
    up_opts = list(ups) + ([None] if src_core else [])
    down_opts = list(downs) + ([None] if dst_core else [])
    found: dict[tuple, EndToEndPath] = {}

    def add(tag, parts):
        path = EndToEndPath(tag, tuple(parts), src, dst)
        seq = path.as_sequence
        if len(set(seq)) != len(seq) or seq[0] != src or seq[-1] != dst:
            return
        if topo is not None and not is_valid(path, topo):
            return
        key = path.key()
        if key not in found or path.rank_key() < found[key].rank_key():
            found[key] = path

    for u in up_opts:
        if u is not None and dst in u.as_path():
            add(CaseTag.AS_SHORTCUT, [truncated_part(u, dst)])
        for d in down_opts:
            if d is not None and src in d.as_path():
                add(CaseTag.AS_SHORTCUT, [truncated_part(d, src)])
            u_core = u.last if u is not None else src
            d_core = d.first if d is not None else dst
            head = [full_part(u)] if u is not None else []
            tail = [full_part(d)] if d is not None else []
            if u_core == d_core:
                if head or tail:
                    add(CaseTag.IMMEDIATE, head + tail)
            else:
                for c in cores:
                    oc = _orient_core(c, u_core, d_core)
                    if oc is not None:
                        add(CaseTag.CORE_COMBINED, head + [full_part(oc)] + tail)
            if u is None or d is None:
                continue
            d_ases = set(d.as_path())
            for hop in u.hops:
                x = hop.as_id
                if x in d_ases and x not in (src, dst) and (topo is None or not topo.ases[x].is_core):
                    if topo is None and x in (u.last, d.first):
                        continue
                    add(CaseTag.AS_SHORTCUT, [truncated_part(u, x), truncated_part(d, x)])
            for hu in u.hops:
                for pu in hu.peers:
                    for hd in d.hops:
                        if hd.as_id != pu.peer:
                            continue
                        for pd in hd.peers:
                            if pd.peer == hu.as_id and pd.local_if == pu.peer_if and pd.peer_if == pu.local_if:
                                add(CaseTag.PEERING_SHORTCUT, [peered_part(u, hu.as_id, pu),
                                                               peered_part(d, hd.as_id, pd)])
    return sorted(found.values(), key=EndToEndPath.rank_key)


def most_disjoint(paths: list[EndToEndPath], n: int, topo: Topology) -> list[EndToEndPath]:
    """Greedy pick of up to ``n`` paths, each minimizing shared links with those already chosen."""
    chosen: list[EndToEndPath] = []
    link_sets = {p.key(): frozenset(l.id for l in p.links(topo)) for p in paths}
    for _ in range(min(n, len(paths))):
        used = set().union(*(link_sets[c.key()] for c in chosen)) if chosen else set()
        rest = [p for p in paths if p not in chosen]
        best = min(rest, key=lambda p: (len(link_sets[p.key()] & used), p.rank_key()))
        chosen.append(best)
    return chosen
