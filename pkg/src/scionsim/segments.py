"""
:mod:`segments` --- up, down and core path segments
===================================================

A segment lists its hops in travel order, with ingress/egress seen in
that direction. ``consdir`` records whether travel order equals the order
in which the beacon was built; opaque fields are never rewritten, the
router interprets them according to that flag.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .beaconing import Pcb, PcbInfo
from .opaque import OpaqueField
from .topology import AsId, Topology


class SegKind(enum.Enum):
    UP = "UP"
    DOWN = "DOWN"
    CORE = "CORE"


@dataclass(frozen=True)
class SegHop:
    as_id: AsId
    ingress: int
    egress: int
    of: OpaqueField
    peers: tuple = ()


@dataclass(frozen=True)
class PathSegment:
    kind: SegKind
    info: PcbInfo
    hops: tuple
    consdir: bool = True
    pcb: Pcb | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_pcb(cls, pcb: Pcb, kind: SegKind = SegKind.DOWN) -> "PathSegment":
        """Build the segment for a terminated beacon (last hop egress none).

        ``DOWN`` and ``CORE`` keep construction order; ``UP`` is the inverse.
        """
        hops = tuple(SegHop(h.as_id, h.ingress_if, h.egress_if, h.of, h.peers) for h in pcb.hops)
        if kind is SegKind.UP:
            return invert(cls(SegKind.DOWN, pcb.info, hops, True, pcb))
        return cls(kind, pcb.info, hops, True, pcb)

    @property
    def first(self) -> AsId:
        return self.hops[0].as_id

    @property
    def last(self) -> AsId:
        return self.hops[-1].as_id

    @property
    def expiry(self) -> float:
        return min(h.of.expires_at(self.info.timestamp) for h in self.hops)

    def as_path(self) -> tuple:
        return tuple(h.as_id for h in self.hops)

    def construction_hops(self) -> tuple:
        return self.hops if self.consdir else self.hops[::-1]

    def identity(self) -> tuple:
        return (self.kind, self.consdir, self.info.timestamp, self.info.origin) + tuple(
            (h.as_id, h.of.pack()) for h in self.hops)

    def route(self) -> tuple:
        """Kind plus interface sequence; equal for refreshed copies of the same path."""
        return (self.kind,) + tuple((h.as_id, h.ingress, h.egress) for h in self.hops)

    def uses_interface(self, as_id: AsId, ifid: int) -> bool:
        for h in self.hops:
            if h.as_id == as_id and (ifid in (h.ingress, h.egress) or any(p.local_if == ifid for p in h.peers)):
                return True
        return False

    def interface_pairs(self) -> frozenset:
        return frozenset((h.as_id, i) for h in self.hops for i in (h.ingress, h.egress) if i)

    def is_contiguous(self, topo: Topology) -> bool:
        for a, b in zip(self.hops, self.hops[1:]):
            link = topo.link_at(a.as_id, a.egress)
            if link is None or link.other(a.as_id)[0] != b.as_id or link.other(a.as_id)[2] != b.ingress:
                return False
        return True

    def orientation_ok(self, topo: Topology) -> bool:
        if self.kind is SegKind.UP:
            return topo.ases[self.last].is_core and self.hops[-1].egress == 0
        if self.kind is SegKind.DOWN:
            return topo.ases[self.first].is_core and self.hops[0].ingress == 0
        return all(topo.ases[h.as_id].is_core for h in self.hops)


def invert(segment: PathSegment) -> PathSegment:
    """Reverse travel direction; UP and DOWN swap, CORE stays CORE."""
    hops = tuple(SegHop(h.as_id, h.egress, h.ingress, h.of, h.peers) for h in reversed(segment.hops))
    kind = {SegKind.UP: SegKind.DOWN, SegKind.DOWN: SegKind.UP}.get(segment.kind, segment.kind)
    return PathSegment(kind, segment.info, hops, not segment.consdir, segment.pcb)
