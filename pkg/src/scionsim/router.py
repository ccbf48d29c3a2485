"""
:mod:`router` --- border router forwarding
==========================================

The forwarding decision sees only the packet header, the arrival
interface, the AS's own secrets and the liveness of the AS's own links.
There is no routing table, and transit ASes never read addresses.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from .combiner import prior_of
from .crypto import AsSecrets
from .header import HeaderError, PacketHeader, decode_header, first_position, traversal
from .opaque import OfRejected, verify_of
from .topology import AsId


class Verdict(enum.Enum):
    FORWARD = "FORWARD"
    DELIVER = "DELIVER"
    DROP = "DROP"


@dataclass
class Action:
    verdict: Verdict
    header: PacketHeader | None = None
    egress_if: int = 0
    reason: str = ""
    revoked: tuple | None = None  # (AsId, ifid) the caller should report
    deliver_to: bytes | None = None


def forward(as_id: AsId, secrets: AsSecrets, link_state: Callable[[int], bool | None], packet,
            arrival_if: int, now: float, stats: Counter | None = None,
            default_host: bytes | None = None) -> Action:
    """Process one packet at ``as_id``.

    ``packet`` is a :class:`PacketHeader` or its wire bytes. ``arrival_if``
    is 0 for a packet handed over by a host inside the AS; hosts may only
    inject at the first position of the path. ``link_state(ifid)`` returns
    True/False for the AS's interfaces and None for interfaces it lacks.
    """
    stats = stats if stats is not None else Counter()
    if isinstance(packet, (bytes, bytearray)):
        try:
            hdr = decode_header(bytes(packet))
        except (HeaderError, ValueError):
            stats["drop:parse"] += 1
            return Action(Verdict.DROP, reason="parse")
    else:
        hdr = packet
    if not hdr.parts:
        return _deliver(hdr, default_host, stats)
    at_start = arrival_if == 0 and (hdr.info_idx, hdr.of_idx) == first_position(hdr.parts)
    return _process(as_id, secrets, link_state, hdr, None if at_start else arrival_if, now, stats, default_host)


def _deliver(hdr, default_host, stats):
    dst = hdr.read_dst() if hdr.dst_raw else default_host
    if dst is None:
        stats["drop:no-destination"] += 1
        return Action(Verdict.DROP, hdr, reason="no-destination")
    return Action(Verdict.DELIVER, hdr, deliver_to=dst)


def _process(as_id, secrets, link_state, hdr, arrival, now, stats, default_host):
    info, ofs = hdr.parts[hdr.info_idx]
    trav = traversal(info, ofs)
    if hdr.of_idx not in trav:
        stats["drop:parse"] += 1
        return Action(Verdict.DROP, hdr, reason="parse")
    of = ofs[hdr.of_idx]
    try:
        verify_of(secrets, of, prior_of(ofs, hdr.of_idx), now, info.timestamp, arrival, info.consdir)
    except OfRejected as exc:
        stats["drop:" + exc.reason] += 1
        return Action(Verdict.DROP, hdr, reason=exc.reason)
    pos = trav.index(hdr.of_idx)
    if pos + 1 < len(trav):
        out = of.egress if info.consdir else of.ingress
        return _egress(as_id, link_state, hdr.at(hdr.info_idx, trav[pos + 1]), out, stats)
    nxt = _next_part(hdr)
    if of.peering and not info.consdir:
        # leaving over the peering link; the next part starts at the peer
        if nxt is None:
            stats["drop:parse"] += 1
            return Action(Verdict.DROP, hdr, reason="parse")
        return _egress(as_id, link_state, hdr.at(*nxt), of.ingress, stats)
    if nxt is None:
        return _deliver(hdr, default_host, stats)
    # segment switch inside this AS: no arrival interface to check
    return _process(as_id, secrets, link_state, hdr.at(*nxt), None, now, stats, default_host)


def _next_part(hdr):
    for p in range(hdr.info_idx + 1, len(hdr.parts)):
        info, ofs = hdr.parts[p]
        trav = traversal(info, ofs)
        if trav:
            return p, trav[0]
    return None


def _egress(as_id, link_state, hdr, out_if, stats):
    state = link_state(out_if) if out_if else None
    if state is None:
        stats["drop:no-interface"] += 1
        return Action(Verdict.DROP, hdr, egress_if=out_if, reason="no-interface")
    if not state:
        stats["drop:link-down"] += 1
        return Action(Verdict.DROP, hdr, egress_if=out_if, reason="link-down", revoked=(as_id, out_if))
    return Action(Verdict.FORWARD, hdr, egress_if=out_if)
