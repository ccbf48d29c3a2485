"""
:mod:`beaconing` --- path construction beacons and beacon servers
=================================================================

PCB wire layout (signed material)::

    info (16 B): timestamp u32 | origin AS (6) | ISD u16 | flags u8 | hop count u8 | reserved u16
    hop record:  u16 body length | body | u16 signature length | signature
    hop body:    AS (6) | ingress u16 | egress u16 | opaque field (8) | TRC version u32
                 | cert version u32 | peer count u8 | peers (AS (6) | peer if u16 | local if u16 | OF (8))*

The signature of hop ``i`` covers the info block with the hop count zeroed,
every earlier hop record (body and signature), and hop ``i``'s own body.
"""
from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .crypto import AsSecrets, VerifyCache, sign
from .opaque import DEFAULT_EXPIRY_UNITS, OF_PEERING, OpaqueField, build_of
from .topology import AsId, Link, LinkType, Topology
from .trust import AsCert, TrcRejected, TrcStore, TrcUnavailable, update_trc, validate_cert_chain

PCB_INTRA = 0
PCB_CORE = 1
INFO_LEN = 16


class PcbInvalid(Exception):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class PeerEntry:
    peer: AsId
    peer_if: int
    local_if: int
    of: OpaqueField

    def pack(self) -> bytes:
        return self.peer.pack() + struct.pack("!HH", self.peer_if, self.local_if) + self.of.pack()


@dataclass(frozen=True)
class HopEntry:
    as_id: AsId
    ingress_if: int  # 0: none (segment origin)
    egress_if: int  # 0: none (segment terminus)
    of: OpaqueField
    peers: tuple = ()
    trc_version: int = 1
    cert_version: int = 1
    signature: bytes = b""

    def body(self) -> bytes:
        head = self.as_id.pack() + struct.pack("!HH", self.ingress_if, self.egress_if) + self.of.pack()
        tail = struct.pack("!IIB", self.trc_version, self.cert_version, len(self.peers))
        return head + tail + b"".join(p.pack() for p in self.peers)

    def record(self) -> bytes:
        body = self.body()
        return struct.pack("!H", len(body)) + body + struct.pack("!H", len(self.signature)) + self.signature

    def interfaces(self):
        yield self.as_id, self.ingress_if
        yield self.as_id, self.egress_if
        for p in self.peers:
            yield self.as_id, p.local_if


@dataclass(frozen=True)
class PcbInfo:
    timestamp: int
    origin: AsId
    isd: int
    flags: int = PCB_INTRA

    def pack(self, hop_count: int = 0) -> bytes:
        return struct.pack("!I", self.timestamp) + self.origin.pack() + struct.pack(
            "!HBBH", self.isd, self.flags, hop_count, 0)

    @property
    def is_core(self) -> bool:
        return self.flags == PCB_CORE


@dataclass(frozen=True)
class Pcb:
    info: PcbInfo
    hops: tuple = ()

    def pack(self) -> bytes:
        return self.info.pack(len(self.hops)) + b"".join(h.record() for h in self.hops)

    @classmethod
    def unpack(cls, raw: bytes) -> "Pcb":
        ts, = struct.unpack("!I", raw[:4])
        origin = AsId.unpack(raw[4:10])
        isd, flags, count, _ = struct.unpack("!HBBH", raw[10:16])
        off, hops = INFO_LEN, []
        for _ in range(count):
            blen, = struct.unpack("!H", raw[off:off + 2])
            body = raw[off + 2:off + 2 + blen]
            off += 2 + blen
            slen, = struct.unpack("!H", raw[off:off + 2])
            sig = raw[off + 2:off + 2 + slen]
            off += 2 + slen
            as_id = AsId.unpack(body[:6])
            ing, eg = struct.unpack("!HH", body[6:10])
            of = OpaqueField.unpack(body[10:18])
            trc_v, cert_v, npeers = struct.unpack("!IIB", body[18:27])
            peers, p = [], 27
            for _ in range(npeers):
                peers.append(PeerEntry(AsId.unpack(body[p:p + 6]), *struct.unpack("!HH", body[p + 6:p + 10]),
                                       OpaqueField.unpack(body[p + 10:p + 18])))
                p += 18
            hops.append(HopEntry(as_id, ing, eg, of, tuple(peers), trc_v, cert_v, sig))
        if off != len(raw):
            raise ValueError("trailing bytes after PCB")
        return cls(PcbInfo(ts, origin, isd, flags), tuple(hops))

    def signing_material(self, index: int) -> bytes:
        prior = b"".join(h.record() for h in self.hops[:index])
        return self.info.pack(0) + prior + self.hops[index].body()

    def as_path(self) -> tuple:
        return tuple(h.as_id for h in self.hops)

    def identity(self) -> tuple:
        """The forwarding content of the beacon, independent of when it was sent."""
        return (self.info.origin, self.info.flags) + tuple(
            (h.as_id, h.ingress_if, h.egress_if) for h in self.hops)

    def interface_set(self) -> frozenset:
        return frozenset((h.as_id, i) for h in self.hops for i in (h.ingress_if, h.egress_if) if i)

    def uses_interface(self, as_id: AsId, ifid: int) -> bool:
        return any(a == as_id and i == ifid for h in self.hops for a, i in h.interfaces())

    def expiry(self) -> float:
        return min(h.of.expires_at(self.info.timestamp) for h in self.hops)

    @property
    def last(self) -> HopEntry:
        return self.hops[-1]


@dataclass
class ValidationContext:
    """What a beacon server consults to judge a PCB."""

    topo: Topology
    trc_store: TrcStore
    certs: Mapping[AsId, AsCert]
    verify_cache: VerifyCache = field(default_factory=VerifyCache)
    fetch_trc: Callable | None = None  # (isd, version, sender) -> [Trc]
    metrics: Counter = field(default_factory=Counter)


def _trc_fetcher(ctx, sender):
    if ctx.fetch_trc is None:
        return None
    return lambda isd, version: ctx.fetch_trc(isd, version, sender)


def validate_pcb(pcb: Pcb, ctx: ValidationContext, now: float, sender: AsId | None = None) -> None:
    """Raise :class:`PcbInvalid` unless every hop of ``pcb`` checks out."""
    topo = ctx.topo
    if not pcb.hops:
        raise PcbInvalid("empty")
    first = pcb.hops[0]
    if first.ingress_if != 0 or first.as_id != pcb.info.origin:
        raise PcbInvalid("origin")
    for hop in pcb.hops:
        if hop.as_id not in topo.ases:
            raise PcbInvalid("cert unavailable")
    if pcb.info.is_core:
        if not all(topo.ases[h.as_id].is_core for h in pcb.hops):
            raise PcbInvalid("origin")
    elif pcb.info.isd not in topo.ases[first.as_id].core_in:
        raise PcbInvalid("origin")
    if len(set(pcb.as_path())) != len(pcb.hops):
        raise PcbInvalid("loop")
    fetch = _trc_fetcher(ctx, sender)
    for i, hop in enumerate(pcb.hops):
        cert = ctx.certs.get(hop.as_id)
        if cert is None or cert.cert_version != hop.cert_version:
            raise PcbInvalid("cert unavailable")
        isd = hop.as_id.isd
        if hop.trc_version > ctx.trc_store.current_version(isd) and fetch is not None:
            ctx.metrics["trc_fetch_triggered"] += 1
            try:
                for trc in fetch(isd, hop.trc_version):
                    try:
                        update_trc(ctx.trc_store, trc)
                    except TrcRejected:
                        ctx.metrics["trc_fetch_rejected"] += 1
            except TrcUnavailable:
                pass
        if ctx.trc_store.get(isd, hop.trc_version) is None:
            raise PcbInvalid("trc")
        if hop.trc_version < ctx.trc_store.current_version(isd):
            ctx.metrics["pcb_stale_trc"] += 1
        if not validate_cert_chain(cert, ctx.trc_store, now, fetch, ctx.verify_cache.verify):
            raise PcbInvalid("cert")
        if not ctx.verify_cache.verify(cert.public_key, pcb.signing_material(i), hop.signature):
            raise PcbInvalid("signature")
    kind = LinkType.CORE if pcb.info.is_core else LinkType.PROVIDER_TO_CUSTOMER
    for i, hop in enumerate(pcb.hops):
        if (hop.of.ingress, hop.of.egress) != (hop.ingress_if, hop.egress_if):
            raise PcbInvalid("interface")
        if now >= hop.of.expires_at(pcb.info.timestamp):
            raise PcbInvalid("expired")
        if i + 1 < len(pcb.hops):
            nxt = pcb.hops[i + 1]
            link = topo.link_at(hop.as_id, hop.egress_if) if hop.egress_if else None
            if link is None or link.kind is not kind or link.other(hop.as_id)[0] != nxt.as_id \
                    or link.other(hop.as_id)[2] != nxt.ingress_if:
                raise PcbInvalid("adjacency")
            if kind is LinkType.PROVIDER_TO_CUSTOMER and link.a != hop.as_id:
                raise PcbInvalid("adjacency")
        elif hop.egress_if:
            if topo.link_at(hop.as_id, hop.egress_if) is None:
                raise PcbInvalid("adjacency")
        for p in hop.peers:
            link = topo.link_at(hop.as_id, p.local_if)
            if link is None or link.kind is not LinkType.PEERING or link.other(hop.as_id)[:3:2] != (p.peer, p.peer_if):
                raise PcbInvalid("adjacency")
            if p.of.ingress != p.local_if or p.of.egress != hop.egress_if or not p.of.peering:
                raise PcbInvalid("interface")


def peering_links(topo: Topology, as_id: AsId, up=lambda link: True) -> list:
    out = []
    for ifid, link in sorted(topo.node(as_id).interfaces.items()):
        if link.kind is LinkType.PEERING and up(link):
            remote, local_if, remote_if = link.other(as_id)
            out.append((remote, remote_if, local_if))
    return out


def extend_pcb(pcb: Pcb | None, as_id: AsId, ingress_if: int, egress_if: int, peers, now: float,
               secrets: AsSecrets, trc_version: int = 1, cert_version: int = 1,
               expiry_units: int = DEFAULT_EXPIRY_UNITS) -> Pcb:
    """Append a signed hop for ``as_id``; ``pcb`` may be a bare :class:`PcbInfo` wrapper with no hops.

    ``peers`` holds (peer AS, peer's interface, local interface) triples.
    """
    if any(h.as_id == as_id for h in pcb.hops):
        raise PcbInvalid("loop")
    prior = pcb.hops[-1].of if pcb.hops else None
    of = build_of(secrets, 0, expiry_units, ingress_if, egress_if, prior)
    peer_entries = tuple(
        PeerEntry(peer, peer_if, local_if, build_of(secrets, OF_PEERING, expiry_units, local_if, egress_if, prior))
        for peer, peer_if, local_if in peers)
    hop = HopEntry(as_id, ingress_if, egress_if, of, peer_entries, trc_version, cert_version)
    draft = Pcb(pcb.info, pcb.hops + (hop,))
    signature = sign(secrets.signing.private, draft.signing_material(len(draft.hops) - 1))
    return Pcb(pcb.info, pcb.hops + (replace(hop, signature=signature),))


def new_pcb(origin: AsId, isd: int, now: float, flags: int = PCB_INTRA) -> Pcb:
    return Pcb(PcbInfo(int(now), origin, isd, flags))


@dataclass(frozen=True)
class BeaconPolicy:
    k_intra: int | None = 5  # None disables truncation
    interval_intra: float = 15.0
    k_inter: int | None = 3
    interval_inter: float = 60.0
    weights: tuple = (0.4, 0.3, 0.2, 0.1)  # length, disjointness, freshness, consistency
    required_labels: frozenset = frozenset()
    expiry_units: int = DEFAULT_EXPIRY_UNITS

    def __post_init__(self):
        if self.k_intra is not None and self.k_intra < 1:
            raise ValueError("k_intra must be >= 1")
        if self.interval_intra <= 0 or self.interval_inter <= 0:
            raise ValueError("beacon intervals must be positive")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")


@dataclass
class Candidate:
    pcb: Pcb
    received_at: float
    arrival_if: int  # 0 for locally originated


def jaccard(a: frozenset, b: frozenset) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def _consistent(pcb: Pcb, topo: Topology | None, required: frozenset) -> bool:
    if not required:
        return True
    if topo is None:
        return False
    for hop in pcb.hops:
        if hop.egress_if:
            link = topo.link_at(hop.as_id, hop.egress_if)
            if link is None or not required <= link.labels:
                return False
    return True


def score(cand: Candidate, policy: BeaconPolicy, history, now: float, interval: float,
          topo: Topology | None = None) -> float:
    w_len, w_dis, w_fresh, w_cons = policy.weights
    hop_set = cand.pcb.interface_set()
    ident = cand.pcb.identity()
    overlap = max((jaccard(hop_set, s) for i, s in history if i != ident), default=0.0)
    age = now - cand.pcb.info.timestamp
    fresh = max(0.0, 1.0 - age / (3 * interval))
    cons = 1.0 if _consistent(cand.pcb, topo, policy.required_labels) else 0.0
    return w_len / len(cand.pcb.hops) + w_dis * (1 - overlap) + w_fresh * fresh + w_cons * cons


def score_and_select(candidates, policy: BeaconPolicy, history=(), now: float = 0.0,
                     k: int | None = None, interval: float | None = None,
                     topo: Topology | None = None) -> list[Candidate]:
    """Greedy top-``k``: each pick joins the history the remaining candidates are compared to.

    ``history`` holds (identity, interface set) pairs for beacons sent
    earlier on the same link. Ties go to the older beacon, then the lower
    origin AS, then the smaller identity.
    """
    interval = policy.interval_intra if interval is None else interval
    k = policy.k_intra if k is None else k
    pool = list(candidates)
    chosen: list[Candidate] = []
    hist = list(history)
    limit = len(pool) if k is None or k == 0 else min(k, len(pool))
    while len(chosen) < limit:
        best = min(pool, key=lambda c: (-score(c, policy, hist, now, interval, topo),
                                        c.pcb.info.timestamp, c.pcb.info.origin, c.pcb.identity()))
        pool.remove(best)
        chosen.append(best)
        hist.append((best.pcb.identity(), best.pcb.interface_set()))
    return chosen


class BeaconServer:
    """Beaconing state of one AS.

    All mutation happens through the methods below, which the simulation
    engine calls from timer and message events; outgoing beacons are
    returned as ``(link, pcb)`` pairs rather than sent.
    """

    def __init__(self, as_id: AsId, topo: Topology, secrets: AsSecrets, policy: BeaconPolicy,
                 ctx: ValidationContext, link_up: Callable[[Link], bool] = lambda link: True):
        self.as_id = as_id
        self.topo = topo
        self.node = topo.node(as_id)
        self.secrets = secrets
        self.policy = policy
        self.ctx = ctx
        self.link_up = link_up
        self.cert_version = 1
        self.intra_pool: dict[tuple, Candidate] = {}
        self.core_pool: dict[tuple, Candidate] = {}
        self.history: dict[tuple, list] = {}
        self.revoked: dict[tuple, float] = {}
        self.last_round: dict[str, tuple[int, int]] = {}  # link id -> (emitted, eligible)
        self._terminal_cache: dict[tuple, Pcb] = {}

    # -- helpers -------------------------------------------------------
    def trc_version(self) -> int:
        return self.ctx.trc_store.current_version(self.as_id.isd)

    def _extend(self, pcb, ingress, egress, now, with_peers=True):
        peers = peering_links(self.topo, self.as_id, self.link_up) if with_peers else ()
        return extend_pcb(pcb, self.as_id, ingress, egress, peers, now, self.secrets,
                          self.trc_version(), self.cert_version, self.policy.expiry_units)

    def _usable(self, cand: Candidate, now: float, interval: float) -> bool:
        if cand.received_at < now - 3 * interval:
            return False
        if now >= cand.pcb.expiry():
            return False
        if cand.arrival_if:
            link = self.topo.link_at(self.as_id, cand.arrival_if)
            if link is None or not self.link_up(link):
                return False
        return not any(cand.pcb.uses_interface(a, i) for (a, i), until in self.revoked.items() if until > now)

    def _links(self, kind, role=None):
        out = []
        for ifid, link in sorted(self.node.interfaces.items()):
            if link.kind is not kind:
                continue
            if role == "provider" and link.a != self.as_id:
                continue
            out.append(link)
        return out

    def expire(self, now: float) -> None:
        for pool, interval in ((self.intra_pool, self.policy.interval_intra),
                               (self.core_pool, self.policy.interval_inter)):
            for key in [k for k, c in pool.items() if c.received_at < now - 3 * interval or now >= c.pcb.expiry()]:
                del pool[key]
        for key in [k for k, until in self.revoked.items() if until <= now]:
            del self.revoked[key]

    # -- origination ---------------------------------------------------
    def originate_intra(self, now: float) -> list:
        out = []
        for isd in sorted(self.node.core_in):
            for link in self._links(LinkType.PROVIDER_TO_CUSTOMER, "provider"):
                customer, local_if, _ = link.other(self.as_id)
                if isd not in self.topo.ases[customer].member_of or not self.link_up(link):
                    continue
                out.append((link, self._extend(new_pcb(self.as_id, isd, now), 0, local_if, now)))
                self.last_round[link.id] = (1, 1)
        return out

    def originate_core(self, now: float) -> list:
        if not self.node.is_core:
            return []
        out = []
        for link in self._links(LinkType.CORE):
            if self.link_up(link):
                _, local_if, _ = link.other(self.as_id)
                pcb = new_pcb(self.as_id, self.as_id.isd, now, PCB_CORE)
                out.append((link, self._extend(pcb, 0, local_if, now, with_peers=False)))
        return out

    # -- reception -----------------------------------------------------
    def receive(self, pcb: Pcb, link: Link, now: float, sender: AsId | None = None) -> bool:
        """Validate and pool a beacon; True when it adds a previously unseen path."""
        remote, local_if, remote_if = link.other(self.as_id)
        if pcb.last.as_id != remote or pcb.last.egress_if != remote_if:
            self.ctx.metrics["pcb_invalid:adjacency"] += 1
            return False
        if any(h.as_id == self.as_id for h in pcb.hops):
            self.ctx.metrics["pcb_invalid:loop"] += 1
            return False
        try:
            validate_pcb(pcb, self.ctx, now, sender or remote)
        except PcbInvalid as exc:
            self.ctx.metrics["pcb_invalid:" + exc.reason] += 1
            return False
        if any(pcb.uses_interface(a, i) for (a, i), until in self.revoked.items() if until > now):
            self.ctx.metrics["pcb_revoked_drop"] += 1
            return False
        pool = self.core_pool if pcb.info.is_core else self.intra_pool
        key = pcb.identity()
        fresh = key not in pool
        old = pool.get(key)
        if old is None or old.pcb.info.timestamp <= pcb.info.timestamp:
            pool[key] = Candidate(pcb, now, local_if)
        return fresh

    # -- propagation ---------------------------------------------------
    def propagate_intra(self, now: float) -> list:
        """One beacon round on every provider-to-customer link."""
        if self.node.is_core and not (self.node.member_of - self.node.core_in):
            return self.originate_intra(now)
        out = self.originate_intra(now) if self.node.is_core else []
        interval = self.policy.interval_intra
        for link in self._links(LinkType.PROVIDER_TO_CUSTOMER, "provider"):
            customer, local_if, _ = link.other(self.as_id)
            if not self.link_up(link):
                continue
            members = self.topo.ases[customer].member_of
            eligible = [c for c in self.intra_pool.values()
                        if c.pcb.info.isd in members and customer not in c.pcb.as_path()
                        and c.pcb.info.isd not in self.node.core_in and self._usable(c, now, interval)]
            hist_key = (link.id, None)
            chosen = score_and_select(eligible, self.policy, self.history.get(hist_key, ()), now,
                                      self.policy.k_intra, interval, self.topo)
            self.history[hist_key] = [(c.pcb.identity(), c.pcb.interface_set()) for c in chosen]
            for cand in chosen:
                out.append((link, self._extend(cand.pcb, cand.arrival_if, local_if, now)))
            self.last_round[link.id] = (len(chosen), len(eligible))
        return out

    def propagate_core(self, now: float) -> list:
        if not self.node.is_core:
            return []
        out = self.originate_core(now)
        interval = self.policy.interval_inter
        for link in self._links(LinkType.CORE):
            neighbor, local_if, _ = link.other(self.as_id)
            if not self.link_up(link):
                continue
            by_origin: dict[AsId, list] = {}
            for c in self.core_pool.values():
                if neighbor not in c.pcb.as_path() and self._usable(c, now, interval):
                    by_origin.setdefault(c.pcb.info.origin, []).append(c)
            for origin in sorted(by_origin):
                hist_key = (link.id, origin)
                chosen = score_and_select(by_origin[origin], self.policy, self.history.get(hist_key, ()),
                                          now, self.policy.k_inter, interval, self.topo)
                self.history[hist_key] = [(c.pcb.identity(), c.pcb.interface_set()) for c in chosen]
                for cand in chosen:
                    out.append((link, self._extend(cand.pcb, cand.arrival_if, local_if, now, with_peers=False)))
        return out

    # -- segments ------------------------------------------------------
    def terminate(self, cand: Candidate, now: float, core: bool = False) -> Pcb:
        """The candidate extended by this AS as final hop (egress none)."""
        key = (cand.pcb.identity(), cand.pcb.info.timestamp, cand.pcb.last.signature, self.trc_version())
        pcb = self._terminal_cache.get(key)
        if pcb is None:
            pcb = self._extend(cand.pcb, cand.arrival_if, 0, now, with_peers=not core)
            self._terminal_cache[key] = pcb
        return pcb

    def selected_segments(self, now: float, k: int | None = None) -> list[Pcb]:
        """Terminal beacons this AS wants to be reached through (top-k of its pool)."""
        interval = self.policy.interval_intra
        eligible = [c for c in self.intra_pool.values() if self._usable(c, now, interval)]
        k = self.policy.k_intra if k is None else k
        chosen = score_and_select(eligible, self.policy, (), now, k, interval, self.topo)
        return [self.terminate(c, now) for c in chosen]

    def core_segments(self, now: float) -> list[Pcb]:
        interval = self.policy.interval_inter
        return [self.terminate(c, now, core=True)
                for c in sorted(self.core_pool.values(), key=lambda c: c.pcb.identity())
                if self._usable(c, now, interval)]

    def revoke(self, as_id: AsId, ifid: int, until: float) -> int:
        self.revoked[(as_id, ifid)] = until
        purged = 0
        for pool in (self.intra_pool, self.core_pool):
            for key in [k for k, c in pool.items() if c.pcb.uses_interface(as_id, ifid)]:
                del pool[key]
                purged += 1
        return purged

    def all_pcbs(self):
        for pool in (self.intra_pool, self.core_pool):
            for c in pool.values():
                yield c.pcb
