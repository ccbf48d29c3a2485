"""
:mod:`path_server` --- segment stores, lookups and revocation
=============================================================

Every AS runs one logical path server. Its ``up`` store holds the AS's own
up-segments. Core ASes additionally keep a ``down`` store (segments that
members of their ISD registered to be reached through) and a ``core`` store
keyed by the far-end core AS.

Lookups are resolved by :class:`Resolver`, which walks the servers the way
the request/reply messages would and reports the message count and the
latency they would take. Server-to-server messages are plain records with
a canonical encoding (:meth:`Message.encode`).
"""
from __future__ import annotations

import enum
import struct
from collections import Counter
from dataclasses import dataclass, field

from .beaconing import PcbInvalid, ValidationContext, validate_pcb
from .crypto import DrKeyCache, FetchError
from .scmp import ScmpMessage, ScmpType, scmp_verify
from .segments import PathSegment, SegKind
from .topology import AsId, Topology

DEFAULT_CAPACITY = 16
DEFAULT_K = 5


class LookupError_(Exception):
    """Lookup failure with one of the reasons ``isolated``, ``no such AS``, ``lookup timeout``."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class MsgType(enum.IntEnum):
    REQUEST = 1
    REPLY = 2
    REGISTER = 3
    REVOKE = 4


@dataclass(frozen=True)
class Message:
    type: MsgType
    sender: AsId
    receiver: AsId
    subject: AsId  # destination for REQUEST/REPLY, owner for REGISTER/REVOKE
    segments: tuple = ()

    def encode(self) -> bytes:
        out = struct.pack("!B", self.type) + self.sender.pack() + self.receiver.pack() + self.subject.pack()
        out += struct.pack("!H", len(self.segments))
        for seg in self.segments:
            raw = seg.pcb.pack() if seg.pcb is not None else b""
            out += struct.pack("!BBH", list(SegKind).index(seg.kind), seg.consdir, len(raw)) + raw
        return out


@dataclass
class LookupReply:
    up: list = field(default_factory=list)
    core: list = field(default_factory=list)
    down: list = field(default_factory=list)
    messages: int = 0
    latency: float = 0.0
    cached: bool = False

    def segments(self):
        return self.up + self.core + self.down


def _best(segments, k):
    ordered = sorted(segments, key=lambda s: (len(s.hops), -s.expiry, s.route()))
    return ordered if k is None else ordered[:k]


class SegmentStore:
    """Segments grouped by a key, at most ``capacity`` per key.

    A newer copy of the same route replaces the older one. When a key is
    full the segment expiring first is evicted.
    """

    def __init__(self, capacity: int | None = DEFAULT_CAPACITY):
        self.capacity = capacity
        self.entries: dict = {}  # key -> {route: (segment, inserted_at)}

    def add(self, key, seg: PathSegment, now: float) -> str:
        """Insert; returns ``"new"``, ``"refresh"`` or ``"stale"``."""
        bucket = self.entries.setdefault(key, {})
        route = seg.route()
        old = bucket.get(route)
        if old is not None:
            if old[0].info.timestamp >= seg.info.timestamp:
                return "stale"
            bucket[route] = (seg, now)
            return "refresh"
        bucket[route] = (seg, now)
        if self.capacity is not None and len(bucket) > self.capacity:
            victim = min(bucket, key=lambda r: (bucket[r][0].expiry, r))
            del bucket[victim]
            if victim == route:
                return "stale"
        return "new"

    def get(self, key, now: float, revoked=()) -> list:
        return [seg for seg, _ in self.entries.get(key, {}).values()
                if now < seg.expiry and not any(seg.uses_interface(a, i) for a, i in revoked)]

    def keys(self):
        return list(self.entries)

    def all(self):
        for bucket in self.entries.values():
            for seg, _ in bucket.values():
                yield seg

    def purge(self, as_id: AsId, ifid: int) -> int:
        n = 0
        for bucket in self.entries.values():
            for route in [r for r, (s, _) in bucket.items() if s.uses_interface(as_id, ifid)]:
                del bucket[route]
                n += 1
        return n

    def expire(self, now: float) -> None:
        for bucket in self.entries.values():
            for route in [r for r, (s, _) in bucket.items() if now >= s.expiry]:
                del bucket[route]

    def __len__(self):
        return sum(len(b) for b in self.entries.values())


class PathServer:
    def __init__(self, as_id: AsId, topo: Topology, ctx: ValidationContext, drkeys: DrKeyCache | None = None,
                 capacity: int | None = DEFAULT_CAPACITY, k: int | None = DEFAULT_K, caching: bool = True,
                 revocation_ttl: float = 30.0, metrics: Counter | None = None):
        self.as_id = as_id
        self.topo = topo
        self.node = topo.node(as_id)
        self.ctx = ctx
        self.drkeys = drkeys
        self.k = k
        self.caching = caching
        self.revocation_ttl = revocation_ttl
        self.metrics = metrics if metrics is not None else Counter()
        self.up = SegmentStore(capacity)
        self.down = SegmentStore(capacity)
        self.core = SegmentStore(capacity)
        self.cache: dict = {}  # key -> (expires_at, payload)
        self.revoked: dict[tuple, float] = {}

    @property
    def is_core(self) -> bool:
        return self.node.is_core

    def active_revocations(self, now: float) -> list:
        return sorted(k for k, until in self.revoked.items() if until > now)

    # -- registration --------------------------------------------------
    def _check(self, seg: PathSegment, now: float) -> str | None:
        if seg.pcb is None:
            return "unsigned"
        try:
            validate_pcb(seg.pcb, self.ctx, now)
        except PcbInvalid as exc:
            return exc.reason
        if not seg.orientation_ok(self.topo) or not seg.is_contiguous(self.topo):
            return "orientation"
        if any(seg.uses_interface(a, i) for a, i in self.active_revocations(now)):
            return "revoked"
        return None

    def register(self, segments, now: float) -> int:
        """Validate and store segments; returns how many were accepted."""
        accepted = 0
        for seg in segments:
            if seg.kind is SegKind.UP:
                store, key = self.up, seg.first
                ok = seg.first == self.as_id
            elif seg.kind is SegKind.DOWN:
                store, key = self.down, seg.last
                ok = self.is_core and seg.info.isd in self.node.core_in
            else:
                store, key = self.core, seg.first
                ok = self.is_core and seg.last == self.as_id
            reason = self._check(seg, now) if ok else "misdirected"
            if reason is not None:
                self.metrics["ps_register_rejected:" + reason] += 1
                continue
            outcome = store.add(key, seg, now)
            if outcome == "new":
                self.metrics["ps_registration_churn"] += 1
            if outcome != "stale":
                accepted += 1
        self.metrics["ps_registered"] += accepted
        return accepted

    # -- queries -------------------------------------------------------
    def ups(self, now: float) -> list:
        return _best(self.up.get(self.as_id, now, self.active_revocations(now)), self.k)

    def downs(self, dst: AsId, now: float) -> list:
        return _best(self.down.get(dst, now, self.active_revocations(now)), self.k)

    def cores_from(self, origin: AsId, now: float) -> list:
        return _best(self.core.get(origin, now, self.active_revocations(now)), self.k)

    def cache_get(self, key, now: float):
        if not self.caching:
            return None
        hit = self.cache.get(key)
        if hit is None or now >= hit[0]:
            return None
        revoked = self.active_revocations(now)
        if any(seg.uses_interface(a, i) for seg in _flatten(hit[1]) for a, i in revoked):
            return None
        self.metrics["ps_cache_hit"] += 1
        return hit[1]

    def cache_put(self, key, payload, now: float) -> None:
        if not self.caching:
            return
        segs = list(_flatten(payload))
        ttl = min((s.expiry for s in segs), default=now)
        if ttl > now:
            self.cache[key] = (ttl, payload)

    # -- revocation ----------------------------------------------------
    def process_revocation(self, msg: ScmpMessage, now: float) -> int:
        """Purge segments using the revoked interface if ``msg`` authenticates; returns the count."""
        if msg.type is not ScmpType.REVOKE_INTERFACE or msg.subject is None:
            self.metrics["ps_revocation_bad_proof"] += 1
            return 0
        try:
            ok = self.drkeys is not None and scmp_verify(self.as_id, msg, self.drkeys, now)
        except FetchError:
            self.metrics["ps_revocation_quarantined"] += 1
            return 0
        if not ok:
            self.metrics["ps_revocation_bad_proof"] += 1
            return 0
        as_id, ifid = msg.subject
        self.revoked[(as_id, ifid)] = max(self.revoked.get((as_id, ifid), 0.0), now + self.revocation_ttl)
        purged = self.up.purge(as_id, ifid) + self.down.purge(as_id, ifid) + self.core.purge(as_id, ifid)
        for key in [k for k, (_, p) in self.cache.items() if any(s.uses_interface(as_id, ifid) for s in _flatten(p))]:
            del self.cache[key]
        self.metrics["ps_revocations"] += 1
        self.metrics["ps_purged"] += purged
        return purged

    def expire(self, now: float) -> None:
        for store in (self.up, self.down, self.core):
            store.expire(now)
        for key in [k for k, (ttl, _) in self.cache.items() if ttl <= now]:
            del self.cache[key]
        for key in [k for k, until in self.revoked.items() if until <= now]:
            del self.revoked[key]

    def all_segments(self):
        yield from self.up.all()
        yield from self.down.all()
        yield from self.core.all()


def _flatten(payload):
    if isinstance(payload, LookupReply):
        return payload.segments()
    return payload


class Resolver:
    """Answers lookups by consulting the path servers of a world.

    ``servers`` maps each AS to its :class:`PathServer`; ``latency(a, b)``
    gives the one-way message latency between two ASes.
    """

    def __init__(self, topo: Topology, servers: dict, latency, metrics: Counter | None = None):
        self.topo = topo
        self.servers = servers
        self.latency = latency
        self.metrics = metrics if metrics is not None else Counter()

    def _exchange(self, reply: LookupReply, a: AsId, b: AsId) -> None:
        if a == b:
            return
        reply.messages += 2
        reply.latency += 2 * self.latency(a, b)
        self.metrics["ps_messages"] += 2

    def lookup(self, src: AsId, dst: AsId, now: float) -> LookupReply:
        if dst not in self.topo.ases or src not in self.topo.ases:
            raise LookupError_("no such AS")
        local = self.servers[src]
        self.metrics["ps_lookups"] += 1
        if src == dst:
            return LookupReply()
        hit = local.cache_get(("lookup", dst), now)
        if hit is not None:
            return LookupReply(list(hit.up), list(hit.core), list(hit.down), 0, 0.0, True)
        reply = LookupReply()
        reply.up = local.ups(now)
        up_cores = sorted({s.last for s in reply.up} | ({src} if local.is_core else set()))
        if not up_cores:
            self.metrics["ps_isolated"] += 1
            raise LookupError_("isolated")
        dst_node = self.topo.node(dst)
        shared = sorted(src_isd for src_isd in self.topo.node(src).member_of if src_isd in dst_node.member_of)
        if dst_node.is_core:
            down_cores = [dst]
        else:
            downs = []
            for isd in sorted(dst_node.member_of):
                if isd in shared:
                    servers = [c for c in up_cores if isd in self.topo.node(c).core_in][:1]
                    for core in servers:
                        self._exchange(reply, src, core)
                        downs += self.servers[core].downs(dst, now)
                else:
                    downs += self._remote_downs(reply, src, up_cores, isd, dst, now)
            reply.down = _dedupe(downs, None)
            down_cores = sorted({s.first for s in reply.down})
            if not reply.down:
                raise LookupError_("no such AS")
        cores = []
        for c in up_cores:
            wanted = [d for d in down_cores if d != c]
            if not wanted:
                continue
            self._exchange(reply, src, c)
            ps = self.servers[c]
            for d in wanted:
                cores += ps.cores_from(d, now)
        reply.core = _dedupe(cores, None)
        local.cache_put(("lookup", dst), reply, now)
        return reply

    def _remote_downs(self, reply, src, up_cores, isd, dst, now):
        """Down-segments for ``dst`` from a core path server of another ISD, via a local core."""
        for local_core in up_cores:
            ps = self.servers[local_core]
            self._exchange(reply, src, local_core)
            cached = ps.cache_get(("remote", dst), now)
            if cached is not None:
                return list(cached)
            options = []
            for remote in self.topo.core_ases(isd):
                segs = ps.cores_from(remote, now)
                if segs:
                    options.append((min(len(s.hops) for s in segs), remote))
            if not options:
                continue
            _, remote = min(options)
            reply.messages += 2
            reply.latency += 2 * self.latency(local_core, remote)
            self.metrics["ps_messages"] += 2
            self.metrics["ps_remote_queries"] += 1
            downs = self.servers[remote].downs(dst, now)
            if not downs and not self.topo.node(dst).is_core:
                raise LookupError_("no such AS")
            ps.cache_put(("remote", dst), downs, now)
            return downs
        raise LookupError_("lookup timeout")


def _dedupe(segments, k):
    seen, out = set(), []
    for s in _best(segments, None):
        r = s.route()
        if r not in seen:
            seen.add(r)
            out.append(s)
    return out if k is None else out[:k]
