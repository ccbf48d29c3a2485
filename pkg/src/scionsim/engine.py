"""
:mod:`engine` --- deterministic discrete-event simulation
=========================================================

All state changes happen inside event handlers popped from one heap in
``(time, seq)`` order. Handlers only schedule events at or after the
current time, so a run is a pure fold over the queue: the same topology,
scenario and seed give byte-identical metric exports.
"""
from __future__ import annotations

import hashlib
import heapq
import itertools
import random
import struct
from collections import deque
from dataclasses import dataclass

from .adversary import forge_pcbs, forge_revocation, hijack_pcb, hijack_rewired, random_mac_path
from .beaconing import PcbInvalid, ValidationContext, validate_pcb
from .combiner import combine, most_disjoint
from .crypto import FetchError
from .flows import UNACKED_LIMIT, Flow
from .header import header_for_path, reverse_header
from .metrics import Metrics
from .oracle import down_chains
from .path_server import LookupError_, Resolver
from .router import Verdict, forward
from .scenario import Scenario
from .scmp import ScmpType, scmp_auth, scmp_verify
from .segments import PathSegment, SegKind
from .topology import AsId, LinkType, Topology
from .trust import TrcRejected, TrcStore, TrcUnavailable, update_trc
from .world import SimConfig, World

DST_HOST = bytes((10, 0, 0, 1))


@dataclass
class PacketMeta:
    flow: str | None
    seq: int
    kind: str  # data, ack, forged
    path: int = 0
    generation: int = 0
    traversed: int = 0


class Engine:
    def __init__(self, topo: Topology, config: SimConfig | None = None, seed: int = 0,
                 scenario: Scenario | None = None, record_packets: bool = False):
        if scenario is not None:
            topo = scenario.topology
            seed = scenario.seed
            config = config or SimConfig.from_knobs(scenario.knobs)
        self.topo = topo
        self.scenario = scenario
        self.config = config or SimConfig()
        self.seed = seed
        self.metrics = Metrics()
        self.now = 0.0
        self.duration = scenario.duration if scenario is not None else float("inf")
        self._queue: list = []
        self._seq = itertools.count()
        self.link_alive = {lid: True for lid in topo.links}
        self.world = World(topo, seed, self.config, self._link_up, self.metrics.counters, self._fetch_trc)
        self.resolver = Resolver(topo, self.world.path_servers(), self.latency_between, self.metrics.counters)
        self.flows: dict[str, Flow] = {}
        self.rate_log: list = []  # (time, AS, link id, emitted, eligible)
        self.revocation_log: list = []  # (time, verifier, subject, accepted, purged, forged)
        self.trc_log: dict = {}  # (isd, version) -> {AS: install time}
        self.packet_log: list | None = [] if record_packets else None
        self._hops: dict = {}
        self._core_pending: set = set()
        self._last_core: dict = {}
        self._retry_pending: set = set()
        self._started = False
        self._finished = False
        if scenario is not None:
            self._load(scenario)

    # -- plumbing ------------------------------------------------------
    def schedule(self, t: float, handler, *args) -> None:
        if t < self.now:
            raise ValueError("cannot schedule into the past (%r < %r)" % (t, self.now))
        heapq.heappush(self._queue, (t, next(self._seq), handler, args))

    def rng(self, component: str) -> random.Random:
        digest = hashlib.sha256(("%d/%s" % (self.seed, component)).encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _link_up(self, link) -> bool:
        return self.link_alive[link.id]

    def _if_state(self, as_id: AsId, ifid: int):
        link = self.topo.link_at(as_id, ifid)
        return None if link is None else self.link_alive[link.id]

    def latency_between(self, a: AsId, b: AsId) -> float:
        """One-way message latency: per-link latency times the hop distance."""
        if a == b:
            return self.config.latency_intra
        if a not in self._hops:
            dist = {a: 0}
            todo = deque([a])
            while todo:
                x = todo.popleft()
                for ifid, link in sorted(self.topo.node(x).interfaces.items()):
                    y = link.other(x)[0]
                    if y not in dist:
                        dist[y] = dist[x] + 1
                        todo.append(y)
            self._hops[a] = dist
        return self.config.latency * self._hops[a].get(b, 1)

    def _load(self, sc: Scenario) -> None:
        for d in sc.directives:
            handler = {"fail-link": self._fail_link, "attack": self._attack, "trc-update": self._trc_update}[d.kind]
            self.schedule(d.time, handler, d.args)
        for i, spec in enumerate(sc.flows):
            fid = "f%d" % i
            self.flows[fid] = Flow(fid, spec)
            self.schedule(spec.start, self._flow_start, fid)

    def _start(self) -> None:
        self._started = True
        if self.duration <= 0:
            return
        for a in sorted(self.topo.ases):
            self.schedule(0.0, self._intra_round, a)
        for a in self.topo.core_ases():
            self.schedule(0.0, self._core_round, a, True)

    def run(self, until: float | None = None) -> Metrics:
        """Process events up to ``until`` (default: the scenario duration, then finish)."""
        if not self._started:
            self._start()
        limit = self.duration if until is None else min(until, self.duration)
        while self._queue and self._queue[0][0] <= limit:
            t, _, handler, args = heapq.heappop(self._queue)
            self.now = t
            self.metrics.inc("sim.events")
            handler(*args)
        if limit != float("inf"):
            self.now = max(self.now, limit)
        if until is None:
            self.finish()
        return self.metrics

    # -- trust ---------------------------------------------------------
    def _fetch_trc(self, requester, isd, version, sender):
        if sender not in self.world.ases:
            raise TrcUnavailable("no sender")
        src = self.world[sender].store
        have = self.world[requester].store.current_version(isd)
        trcs = [src.get(isd, v) for v in range(have + 1, version + 1)]
        if any(t is None for t in trcs):
            raise TrcUnavailable("sender lacks TRC %d v%d" % (isd, version))
        self.metrics.inc("trc_fetch_messages", 2)
        return trcs

    def _note_trc(self, state, delay: float) -> None:
        for isd in sorted(self.topo.isds):
            v = state.store.current_version(isd)
            if v > state.last_versions[isd]:
                for ver in range(state.last_versions[isd] + 1, v + 1):
                    if state.store.get(isd, ver) is not None:
                        t = self.now + delay
                        self.trc_log.setdefault((isd, ver), {})[state.id] = t
                        self.metrics.set("trc.%d.v%d.installed.%s" % (isd, ver, state.id), t)
                state.last_versions[isd] = v

    def _trc_update(self, args) -> None:
        isd = args["isd"]
        auth = self.world.authorities[isd]
        trc = auth.next_trc(args["signers"], args.get("rotate", 0))
        installed = 0
        for core in self.topo.core_ases(isd):
            try:
                update_trc(self.world[core].store, trc)
                installed += 1
            except TrcRejected as exc:
                self.metrics.inc("trc_update_rejected:%s" % exc.reason)
        self.metrics.set("trc.%d.v%d.issued" % (isd, trc.version), self.now)
        if installed:
            auth.adopt(trc)
            for core in self.topo.core_ases(isd):
                self._note_trc(self.world[core], 0.0)

    # -- beaconing -----------------------------------------------------
    def _send_pcbs(self, as_id, out) -> None:
        for link, pcb in out:
            remote = link.other(as_id)[0]
            self.metrics.inc("pcb_sent")
            self.metrics.inc("pcb_sent.%s" % link.id)
            self.schedule(self.now + self.config.latency, self._pcb_arrival, remote, link.id, pcb, as_id)

    def _pcb_arrival(self, as_id, link_id, pcb, sender) -> None:
        if not self.link_alive[link_id]:
            self.metrics.inc("pcb_lost")
            return
        state = self.world[as_id]
        fresh = state.beacon.receive(pcb, self.topo.links[link_id], self.now, sender)
        self.metrics.inc("pcb_received")
        self._note_trc(state, 2 * self.config.latency)
        if fresh and pcb.info.is_core and self.topo.node(as_id).is_core:
            self._trigger_core(as_id)

    def _intra_round(self, as_id) -> None:
        state = self.world[as_id]
        bs = state.beacon
        bs.expire(self.now)
        state.ps.expire(self.now)
        bs.last_round.clear()
        self._send_pcbs(as_id, bs.propagate_intra(self.now))
        k = self.config.k_intra
        for link_id, (emitted, eligible) in sorted(bs.last_round.items()):
            self.rate_log.append((self.now, as_id, link_id, emitted, eligible))
            if self.now >= self.config.warmup:
                self.metrics.inc("beacon_rate_checks")
                if emitted != (eligible if k is None else min(eligible, k)):
                    self.metrics.inc("beacon_rate_violations")
        self._register(as_id)
        nxt = self.now + self.config.interval_intra
        if nxt < self.duration:
            self.schedule(nxt, self._intra_round, as_id)

    def _register(self, as_id) -> None:
        node = self.topo.node(as_id)
        bs = self.world[as_id].beacon
        if not node.is_core or node.member_of - node.core_in:
            pcbs = bs.selected_segments(self.now)
            if pcbs:
                ups = [PathSegment.from_pcb(p, SegKind.UP) for p in pcbs]
                self.schedule(self.now + self.config.latency_intra, self._deliver_register, as_id, ups)
                targets: dict = {}
                for p in pcbs:
                    for core in self.topo.core_ases(p.info.isd):
                        targets.setdefault(core, []).append(PathSegment.from_pcb(p, SegKind.DOWN))
                for core, segs in targets.items():
                    self.schedule(self.now + self.latency_between(as_id, core), self._deliver_register, core, segs)
        if node.is_core:
            cores = [PathSegment.from_pcb(p, SegKind.CORE) for p in bs.core_segments(self.now)]
            if cores:
                self.schedule(self.now + self.config.latency_intra, self._deliver_register, as_id, cores)

    def _deliver_register(self, as_id, segments) -> None:
        self.metrics.inc("ps_register_messages")
        self.world[as_id].ps.register(segments, self.now)

    def _core_round(self, as_id, periodic: bool) -> None:
        if not periodic:
            self._core_pending.discard(as_id)
        self._last_core[as_id] = self.now
        bs = self.world[as_id].beacon
        bs.expire(self.now)
        self._send_pcbs(as_id, bs.propagate_core(self.now))
        cores = [PathSegment.from_pcb(p, SegKind.CORE) for p in bs.core_segments(self.now)]
        if cores:
            self.schedule(self.now + self.config.latency_intra, self._deliver_register, as_id, cores)
        if periodic:
            nxt = self.now + self.config.interval_inter
            if nxt < self.duration:
                self.schedule(nxt, self._core_round, as_id, True)

    def _trigger_core(self, as_id) -> None:
        """Re-run core propagation soon after a new core path shows up, at most once per gap."""
        if as_id in self._core_pending:
            return
        t = max(self.now, self._last_core.get(as_id, float("-inf")) + self.config.core_trigger_gap)
        if t < self.duration:
            self._core_pending.add(as_id)
            self.schedule(t, self._core_round, as_id, False)

    # -- failures and revocation -----------------------------------------
    def _fail_link(self, args) -> None:
        link = self.topo.links[args["link"]]
        self.link_alive[link.id] = False
        self.metrics.inc("link_failures")
        for owner, ifid in ((link.a, link.a_if), (link.b, link.b_if)):
            secrets = self.world[owner].secrets
            for verifier in sorted(self.topo.ases):
                msg = scmp_auth(secrets, verifier, ScmpType.REVOKE_INTERFACE, (owner, ifid), self.now)
                self.schedule(self.now + 2 * self.config.latency, self._revocation, verifier, msg, False)
        if args.get("restore") is not None:
            self.schedule(args["restore"], self._restore_link, link.id)

    def _restore_link(self, link_id) -> None:
        link = self.topo.links[link_id]
        self.link_alive[link_id] = True
        self.metrics.inc("link_restores")
        for owner, ifid in ((link.a, link.a_if), (link.b, link.b_if)):
            self.world[owner].beacon.revoked.pop((owner, ifid), None)

    def _revocation(self, verifier, msg, forged: bool) -> None:
        state = self.world[verifier]
        purged = state.ps.process_revocation(msg, self.now)
        try:
            ok = scmp_verify(verifier, msg, state.drkeys, self.now)
        except FetchError:
            ok = False
            self.metrics.inc("bs_revocation_quarantined")
        if ok:
            owner, ifid = msg.subject
            purged += state.beacon.revoke(owner, ifid, self.now + self.config.revocation_lifetime)
            for flow in self.flows.values():
                if flow.spec.src == verifier:
                    self._flow_revoked(flow, msg.subject)
        else:
            self.metrics.inc("bs_revocation_bad_proof")
        self.metrics.inc("revocation_purged", purged)
        if forged:
            self.metrics.inc("forge_scmp_purged", purged)
        self.revocation_log.append((self.now, verifier, msg.subject, ok, purged, forged))

    # -- flows -----------------------------------------------------------
    def _flow_stop(self, flow: Flow) -> float:
        return min(flow.spec.stop if flow.spec.stop is not None else self.duration, self.duration)

    def lookup_paths(self, src: AsId, dst: AsId, n: int | None = None):
        """Lookup plus combination at the current time; returns (paths, reply)."""
        reply = self.resolver.lookup(src, dst, self.now)
        paths = [p for p in combine(reply.up, reply.core, reply.down, src, dst, self.topo) if self.now < p.expiry]
        if n is not None:
            paths = most_disjoint(paths, n, self.topo)
        return paths, reply

    def _flow_lookup(self, flow: Flow):
        flow.lookups += 1
        try:
            paths, reply = self.lookup_paths(flow.spec.src, flow.spec.dst, flow.spec.paths)
        except LookupError_ as exc:
            self.metrics.inc("flow_lookup_error:%s" % exc.reason)
            if exc.reason == "isolated":
                self.metrics.inc("isolated")
            return None
        if not paths:
            self.metrics.inc("isolated")
            return None
        flow.install(paths)
        flow.generation += 1
        return reply.latency

    def _flow_start(self, fid) -> None:
        flow = self.flows[fid]
        latency = self._flow_lookup(flow)
        if latency is None:
            self._flow_retry(flow)
            return
        flow.blocked_until = self.now + latency
        self.schedule(self.now + latency, self._flow_tick, fid)

    def _flow_retry(self, flow: Flow) -> None:
        if flow.id in self._retry_pending:
            return
        t = self.now + self.config.interval_intra
        if t < self._flow_stop(flow):
            self._retry_pending.add(flow.id)
            self.schedule(t, self._flow_relookup, flow.id)
        if flow.stalled_since is None:
            flow.stalled_since = self.now

    def _flow_relookup(self, fid) -> None:
        self._retry_pending.discard(fid)
        flow = self.flows[fid]
        latency = self._flow_lookup(flow)
        if latency is None:
            self._flow_retry(flow)
            return
        flow.stalled_since = None
        flow.blocked_until = self.now + latency
        if not flow.ticking:
            self.schedule(self.now + latency, self._flow_tick, fid)

    def _switch(self, flow: Flow, cause: str) -> None:
        if flow.fail_over(self.now, cause):
            self.metrics.inc("flow_switch:%s" % cause)
            return
        latency = self._flow_lookup(flow)
        if latency is None:
            self._flow_retry(flow)
        else:
            self.metrics.inc("flow_relookup")
            flow.blocked_until = self.now + latency

    def _flow_tick(self, fid) -> None:
        flow = self.flows[fid]
        stop = self._flow_stop(flow)
        if self.now >= stop:
            flow.ticking = False
            return
        flow.ticking = True
        self.schedule(self.now + 1.0 / flow.spec.rate, self._flow_tick, fid)
        if self.now < flow.blocked_until:
            return
        st = flow.current()
        if st is None:
            self._switch(flow, "dead")
            st = flow.current()
        if st is None or self.now < flow.blocked_until:
            self.metrics.inc("flow.%s.unsent" % fid)
            return
        seq = flow.sent
        flow.sent += 1
        flow.in_flight.add(seq)
        src_addr = bytes((10, 0, 0, flow.spec.host & 0xFF))
        hdr = header_for_path(st.path, src_addr, DST_HOST, struct.pack("!Q", seq))
        if self.packet_log is not None:
            self.packet_log.append(hdr.pack())
        meta = PacketMeta(fid, seq, "data", flow.active, flow.generation)
        rtt = 2 * self.config.latency * (st.path.hop_count + 1)
        self.schedule(self.now + max(self.config.ack_timeout, 2 * rtt), self._ack_check, fid, seq, flow.active,
                      flow.generation)
        self._packet(flow.spec.src, 0, hdr, meta)

    def _ack_check(self, fid, seq, path_idx, generation) -> None:
        flow = self.flows[fid]
        if seq in flow.acked or generation != flow.generation:
            return
        st = flow.paths[path_idx]
        st.unacked += 1
        if st.unacked >= UNACKED_LIMIT and st.alive:
            st.alive = False
            self.metrics.inc("flow_timeouts")
            if path_idx == flow.active:
                self._switch(flow, "timeout")

    def _flow_revoked(self, flow: Flow, subject) -> None:
        hit = flow.mark_dead(*subject)
        if hit and flow.active in hit:
            self._switch(flow, "scmp")

    def _scmp_at_source(self, fid, msg) -> None:
        flow = self.flows[fid]
        state = self.world[flow.spec.src]
        try:
            ok = scmp_verify(flow.spec.src, msg, state.drkeys, self.now)
        except FetchError:
            ok = False
        self.metrics.inc("scmp_%s" % ("accepted" if ok else "rejected"))
        if ok:
            self._flow_revoked(flow, msg.subject)

    # -- data plane ------------------------------------------------------
    def _packet(self, as_id, arrival_if, hdr, meta: PacketMeta) -> None:
        state = self.world[as_id]
        act = forward(as_id, state.secrets, lambda ifid: self._if_state(as_id, ifid), hdr, arrival_if,
                      self.now, self.metrics.counters)
        flow = self.flows.get(meta.flow) if meta.flow else None
        if act.verdict is Verdict.FORWARD:
            if meta.kind == "forged":
                self.metrics.inc("forge_of_traversals")
            link = self.topo.link_at(as_id, act.egress_if)
            remote, _, remote_if = link.other(as_id)
            meta.traversed += 1
            self.schedule(self.now + self.config.latency, self._packet, remote, remote_if, act.header, meta)
            return
        if act.verdict is Verdict.DELIVER:
            if meta.kind == "data" and flow is not None:
                if meta.seq in flow.in_flight:
                    flow.in_flight.discard(meta.seq)
                    flow.delivered += 1
                    flow.delivery_times.append(self.now)
                ack = reverse_header(act.header)
                self._packet(as_id, 0, ack, PacketMeta(meta.flow, meta.seq, "ack", meta.path, meta.generation))
            elif meta.kind == "ack" and flow is not None:
                flow.acked.add(meta.seq)
                if meta.generation == flow.generation and meta.path < len(flow.paths):
                    flow.paths[meta.path].unacked = 0
            elif meta.kind == "forged":
                self.metrics.inc("forge_of_delivered")
            return
        self.metrics.inc("packet_drop:%s" % act.reason)
        if meta.kind == "data" and flow is not None:
            flow.in_flight.discard(meta.seq)
            flow.dropped[act.reason] += 1
            if act.revoked is not None:
                msg = scmp_auth(state.secrets, flow.spec.src, ScmpType.REVOKE_INTERFACE, act.revoked, self.now)
                self.metrics.inc("scmp_sent")
                delay = self.config.latency * max(meta.traversed, 1)
                self.schedule(self.now + delay, self._scmp_at_source, meta.flow, msg)

    # -- adversaries -------------------------------------------------------
    def _attack(self, args) -> None:
        kind = args["attack"]
        self.metrics.inc("attack:%s" % kind)
        {"FORGE_PCB": self._forge_pcb, "HIJACK_ANNOUNCE": self._hijack, "FORGE_OF": self._forge_of,
         "FORGE_SCMP": self._forge_scmp}[kind](args)

    def _attacker_bases(self, as_id, min_hops=1):
        bs = self.world[as_id].beacon
        cands = [c for c in list(bs.intra_pool.values()) + list(bs.core_pool.values())
                 if len(c.pcb.hops) >= min_hops and self.now < c.pcb.expiry()]
        return sorted(cands, key=lambda c: (c.pcb.identity(), c.pcb.info.timestamp))

    def _out_links(self, as_id, core: bool):
        node = self.topo.node(as_id)
        out = []
        for ifid, link in sorted(node.interfaces.items()):
            if link.kind is LinkType.PROVIDER_TO_CUSTOMER and link.a == as_id and not core:
                out.append(link)
            elif link.kind is LinkType.CORE and core:
                out.append(link)
        return out

    def _inject(self, as_id, cand, make) -> None:
        """Send ``make(egress_if)`` PCBs on every outgoing link and register terminal ones everywhere."""
        core = cand.pcb.info.is_core
        for link in self._out_links(as_id, core):
            local_if = link.other(as_id)[1]
            for pcb in make(local_if):
                self.metrics.inc("attack_pcbs_sent")
                self.schedule(self.now + self.config.latency, self._pcb_arrival, link.other(as_id)[0], link.id, pcb,
                              as_id)
        for pcb in make(0):
            self.metrics.inc("attack_registrations")
            if core:
                for target in self.topo.core_ases():
                    self.schedule(self.now + self.latency_between(as_id, target), self._deliver_register, target,
                                  [PathSegment.from_pcb(pcb, SegKind.CORE)])
                continue
            self.schedule(self.now + self.config.latency_intra, self._deliver_register, as_id,
                          [PathSegment.from_pcb(pcb, SegKind.UP)])
            for target in self.topo.core_ases(pcb.info.isd):
                self.schedule(self.now + self.latency_between(as_id, target), self._deliver_register, target,
                              [PathSegment.from_pcb(pcb, SegKind.DOWN)])

    def _forge_pcb(self, args) -> None:
        me = args["as"]
        secrets = self.world[me].secrets
        ver = self.world[me].store.current_version(me.isd)
        bases = self._attacker_bases(me)
        if not bases:
            self.metrics.inc("attack_noop:FORGE_PCB")
            return
        cand = bases[0]
        self._inject(me, cand, lambda eg: forge_pcbs(self.topo, secrets, cand.pcb, cand.arrival_if, eg, self.now,
                                                     ver))

    def _hijack(self, args) -> None:
        me = args["as"]
        secrets = self.world[me].secrets
        ver = self.world[me].store.current_version(me.isd)
        bases = self._attacker_bases(me, 2)
        if not bases:
            self.metrics.inc("attack_noop:HIJACK_ANNOUNCE")
            return
        for cand in bases[:3]:
            self._inject(me, cand, lambda eg, c=cand: [p for p in (
                hijack_pcb(secrets, c.pcb, c.arrival_if, eg, self.now, ver),
                hijack_rewired(secrets, c.pcb, c.arrival_if, eg, self.now, ver)) if p is not None])

    def _forge_of(self, args) -> None:
        me = args["as"]
        count = int(args.get("count", 1000))
        rng = self.rng("FORGE_OF/%s" % me)
        dsts = [args["dst"]] if "dst" in args else [a for a in sorted(self.topo.ases) if a != me]
        path = None
        for dst in dsts:
            try:
                paths, _ = self.lookup_paths(me, dst)
            except LookupError_:
                continue
            if paths:
                path = paths[0]
                break
        if path is None:
            self.metrics.inc("attack_noop:FORGE_OF")
            return
        state = self.world[me]
        for i in range(count):
            hdr = header_for_path(random_mac_path(path, rng), bytes((10, 0, 0, 66)), DST_HOST)
            self.metrics.inc("forge_of_sent")
            act = forward(me, state.secrets, lambda ifid: self._if_state(me, ifid), hdr, 0, self.now,
                          self.metrics.counters)
            if act.verdict is Verdict.DROP:
                self.metrics.inc("forge_of_dropped")
                continue
            self.metrics.inc("forge_of_passed")
            if act.verdict is Verdict.FORWARD:
                link = self.topo.link_at(me, act.egress_if)
                remote, _, remote_if = link.other(me)
                self.schedule(self.now + self.config.latency, self._packet, remote, remote_if, act.header,
                              PacketMeta(None, i, "forged", traversed=1))

    def _forge_scmp(self, args) -> None:
        me = args["as"]
        if "target" in args:
            owner, ifid = args["target"]
        else:
            link = next(l for _, l in sorted(self.topo.node(me).interfaces.items()))
            owner, ifid, _ = link.other(me)[0], link.other(me)[2], None
        secrets = self.world[me].secrets
        for verifier in sorted(self.topo.ases):
            if verifier == me:
                continue
            # claims to come from the owner, tagged with the attacker's key
            msg = forge_revocation(secrets, owner, (owner, ifid), verifier, self.now)
            self.schedule(self.now + 2 * self.config.latency, self._revocation, verifier, msg, True)
            # honest tag from the attacker, but for an interface it does not own
            if owner != me:
                msg = scmp_auth(secrets, verifier, ScmpType.REVOKE_INTERFACE, (owner, ifid), self.now)
                self.schedule(self.now + 2 * self.config.latency, self._revocation, verifier, msg, True)
            self.metrics.inc("forge_scmp_sent")

    # -- end of run ----------------------------------------------------------
    def audit(self) -> tuple[int, int]:
        """Re-check every stored segment and pooled beacon against the true keys and topology.

        Returns (checked, violations). Intra-ISD routes must appear in the
        brute-force beacon enumeration; core routes must follow core links.
        """
        store = TrcStore()
        for auth in self.world.authorities.values():
            store.bootstrap(auth.trcs[0])
            for trc in auth.trcs[1:]:
                store.put(trc)
        ctx = ValidationContext(self.topo, store, self.world.certs, self.world.verify_cache)
        genuine = {route for _, route in down_chains(self.topo)}
        checked = violations = 0
        for as_id in sorted(self.topo.ases):
            state = self.world[as_id]
            items = [(seg.pcb, seg) for seg in state.ps.all_segments()]
            items += [(pcb, None) for pcb in state.beacon.all_pcbs()]
            for pcb, seg in items:
                checked += 1
                if not self._audit_one(pcb, seg, ctx, genuine):
                    violations += 1
        return checked, violations

    def _audit_one(self, pcb, seg, ctx, genuine) -> bool:
        if pcb is None:
            return False
        try:
            validate_pcb(pcb, ctx, pcb.info.timestamp)
        except PcbInvalid:
            return False
        if seg is not None and (not seg.is_contiguous(self.topo) or not seg.orientation_ok(self.topo)):
            return False
        route = tuple((h.as_id, h.ingress_if, h.egress_if) for h in pcb.hops)
        if pcb.info.is_core:
            return all(self.topo.link_at(h.as_id, h.egress_if) is not None for h in pcb.hops[:-1])
        if pcb.hops[-1].egress_if == 0:
            return route in genuine
        return any(g[:len(route) - 1] == route[:-1] and g[len(route) - 1][:2] == route[-1][:2]
                   for g in genuine if len(g) > len(route) - 1)

    def finish(self) -> Metrics:
        if self._finished:
            return self.metrics
        self._finished = True
        m = self.metrics
        m.set("sim.seed", self.seed)
        if self.duration <= 0 and not self.flows:
            return m
        checked, violations = self.audit()
        m.inc("audit.checked", checked)
        m.inc("audit.violations", violations)
        m.set("audit.pass", violations == 0)
        for fid, flow in self.flows.items():
            m.set("flow.%s.sent" % fid, flow.sent)
            m.set("flow.%s.delivered" % fid, flow.delivered)
            m.set("flow.%s.in_flight" % fid, len(flow.in_flight))
            for reason, n in sorted(flow.dropped.items()):
                m.set("flow.%s.dropped.%s" % (fid, reason), n)
            m.set("flow.%s.max_gap" % fid, float(flow.max_gap(self._flow_stop(flow))))
            m.set("flow.%s.switches" % fid, len(flow.switches))
            m.set("flow.%s.conserved" % fid, flow.conserved())
            if flow.sent:
                m.set("flow.%s.delivery_ratio" % fid, flow.delivered / flow.sent)
        for (isd, ver), installs in sorted(self.trc_log.items()):
            m.set("trc.%d.v%d.holders" % (isd, ver), len(installs))
        return m
