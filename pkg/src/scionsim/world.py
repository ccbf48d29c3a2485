"""
:mod:`world` --- per-AS state for one simulated internet
========================================================

Generates keys and trust material deterministically from a seed and wires
up a beacon server, a path server and a DRKey cache for every AS.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .beaconing import BeaconPolicy, BeaconServer, ValidationContext
from .crypto import AsSecrets, DrKeyCache, VerifyCache, derive_drkey
from .path_server import PathServer
from .topology import AsId, Topology
from .trust import AsCert, IsdAuthority, TrcStore


@dataclass
class SimConfig:
    k_intra: int | None = 5
    k_inter: int | None = 3
    interval_intra: float = 15.0
    interval_inter: float = 60.0
    latency: float = 0.010  # per inter-AS link
    latency_intra: float = 0.001
    weights: tuple = (0.4, 0.3, 0.2, 0.1)
    cache: bool = True
    capacity: int | None = 16
    lookup_k: int | None = 5
    revocation_ttl: float | None = None  # default: two intra-ISD intervals
    ack_timeout: float = 0.2
    warmup: float = 60.0
    core_trigger_gap: float = 1.0

    @classmethod
    def from_knobs(cls, knobs: dict) -> "SimConfig":
        cfg = cls()
        for key, value in knobs.items():
            if key == "disable_k":
                if value:
                    cfg.k_intra = cfg.k_inter = cfg.capacity = cfg.lookup_k = None
            else:
                setattr(cfg, key, value)
        return cfg

    @property
    def revocation_lifetime(self) -> float:
        return 2 * self.interval_intra if self.revocation_ttl is None else self.revocation_ttl

    def policy(self) -> BeaconPolicy:
        return BeaconPolicy(k_intra=self.k_intra, interval_intra=self.interval_intra, k_inter=self.k_inter,
                            interval_inter=self.interval_inter, weights=self.weights)


@dataclass
class AsState:
    id: AsId
    secrets: AsSecrets
    cert: AsCert
    store: TrcStore
    ctx: ValidationContext
    beacon: BeaconServer
    ps: PathServer
    drkeys: DrKeyCache
    last_versions: dict = field(default_factory=dict)


class World:
    """Everything except time: topology, trust roots, and each AS's servers."""

    def __init__(self, topo: Topology, seed: int = 0, config: SimConfig | None = None,
                 link_up=lambda link: True, metrics: Counter | None = None, fetch_trc=None):
        self.topo = topo
        self.seed = seed
        self.config = config or SimConfig()
        self.metrics = metrics if metrics is not None else Counter()
        self.verify_cache = VerifyCache()  # verification is pure, so one cache serves every AS
        self.authorities = {isd: IsdAuthority(isd, seed) for isd in sorted(topo.isds)}
        self.secrets = {a: AsSecrets.generate(a, seed) for a in sorted(topo.ases)}
        self.certs = {a: self.authorities[a.isd].issue_cert(a, s.signing.public) for a, s in self.secrets.items()}
        policy = self.config.policy()
        self.ases: dict[AsId, AsState] = {}
        for a in sorted(topo.ases):
            store = TrcStore()
            for auth in self.authorities.values():
                store.bootstrap(auth.current)
            fetch = (lambda isd, version, sender, _a=a: fetch_trc(_a, isd, version, sender)) if fetch_trc else None
            ctx = ValidationContext(topo, store, self.certs, self.verify_cache, fetch, self.metrics)
            beacon = BeaconServer(a, topo, self.secrets[a], policy, ctx, link_up)
            drkeys = DrKeyCache(a, self._drkey_fetcher)
            ps = PathServer(a, topo, ctx, drkeys, self.config.capacity, self.config.lookup_k, self.config.cache,
                            self.config.revocation_lifetime, self.metrics)
            self.ases[a] = AsState(a, self.secrets[a], self.certs[a], store, ctx, beacon, ps, drkeys,
                                   {isd: 1 for isd in topo.isds})

    def _drkey_fetcher(self, origin: AsId, requester: AsId, now: float):
        self.metrics["drkey_exchanges"] += 1
        return derive_drkey(self.secrets[origin], requester, now)

    def __getitem__(self, as_id: AsId) -> AsState:
        return self.ases[as_id]

    def path_servers(self) -> dict:
        return {a: s.ps for a, s in self.ases.items()}
