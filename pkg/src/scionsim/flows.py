"""End-host multipath flows: path set, liveness, delivery accounting."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .combiner import EndToEndPath
from .oracle import interface_route
from .scenario import FlowSpec

UNACKED_LIMIT = 3


@dataclass
class PathState:
    path: EndToEndPath
    alive: bool = True
    unacked: int = 0
    interfaces: frozenset = frozenset()


@dataclass
class Flow:
    id: str
    spec: FlowSpec
    paths: list = field(default_factory=list)  # PathState, best first
    active: int = 0
    sent: int = 0
    delivered: int = 0
    dropped: Counter = field(default_factory=Counter)
    in_flight: set = field(default_factory=set)
    acked: set = field(default_factory=set)
    delivery_times: list = field(default_factory=list)
    switches: list = field(default_factory=list)  # (time, from, to, cause)
    stalled_since: float | None = None
    lookups: int = 0
    generation: int = 0  # bumped whenever the path set is replaced
    blocked_until: float = 0.0  # no sending while a lookup is outstanding
    ticking: bool = False

    def install(self, paths: list[EndToEndPath]) -> None:
        self.paths = []
        for p in paths:
            ifs = frozenset((a, i) for a, ing, eg in interface_route(p) for i in (ing, eg) if i)
            self.paths.append(PathState(p, True, 0, ifs))
        self.active = 0

    def current(self) -> PathState | None:
        if 0 <= self.active < len(self.paths) and self.paths[self.active].alive:
            return self.paths[self.active]
        return None

    def fail_over(self, now: float, cause: str) -> bool:
        """Move to the next live path; False when none is left."""
        for j in range(len(self.paths)):
            cand = (self.active + 1 + j) % len(self.paths) if self.paths else 0
            if self.paths and self.paths[cand].alive:
                if cand != self.active:
                    self.switches.append((now, self.active, cand, cause))
                self.active = cand
                return True
        return False

    def mark_dead(self, as_id, ifid) -> list[int]:
        hit = [i for i, st in enumerate(self.paths) if st.alive and (as_id, ifid) in st.interfaces]
        for i in hit:
            self.paths[i].alive = False
        return hit

    def max_gap(self, until: float) -> float:
        times = self.delivery_times
        if not times:
            return until - self.spec.start if until > self.spec.start else 0.0
        gaps = [b - a for a, b in zip(times, times[1:])]
        return max(gaps + [0.0])

    def conserved(self) -> bool:
        return self.delivered + sum(self.dropped.values()) + len(self.in_flight) == self.sent
