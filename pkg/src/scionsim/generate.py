"""Seeded random topologies for property tests."""
from __future__ import annotations

import random

from .topology import Topology, parse_topology


def random_topology(seed: int, max_ases: int = 12, peering: float = 0.15, multihome: float = 0.35) -> Topology:
    """A valid topology with 1-3 ISDs and at most ``max_ases`` ASes.

    Customers are attached only to ASes created earlier in the same ISD,
    which keeps each ISD's provider graph acyclic and reachable from its core.
    """
    rng = random.Random(seed)
    n_isds = rng.randint(1, 3)
    total = rng.randint(max(2 * n_isds, 3), max_ases)
    isds = list(range(1, n_isds + 1))
    members: dict[int, list[str]] = {isd: [] for isd in isds}
    lines = ["isd %d" % isd for isd in isds]
    cores = []
    next_if: dict[str, int] = {}
    links = []

    def ifid(as_text):
        next_if[as_text] = next_if.get(as_text, 0) + 1
        return next_if[as_text]

    def link(a, b, kind):
        links.append("link %s %d %s %d %s" % (a, ifid(a), b, ifid(b), kind))

    count = 0
    for isd in isds:
        for c in range(rng.randint(1, 2)):
            name = "%d-%d" % (isd, 100 + c)
            lines.append("as %s core=%d" % (name, isd))
            members[isd].append(name)
            cores.append(name)
            count += 1
    remaining = total - count
    for i in range(max(remaining, 0)):
        isd = isds[i % n_isds] if i < n_isds else rng.choice(isds)
        name = "%d-%d" % (isd, 200 + i)
        lines.append("as %s" % name)
        pool = members[isd]
        providers = {rng.choice(pool)}
        while rng.random() < multihome and len(providers) < len(pool):
            providers.add(rng.choice(pool))
        for p in sorted(providers):
            link(p, name, "P2C")
            if rng.random() < 0.2:
                link(p, name, "P2C")  # parallel link
        members[isd].append(name)
    for a, b in zip(cores, cores[1:]):
        link(a, b, "CORE")
    if len(cores) > 2 and rng.random() < 0.5:
        link(cores[0], cores[-1], "CORE")
    leaves = [m for isd in isds for m in members[isd] if m not in cores]
    for i, a in enumerate(leaves):
        for b in leaves[i + 1:]:
            if rng.random() < peering / max(1, len(leaves) / 4):
                link(a, b, "PEER")
    return parse_topology("\n".join(lines + links) + "\n")
