"""
:mod:`topology` --- AS-level world model
========================================

ISDs, ASes (core or not), typed inter-AS links and per-AS interface
identifiers, plus the line-oriented topology file format::

    isd 1
    as 1-11 core=1 name=C1
    as 1-12 member=1,2
    link 1-11 1 1-12 1 P2C      # provider first

A :class:`Topology` is immutable once :func:`load_topology` returns it.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

MAX_IFID = 4095


class TopologyError(ValueError):
    """Raised when a topology document fails to parse or validate."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


@dataclass(frozen=True, order=True)
class AsId:
    isd: int
    local: int

    def __post_init__(self):
        if not 0 < self.isd < 1 << 16:
            raise ValueError("ISD id out of range: %r" % self.isd)
        if not 0 <= self.local < 1 << 32:
            raise ValueError("AS id out of range: %r" % self.local)

    @classmethod
    def parse(cls, text: str) -> "AsId":
        try:
            isd, local = text.split("-")
            return cls(int(isd), int(local))
        except ValueError:
            raise ValueError("malformed AS id %r (expected <isd>-<local>)" % text) from None

    def pack(self) -> bytes:
        return struct.pack("!HI", self.isd, self.local)

    @classmethod
    def unpack(cls, raw: bytes) -> "AsId":
        return cls(*struct.unpack("!HI", raw))

    def __str__(self):
        return "%d-%d" % (self.isd, self.local)

    def __repr__(self):
        return "AsId(%s)" % self


class LinkType(enum.Enum):
    CORE = "CORE"
    PROVIDER_TO_CUSTOMER = "P2C"
    PEERING = "PEER"


@dataclass(frozen=True)
class Link:
    """An inter-AS link. For ``PROVIDER_TO_CUSTOMER``, ``a`` is the provider."""

    id: str
    a: AsId
    a_if: int
    b: AsId
    b_if: int
    kind: LinkType
    labels: frozenset = frozenset()

    def other(self, as_id: AsId) -> tuple[AsId, int, int]:
        """(remote AS, local interface, remote interface) as seen from ``as_id``."""
        if as_id == self.a:
            return self.b, self.a_if, self.b_if
        if as_id == self.b:
            return self.a, self.b_if, self.a_if
        raise KeyError("%s is not an endpoint of link %s" % (as_id, self.id))

    def endpoints(self) -> frozenset:
        return frozenset({(self.a, self.a_if), (self.b, self.b_if)})


@dataclass
class AsNode:
    id: AsId
    core_in: frozenset
    member_of: frozenset
    interfaces: dict = field(default_factory=dict)  # ifid -> Link
    name: str | None = None

    @property
    def is_core(self) -> bool:
        return bool(self.core_in)

    def label(self) -> str:
        return self.name or str(self.id)


class Topology:
    def __init__(self, isds: Iterable[int], ases: Iterable[AsNode], links: Iterable[Link]):
        self.isds = frozenset(isds)
        self.ases = {node.id: node for node in ases}
        self.links = {link.id: link for link in links}
        self.warnings: list[str] = []
        self._names = {n.name: n.id for n in self.ases.values() if n.name}

    def __len__(self):
        return len(self.ases)

    def node(self, as_id: AsId) -> AsNode:
        try:
            return self.ases[as_id]
        except KeyError:
            raise KeyError("unknown AS %s" % as_id) from None

    def resolve(self, text: str) -> AsId:
        """Accept either ``<isd>-<local>`` or a declared ``name=``."""
        if text in self._names:
            return self._names[text]
        as_id = AsId.parse(text)
        self.node(as_id)
        return as_id

    def link_at(self, as_id: AsId, ifid: int) -> Link | None:
        return self.node(as_id).interfaces.get(ifid)

    def core_ases(self, isd: int | None = None) -> list[AsId]:
        return sorted(a for a, n in self.ases.items()
                      if n.core_in and (isd is None or isd in n.core_in))

    def neighbors(self, as_id: AsId, kind: LinkType, role: str | None = None) -> set:
        """Links of ``kind`` incident to ``as_id`` as (remote AS, local if, remote if).

        For provider-to-customer links ``role`` may restrict to ``"provider"``
        (links where ``as_id`` is the provider, i.e. its customers) or
        ``"customer"``.
        """
        node = self.node(as_id)
        out = set()
        for ifid, link in node.interfaces.items():
            if link.kind is not kind:
                continue
            if role == "provider" and link.a != as_id:
                continue
            if role == "customer" and link.b != as_id:
                continue
            out.add(link.other(as_id))
        return out

    def customers(self, as_id: AsId) -> set:
        return self.neighbors(as_id, LinkType.PROVIDER_TO_CUSTOMER, "provider")

    def providers(self, as_id: AsId) -> set:
        return self.neighbors(as_id, LinkType.PROVIDER_TO_CUSTOMER, "customer")

    def isd_adjacency(self) -> dict[int, set[int]]:
        """ISDs sharing at least one link (or a multi-homed AS)."""
        adj = {isd: set() for isd in self.isds}

        def tie(xs, ys):
            for x in xs:
                for y in ys:
                    if x != y:
                        adj[x].add(y)
                        adj[y].add(x)

        for link in self.links.values():
            tie(self.ases[link.a].member_of, self.ases[link.b].member_of)
        for node in self.ases.values():
            tie(node.member_of, node.member_of)
        return adj

    def dumps(self) -> str:
        lines = ["isd %d" % i for i in sorted(self.isds)]
        for as_id in sorted(self.ases):
            node = self.ases[as_id]
            parts = ["as", str(as_id)]
            if node.core_in:
                parts.append("core=" + ",".join(str(i) for i in sorted(node.core_in)))
            extra = node.member_of - {as_id.isd} - node.core_in
            if extra:
                parts.append("member=" + ",".join(str(i) for i in sorted(node.member_of)))
            if node.name:
                parts.append("name=" + node.name)
            lines.append(" ".join(parts))
        for link in self.links.values():
            parts = ["link", str(link.a), str(link.a_if), str(link.b), str(link.b_if), link.kind.value]
            if link.labels:
                parts.append("labels=" + ",".join(sorted(link.labels)))
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    def structure(self):
        """Hashable summary used for equality checks."""
        return (
            self.isds,
            tuple(sorted((a, n.core_in, n.member_of, n.name, tuple(sorted(n.interfaces)))
                         for a, n in self.ases.items())),
            tuple(sorted((l.id, l.a, l.a_if, l.b, l.b_if, l.kind.value, l.labels)
                         for l in self.links.values())),
        )


def _isd_list(text, lineno):
    try:
        return frozenset(int(x) for x in text.split(",") if x)
    except ValueError:
        raise TopologyError("malformed ISD list %r" % text, lineno) from None


def parse_topology(text: str) -> Topology:
    isds: set[int] = set()
    nodes: dict[AsId, AsNode] = {}
    links: list[Link] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if words[0] == "isd":
                if len(words) != 2:
                    raise TopologyError("expected 'isd <id>'", lineno)
                isd = int(words[1])
                if not 0 < isd < 1 << 16:
                    raise TopologyError("ISD id out of range", lineno)
                isds.add(isd)
            elif words[0] == "as":
                as_id = AsId.parse(words[1])
                if as_id in nodes:
                    raise TopologyError("duplicate AS %s" % as_id, lineno)
                core, member, name = frozenset(), frozenset(), None
                for opt in words[2:]:
                    key, _, val = opt.partition("=")
                    if key == "core":
                        core = _isd_list(val, lineno)
                    elif key == "member":
                        member = _isd_list(val, lineno)
                    elif key == "name":
                        name = val
                    else:
                        raise TopologyError("unknown AS option %r" % key, lineno)
                member = member | core | {as_id.isd}
                nodes[as_id] = AsNode(as_id, core, member, name=name)
            elif words[0] == "link":
                if len(words) not in (6, 7):
                    raise TopologyError("expected 'link <asA> <ifA> <asB> <ifB> <kind>'", lineno)
                a, b = AsId.parse(words[1]), AsId.parse(words[3])
                a_if, b_if = int(words[2]), int(words[4])
                try:
                    kind = LinkType(words[5])
                except ValueError:
                    raise TopologyError("unknown link kind %r" % words[5], lineno) from None
                labels = frozenset()
                if len(words) == 7:
                    key, _, val = words[6].partition("=")
                    if key != "labels":
                        raise TopologyError("unknown link option %r" % key, lineno)
                    labels = frozenset(v for v in val.split(",") if v)
                for as_id, ifid in ((a, a_if), (b, b_if)):
                    if as_id not in nodes:
                        raise TopologyError("link references undeclared AS %s" % as_id, lineno)
                    if not 0 < ifid <= MAX_IFID:
                        raise TopologyError("interface id %d out of range" % ifid, lineno)
                    if ifid in nodes[as_id].interfaces:
                        raise TopologyError("duplicate interface %s#%d" % (as_id, ifid), lineno)
                if a == b:
                    raise TopologyError("self link on %s" % a, lineno)
                link = Link("l%d" % (len(links) + 1), a, a_if, b, b_if, kind, labels)
                nodes[a].interfaces[a_if] = link
                nodes[b].interfaces[b_if] = link
                links.append(link)
            else:
                raise TopologyError("unknown declaration %r" % words[0], lineno)
        except TopologyError:
            raise
        except (ValueError, IndexError) as exc:
            raise TopologyError(str(exc), lineno) from None
    topo = Topology(isds, nodes.values(), links)
    validate(topo)
    return topo


def load_topology(source) -> Topology:
    """Parse and validate a topology from a :class:`~pathlib.Path` or document text."""
    if isinstance(source, Path):
        source = source.read_text(encoding="utf-8")
    return parse_topology(source)


def builtin_topology(name: str = "fig") -> Topology:
    path = Path(__file__).parent / "data" / ("%s.topo" % name)
    return parse_topology(path.read_text(encoding="utf-8"))


def validate(topo: Topology) -> None:
    """Check the structural invariants; raise :class:`TopologyError` on the first violation."""
    if not topo.isds:
        raise TopologyError("no ISD declared")
    for node in topo.ases.values():
        unknown = node.member_of - topo.isds
        if unknown:
            raise TopologyError("AS %s references undeclared ISD %s" % (node.id, sorted(unknown)))
        if not node.core_in <= node.member_of:
            raise TopologyError("AS %s core outside membership" % node.id)
        if node.core_in and node.core_in != node.member_of:
            topo.warnings.append("AS %s is core in %s but non-core in %s" % (
                node.id, sorted(node.core_in), sorted(node.member_of - node.core_in)))
    for link in topo.links.values():
        na, nb = topo.ases[link.a], topo.ases[link.b]
        if link.kind is LinkType.CORE and not (na.is_core and nb.is_core):
            raise TopologyError("CORE link %s joins non-core AS" % link.id)
        if link.kind is LinkType.PROVIDER_TO_CUSTOMER and nb.is_core and not (nb.member_of - nb.core_in):
            raise TopologyError("core AS %s is a customer on link %s" % (link.b, link.id))
    for isd in sorted(topo.isds):
        members = [a for a, n in topo.ases.items() if isd in n.member_of]
        cores = [a for a in members if isd in topo.ases[a].core_in]
        if not cores:
            raise TopologyError("ISD %d has no core AS" % isd)
        for c in cores:
            node = topo.ases[c]
            has_link = any(l.kind is LinkType.CORE or (l.kind is LinkType.PROVIDER_TO_CUSTOMER and l.a == c)
                           for l in node.interfaces.values())
            if len(members) > 1 and not has_link:
                raise TopologyError("core AS %s has no core or customer link" % c)
        _check_customer_dag(topo, isd, members, cores)


def _check_customer_dag(topo, isd, members, cores):
    member_set = set(members)
    children = {a: set() for a in members}
    indeg = {a: 0 for a in members}
    for link in topo.links.values():
        if link.kind is LinkType.PROVIDER_TO_CUSTOMER and link.a in member_set and link.b in member_set:
            if link.b not in children[link.a]:
                children[link.a].add(link.b)
                indeg[link.b] += 1
    queue = sorted(a for a in members if indeg[a] == 0)
    seen = 0
    while queue:
        a = queue.pop()
        seen += 1
        for c in children[a]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != len(members):
        raise TopologyError("customer DAG violated in ISD %d" % isd)
    reach, stack = set(cores), list(cores)
    while stack:
        for c in children[stack.pop()]:
            if c not in reach:
                reach.add(c)
                stack.append(c)
    missing = member_set - reach
    if missing:
        raise TopologyError("ASes %s unreachable from ISD %d core" % (
            ", ".join(str(a) for a in sorted(missing)), isd))


def topological_order(topo: Topology, isd: int) -> list[AsId]:
    """Providers before customers for one ISD (raises on cycles)."""
    members = sorted(a for a, n in topo.ases.items() if isd in n.member_of)
    order, done, visiting = [], set(), set()

    def visit(a):
        if a in done:
            return
        if a in visiting:
            raise TopologyError("customer DAG violated in ISD %d" % isd)
        visiting.add(a)
        for remote, _, _ in sorted(topo.providers(a)):
            if isd in topo.ases[remote].member_of:
                visit(remote)
        visiting.discard(a)
        done.add(a)
        order.append(a)

    for a in members:
        visit(a)
    return order
