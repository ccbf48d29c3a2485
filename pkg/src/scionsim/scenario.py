"""
:mod:`scenario` --- scenario files
==================================

Line-oriented, ``#`` starts a comment::

    topology builtin:fig          # or a path relative to this file
    seed 7
    duration 300
    set k_intra 5
    at 100 fail-link 1-18#3 restore 130
    at 120 attack FORGE_PCB as=1-14
    at 150 trc-update 1 signers=4 rotate=1
    flow 1-19/1 1-16 rate 10 paths 2 start 60 stop 120

Links are named by id (``l3``, in file order) or by one endpoint as
``AS#ifid``. AS names from the topology (``B``) work wherever an AS id does.
"""
from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .topology import AsId, Link, Topology, TopologyError, builtin_topology, load_topology

ATTACKS = ("FORGE_PCB", "FORGE_OF", "FORGE_SCMP", "HIJACK_ANNOUNCE")

# knob -> parser
KNOBS = {
    "k_intra": lambda v: None if v in ("none", "0") else int(v),
    "k_inter": lambda v: None if v in ("none", "0") else int(v),
    "interval_intra": float,
    "interval_inter": float,
    "latency": float,
    "latency_intra": float,
    "weights": lambda v: tuple(float(x) for x in v.split(",")),
    "cache": lambda v: {"on": True, "off": False}[v],
    "capacity": lambda v: None if v in ("none", "0") else int(v),
    "lookup_k": lambda v: None if v in ("none", "0") else int(v),
    "disable_k": lambda v: {"on": True, "off": False, "1": True, "0": False}[v],
    "revocation_ttl": float,
    "ack_timeout": float,
    "warmup": float,
}


class ScenarioError(ValueError):
    def __init__(self, message, line=None):
        super().__init__("line %d: %s" % (line, message) if line else message)
        self.line = line


@dataclass
class Directive:
    time: float
    kind: str  # fail-link, attack, trc-update
    args: dict
    line: int


@dataclass
class FlowSpec:
    src: AsId
    host: int
    dst: AsId
    rate: float
    paths: int
    start: float
    stop: float | None
    line: int


@dataclass
class Scenario:
    topology: Topology
    topology_ref: str = "builtin:fig"
    seed: int = 0
    duration: float = 0.0
    knobs: dict = field(default_factory=dict)
    directives: list = field(default_factory=list)
    flows: list = field(default_factory=list)


def resolve_link(topo: Topology, text: str) -> Link:
    if text in topo.links:
        return topo.links[text]
    if "#" in text:
        as_text, _, ifid = text.partition("#")
        try:
            link = topo.link_at(topo.resolve(as_text), int(ifid))
        except (TopologyError, KeyError, ValueError):
            link = None
        if link is not None:
            return link
    raise ScenarioError("unknown link %r" % text)


def _number(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise ScenarioError("%s must be a number, got %r" % (what, text), line) from None
    if value < 0:
        raise ScenarioError("%s must be nonnegative" % what, line)
    return value


def _params(tokens, line):
    out = {}
    for tok in tokens:
        key, eq, value = tok.partition("=")
        if not eq:
            raise ScenarioError("expected key=value, got %r" % tok, line)
        out[key] = value
    return out


def _as(topo, text, line):
    try:
        return topo.resolve(text)
    except (TopologyError, KeyError, ValueError):
        raise ScenarioError("unknown AS %r" % text, line) from None


# '#' opens a comment only at a word boundary, so "F#3" names an interface
_COMMENT = re.compile(r"(^|\s)#.*")


def parse_scenario(text: str, base_dir: Path | None = None, topology: Topology | None = None) -> Scenario:
    """Parse scenario text. ``topology`` overrides the file's own reference."""
    lines = []
    topo_ref = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        try:
            tokens = shlex.split(_COMMENT.sub("", raw))
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno) from None
        if not tokens:
            continue
        if tokens[0] == "topology":
            if len(tokens) != 2:
                raise ScenarioError("topology takes one argument", lineno)
            topo_ref = (tokens[1], lineno)
        else:
            lines.append((lineno, tokens))
    if topology is None:
        ref, lineno = topo_ref or ("builtin:fig", None)
        try:
            if ref.startswith("builtin:"):
                topology = builtin_topology(ref.split(":", 1)[1])
            else:
                path = Path(ref)
                if not path.is_absolute() and base_dir is not None:
                    path = base_dir / path
                topology = load_topology(path)
        except FileNotFoundError:
            raise
        except TopologyError as exc:
            raise ScenarioError("topology %s: %s" % (ref, exc), lineno) from None
    sc = Scenario(topology, topo_ref[0] if topo_ref else "builtin:fig")
    topo = topology
    for lineno, tokens in lines:
        head, rest = tokens[0], tokens[1:]
        if head == "seed":
            if len(rest) != 1 or not rest[0].lstrip("-").isdigit():
                raise ScenarioError("seed takes one integer", lineno)
            sc.seed = int(rest[0])
        elif head == "duration":
            if len(rest) != 1:
                raise ScenarioError("duration takes one number", lineno)
            sc.duration = _number(rest[0], "duration", lineno)
        elif head == "set":
            if len(rest) != 2 or rest[0] not in KNOBS:
                raise ScenarioError("unknown setting %s" % " ".join(rest), lineno)
            try:
                sc.knobs[rest[0]] = KNOBS[rest[0]](rest[1])
            except (ValueError, KeyError):
                raise ScenarioError("bad value for %s: %r" % (rest[0], rest[1]), lineno) from None
        elif head == "at":
            sc.directives.append(_directive(topo, rest, lineno))
        elif head == "flow":
            sc.flows.append(_flow(topo, rest, lineno))
        else:
            raise ScenarioError("unknown directive %r" % head, lineno)
    sc.directives.sort(key=lambda d: (d.time, d.line))
    return sc


def _directive(topo, rest, lineno) -> Directive:
    if len(rest) < 2:
        raise ScenarioError("at needs a time and an action", lineno)
    t = _number(rest[0], "time", lineno)
    kind, args = rest[1], rest[2:]
    if kind == "fail-link":
        if len(args) not in (1, 3) or (len(args) == 3 and args[1] != "restore"):
            raise ScenarioError("usage: at <t> fail-link <link> [restore <t2>]", lineno)
        try:
            link = resolve_link(topo, args[0])
        except ScenarioError as exc:
            raise ScenarioError(str(exc), lineno) from None
        restore = _number(args[2], "restore time", lineno) if len(args) == 3 else None
        if restore is not None and restore <= t:
            raise ScenarioError("restore must come after the failure", lineno)
        return Directive(t, kind, {"link": link.id, "restore": restore}, lineno)
    if kind == "attack":
        if not args or args[0] not in ATTACKS:
            raise ScenarioError("attack kind must be one of %s" % ", ".join(ATTACKS), lineno)
        params = _params(args[1:], lineno)
        if "as" not in params:
            raise ScenarioError("attack needs as=<AS>", lineno)
        params["as"] = _as(topo, params["as"], lineno)
        if "target" in params:
            try:
                link = resolve_link(topo, params["target"])
            except ScenarioError as exc:
                raise ScenarioError(str(exc), lineno) from None
            as_text, _, ifid = params["target"].partition("#")
            owner = _as(topo, as_text, lineno) if ifid else link.a
            params["target"] = (owner, int(ifid) if ifid else link.a_if)
        if "dst" in params:
            params["dst"] = _as(topo, params["dst"], lineno)
        if "count" in params:
            params["count"] = int(_number(params["count"], "count", lineno))
        return Directive(t, kind, {"attack": args[0], **params}, lineno)
    if kind == "trc-update":
        if not args:
            raise ScenarioError("trc-update needs an ISD", lineno)
        try:
            isd = int(args[0])
        except ValueError:
            raise ScenarioError("bad ISD %r" % args[0], lineno) from None
        if isd not in topo.isds:
            raise ScenarioError("unknown ISD %d" % isd, lineno)
        params = _params(args[1:], lineno)
        unknown = set(params) - {"signers", "rotate"}
        if unknown:
            raise ScenarioError("unknown trc-update parameter %s" % sorted(unknown)[0], lineno)
        return Directive(t, kind, {"isd": isd, "signers": int(params.get("signers", 4)),
                                   "rotate": int(params.get("rotate", 0))}, lineno)
    raise ScenarioError("unknown action %r" % kind, lineno)


def _flow(topo, rest, lineno) -> FlowSpec:
    usage = "usage: flow <as>/<host> <dst> rate <pps> paths <n> [start <t>] [stop <t>]"
    if len(rest) < 6 or "/" not in rest[0] or rest[2] != "rate" or rest[4] != "paths":
        raise ScenarioError(usage, lineno)
    src_text, _, host = rest[0].rpartition("/")
    src = _as(topo, src_text, lineno)
    dst = _as(topo, rest[1], lineno)
    rate = _number(rest[3], "rate", lineno)
    if rate <= 0:
        raise ScenarioError("rate must be positive", lineno)
    try:
        n = int(rest[5])
        host_id = int(host)
    except ValueError:
        raise ScenarioError(usage, lineno) from None
    opts = rest[6:]
    if len(opts) % 2:
        raise ScenarioError(usage, lineno)
    start, stop = 60.0, None
    for key, value in zip(opts[::2], opts[1::2]):
        if key == "start":
            start = _number(value, "start", lineno)
        elif key == "stop":
            stop = _number(value, "stop", lineno)
        else:
            raise ScenarioError(usage, lineno)
    return FlowSpec(src, host_id, dst, rate, max(n, 1), start, stop, lineno)


def load_scenario(path, topology: Topology | None = None) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.parent, topology)
