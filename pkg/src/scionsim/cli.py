"""
Command-line entry point.

Exit status: 0 success, 1 invalid input (topology, scenario, unknown AS,
no such path), 2 runtime failure or missing file. Commands that produce
output end with a ``digest=<sha256>`` line computed over everything
printed before it.
"""
from __future__ import annotations

import argparse
import hashlib
import struct
import sys
from collections import Counter
from pathlib import Path

from .engine import Engine
from .header import PacketHeader, decode_header, encode_header
from .opaque import KIND_CORE, KIND_DOWN, KIND_UP
from .path_server import LookupError_
from .scenario import ScenarioError, load_scenario
from .topology import LinkType, Topology, TopologyError, builtin_topology, load_topology
from .world import SimConfig


class UsageError(Exception):
    """Bad input that is not a parse error (unknown AS, index out of range)."""


class Output:
    def __init__(self, stream):
        self.stream = stream
        self.lines: list[str] = []

    def __call__(self, line: str = "") -> None:
        self.lines.append(line)
        print(line, file=self.stream)

    def digest(self) -> None:
        text = "\n".join(self.lines) + "\n"
        print("digest=%s" % hashlib.sha256(text.encode()).hexdigest(), file=self.stream)


def _topology(ref: str | None) -> Topology:
    if ref is None or ref.startswith("builtin:"):
        return builtin_topology((ref or "builtin:fig").split(":", 1)[1])
    return load_topology(Path(ref))


def _as(topo: Topology, text: str):
    try:
        return topo.resolve(text)
    except (KeyError, ValueError, TopologyError):
        raise UsageError("unknown AS %r" % text) from None


def cmd_check_topo(args, out: Output) -> int:
    topo = _topology(args.topo)
    kinds = Counter(link.kind for link in topo.links.values())
    for isd in sorted(topo.isds):
        cores = ", ".join(topo.node(c).label() for c in topo.core_ases(isd))
        members = sum(1 for n in topo.ases.values() if isd in n.member_of)
        out("isd %d: %d members, cores %s" % (isd, members, cores))
    out("links: %d core, %d provider-customer, %d peering" % (
        kinds[LinkType.CORE], kinds[LinkType.PROVIDER_TO_CUSTOMER], kinds[LinkType.PEERING]))
    for w in topo.warnings:
        out("warning: %s" % w)
    out("%d ISDs, %d ASes, OK" % (len(topo.isds), len(topo.ases)))
    return 0


def _engine_for(args) -> Engine:
    if args.scenario:
        sc = load_scenario(args.scenario, _topology(args.topo) if args.topo else None)
        if args.seed is not None:
            sc.seed = args.seed
        return Engine(sc.topology, scenario=sc, record_packets=bool(getattr(args, "dump_packets", None)))
    return Engine(_topology(args.topo), SimConfig(), seed=args.seed or 0)


def cmd_run(args, out: Output) -> int:
    if not args.scenario:
        raise UsageError("run needs --scenario")
    engine = _engine_for(args)
    metrics = engine.run()
    export = metrics.export()
    if args.out:
        Path(args.out).write_text(export)
    if args.format == "records":
        for line in metrics.export_lines():
            out(line)
    else:
        _summary(metrics.export_lines(), out)
    if args.dump_packets:
        with open(args.dump_packets, "wb") as fh:
            for raw in engine.packet_log:
                fh.write(struct.pack("!I", len(raw)) + raw)
    print("digest=%s" % metrics.digest(), file=out.stream)
    return 0


def _summary(lines, out: Output) -> None:
    values = dict(line.split("=", 1) for line in lines)
    keys = ["sim.events", "pcb_sent", "pcb_received", "ps_registered", "ps_messages", "ps_cache_hit",
            "revocation_purged", "beacon_rate_checks", "beacon_rate_violations", "audit.checked",
            "audit.violations", "forge_of_sent", "forge_of_passed", "forge_scmp_purged", "isolated"]
    for key in keys:
        out("%-24s %s" % (key, values.get(key, "0")))
    flows = sorted({k.split(".")[1] for k in values if k.startswith("flow.")})
    for fid in flows:
        get = lambda name: values.get("flow.%s.%s" % (fid, name), "0")
        out("flow %s: sent=%s delivered=%s max_gap=%s switches=%s" % (
            fid, get("sent"), get("delivered"), get("max_gap"), get("switches")))
    for key in sorted(k for k in values if k.startswith("trc.") and k.endswith(".holders")):
        out("%s %s" % (key, values[key]))


def _paths(args):
    engine = _engine_for(args)
    src, dst = _as(engine.topo, args.src), _as(engine.topo, args.dst)
    engine.run(until=args.after)
    try:
        paths, _ = engine.lookup_paths(src, dst)
    except LookupError_ as exc:
        raise UsageError("lookup failed: %s" % exc.reason) from None
    return engine, paths


_KINDS = {KIND_UP: "UP", KIND_DOWN: "DOWN", KIND_CORE: "CORE"}


def describe(hdr: PacketHeader) -> str:
    parts = []
    for info, ofs in hdr.parts:
        flags = "".join(c for c, on in (("C", info.consdir), ("S", info.shortcut), ("P", info.peering)) if on)
        hops = ",".join("%d>%d%s" % (of.ingress, of.egress, "p" if of.peering else "") for of in ofs)
        parts.append("%s[%s isd=%d ts=%d %s]" % (_KINDS.get(info.kind, "?"), flags or "-", info.isd,
                                                info.timestamp, hops))
    return "parts=%d cur=%d/%d path=%dB total=%dB %s" % (len(hdr.parts), hdr.info_idx, hdr.of_idx,
                                                        hdr.path_len, hdr.total_len, " ".join(parts))


def cmd_paths(args, out: Output) -> int:
    engine, paths = _paths(args)
    topo = engine.topo
    for i, p in enumerate(paths):
        seq = " ".join(topo.node(a).label() for a in p.as_sequence)
        raw = encode_header(p)
        if args.format == "records":
            out("%d\t%s\t%s\t%d\t%d\t%s" % (i, p.case_tag.name, ",".join(str(a) for a in p.as_sequence),
                                            p.hop_count, len(raw), raw.hex()))
        else:
            out("%d %s %s hops=%d header=%dB" % (i, p.case_tag.name, seq, p.hop_count, len(raw)))
    if not paths:
        out("no path")
    out.digest()
    return 0 if paths else 1


def cmd_dump_header(args, out: Output) -> int:
    engine, paths = _paths(args)
    if not 0 <= args.paths_index < len(paths):
        raise UsageError("path index %d out of range (%d paths)" % (args.paths_index, len(paths)))
    raw = encode_header(paths[args.paths_index])
    hdr = decode_header(raw)
    again = decode_header(hdr.pack())
    out(raw.hex())
    out("case: %s" % paths[args.paths_index].case_tag.name)
    out("path region: %d bytes" % hdr.path_len)
    out("decoded:   %s" % describe(hdr))
    out("redecoded: %s" % describe(again))
    out.digest()
    return 0 if describe(hdr) == describe(again) else 2


def cmd_report(args, out: Output) -> int:
    if args.metrics:
        lines = [l for l in Path(args.metrics).read_text().splitlines() if "=" in l]
    elif args.scenario:
        lines = _engine_for(args).run().export_lines()
    else:
        raise UsageError("report needs --metrics or --scenario")
    _summary(lines, out)
    out.digest()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scion-sim", description=__doc__.strip().splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--topo", help="topology file or builtin:<name> (default builtin:fig)")
    common.add_argument("--scenario", help="scenario file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="write the metrics export here")
    common.add_argument("--format", choices=("text", "records"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check-topo", parents=[common], help="validate a topology")
    run = sub.add_parser("run", parents=[common], help="run a scenario")
    run.add_argument("--dump-packets", help="write every sent data packet, length-prefixed")
    for name in ("paths", "dump-header"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--from", dest="src", required=True)
        p.add_argument("--to", dest="dst", required=True)
        p.add_argument("--after", type=float, default=90.0, help="simulated seconds of beaconing first")
        if name == "dump-header":
            p.add_argument("--paths-index", type=int, default=0)
    report = sub.add_parser("report", parents=[common], help="summarize a metrics export")
    report.add_argument("--metrics", help="metrics export written by run --out")
    return parser


COMMANDS = {"check-topo": cmd_check_topo, "run": cmd_run, "paths": cmd_paths, "dump-header": cmd_dump_header,
            "report": cmd_report}


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    out = Output(stdout)
    try:
        return COMMANDS[args.command](args, out)
    except (TopologyError, ScenarioError, UsageError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
