import hashlib
import io

from scionsim.cli import main
from scionsim.metrics import Metrics


def call(*argv):
    out = io.StringIO()
    code = main(list(argv), stdout=out)
    return code, out.getvalue().splitlines()


def test_check_topo_fig():
    code, lines = call("check-topo", "--topo", "builtin:fig")
    assert code == 0
    assert lines[-1] == "4 ISDs, 15 ASes, OK"
    assert any(l.startswith("isd 1:") and "C1" in l and "C2" in l for l in lines)


def test_check_topo_invalid(tmp_path, capsys):
    bad = tmp_path / "cyclic.topo"
    bad.write_text("isd 1\nas 1-1 core=1\nas 1-2\nas 1-3\nlink 1-1 1 1-2 1 P2C\n"
                   "link 1-2 2 1-3 1 P2C\nlink 1-3 2 1-2 3 P2C\n")
    assert call("check-topo", "--topo", str(bad))[0] == 1
    assert "customer DAG" in capsys.readouterr().err


def test_check_topo_missing_file(tmp_path):
    assert call("check-topo", "--topo", str(tmp_path / "none.topo"))[0] == 2


def test_paths_listing():
    code, lines = call("paths", "--from", "B", "--to", "D")
    assert code == 0
    assert len(lines) == 2 and lines[0].startswith("0 IMMEDIATE B X C1 D")
    code, lines = call("paths", "--from", "A", "--to", "B")
    assert lines[0].split()[1] == "PEERING_SHORTCUT" and lines[1].split()[1] == "CORE_COMBINED"


def test_paths_unknown_as():
    assert call("paths", "--from", "B", "--to", "Q")[0] == 1


def test_digest_covers_output():
    _, lines = call("paths", "--from", "A", "--to", "I", "--format", "records")
    body = "\n".join(lines[:-1]) + "\n"
    assert lines[-1] == "digest=" + hashlib.sha256(body.encode()).hexdigest()


def test_dump_header_round_trip():
    code, lines = call("dump-header", "--from", "A", "--to", "B", "--paths-index", "0")
    assert code == 0
    assert "path region: 48 bytes" in lines
    decoded = next(l for l in lines if l.startswith("decoded:")).split(":", 1)[1].strip()
    redecoded = next(l for l in lines if l.startswith("redecoded:")).split(":", 1)[1].strip()
    assert decoded == redecoded
    assert len(bytes.fromhex(lines[0])) == 56


def test_dump_header_index_out_of_range():
    assert call("dump-header", "--from", "B", "--to", "D", "--paths-index", "9")[0] == 1


def test_run_is_deterministic(data, tmp_path):
    out = tmp_path / "m.txt"
    code, first = call("run", "--scenario", str(data / "fanin1.scn"), "--out", str(out))
    code2, second = call("run", "--scenario", str(data / "fanin1.scn"))
    assert code == code2 == 0
    assert first[-1] == second[-1]
    assert first[-1] == "digest=" + hashlib.sha256(out.read_bytes()).hexdigest()


def test_run_records_and_dump(data, tmp_path):
    dump = tmp_path / "pkts.bin"
    code, lines = call("run", "--scenario", str(data / "failover.scn"), "--format", "records",
                       "--dump-packets", str(dump))
    assert code == 0 and "flow.f0.sent=600" in lines
    raw, n = dump.read_bytes(), 0
    while raw:
        size = int.from_bytes(raw[:4], "big")
        raw, n = raw[4 + size:], n + 1
    assert n >= 600


def test_run_invalid_scenario_line(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("seed 1\nduration 10\nat 2 explode l1\n")
    assert call("run", "--scenario", str(bad))[0] == 1
    assert "line 3" in capsys.readouterr().err


def test_run_seed_flag_overrides(data):
    a = call("run", "--scenario", str(data / "fanin1.scn"), "--seed", "5")[1][-1]
    b = call("run", "--scenario", str(data / "fanin1.scn"), "--seed", "5")[1][-1]
    c = call("run", "--scenario", str(data / "fanin1.scn"))[1][-1]
    assert a == b != c


def test_report_from_export(data, tmp_path):
    out = tmp_path / "m.txt"
    call("run", "--scenario", str(data / "trc.scn"), "--out", str(out))
    code, lines = call("report", "--metrics", str(out))
    assert code == 0 and "trc.1.v2.holders 7" in lines


def test_metrics_export_sorted_and_stable():
    m = Metrics()
    m.inc("b")
    m.set("a", 0.5)
    m.inc("zero", 0)
    assert m.export() == "a=0.500000\nb=1\n"
    assert m.digest() == hashlib.sha256(b"a=0.500000\nb=1\n").hexdigest()
