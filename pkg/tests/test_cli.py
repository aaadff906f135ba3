import csv
import io
import json
import math

import pytest

from pennet import cli
from pennet.errors import InconsistencyError
from pennet.netstates import EdgeStateSpec, Topology
from pennet.separability import BiseparabilityCertificate, verify_certificate


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def analyze(*argv):
    code, out, err = run("analyze", *argv)
    assert code == 0, err
    return json.loads(out)


def test_star_gme():
    report = analyze("--preset", "star", "--n", "3", "--d", "2", "--p", "0.60")
    assert report["verdict"] == "GME"
    wit = next(c for c in report["certifiers"] if c["name"] == "star3-witness")
    assert wit["witness_value"] == pytest.approx(1.5 * (1 - 3 * 0.36), abs=1e-12)


def test_star_biseparable():
    report = analyze("--preset", "star", "--n", "3", "--d", "2", "--p", "0.50")
    assert report["verdict"] == "biseparable"


def test_complete_gme_in_window():
    assert analyze("--preset", "complete", "--n", "3", "--d", "2", "--p", "0.50")["verdict"] == "GME"


def test_star_gap_is_undetermined():
    assert analyze("--preset", "star", "--n", "3", "--p", "0.56")["verdict"] == "undetermined"


def test_cycle_and_tree_presets():
    assert analyze("--preset", "cycle", "--n", "8", "--p", "0.5")["verdict"] == "biseparable"
    assert analyze("--preset", "cycle", "--n", "6", "--p", "0.9")["verdict"] == "undetermined"
    assert analyze("--preset", "tree-path", "--n", "4", "--p", "0.6")["verdict"] == "biseparable"


def test_isotropic_pair():
    assert analyze("--preset", "tree-path", "--n", "2", "--p", "0.3")["verdict"] == "biseparable"
    assert analyze("--preset", "tree-path", "--n", "2", "--p", "0.4")["verdict"] == "GME"


def test_fidelity_sum_reported():
    report = analyze("--preset", "complete", "--n", "4", "--p", "0.7")
    fid = next(c for c in report["certifiers"] if c["name"] == "fidelity-sum")
    assert fid["verdict"] == "GME"
    assert report["verdict"] == "GME"


def test_topology_file(tmp_path):
    spec = EdgeStateSpec.iso(0.4)
    t = Topology(3, ((0, 1), (0, 2)), {(0, 1): spec, (0, 2): EdgeStateSpec.max_entangled(2)})
    path = tmp_path / "t.json"
    path.write_text(json.dumps(t.to_json()))
    report = analyze("--topology", str(path))
    assert report["verdict"] == "GME"
    single = next(c for c in report["certifiers"] if c["name"] == "single-noisy-star")
    assert single["witness_value"] == pytest.approx(-0.05, abs=1e-12)
    assert single["details"]["not_gmnl"] is True


def test_separable_edge_cut(tmp_path):
    t = Topology(3, ((0, 1), (1, 2)), {(0, 1): EdgeStateSpec.iso(0.9), (1, 2): EdgeStateSpec.iso(0.2)})
    path = tmp_path / "t.json"
    path.write_text(json.dumps(t.to_json()))
    report = analyze("--topology", str(path))
    assert report["verdict"] == "biseparable"
    assert report["certifiers"][0]["name"] == "separable-cut"


def test_disconnected_network(tmp_path):
    spec = EdgeStateSpec.iso(0.9)
    t = Topology(4, ((0, 1), (2, 3)), {(0, 1): spec, (2, 3): spec})
    path = tmp_path / "t.json"
    path.write_text(json.dumps(t.to_json()))
    assert analyze("--topology", str(path))["verdict"] == "biseparable"


def test_cert_out(tmp_path):
    cert_path = tmp_path / "cert.json"
    analyze("--preset", "star", "--n", "3", "--p", "0.5", "--cert-out", str(cert_path))
    cert = BiseparabilityCertificate.from_json(json.loads(cert_path.read_text()))
    assert verify_certificate(cert).passed


def test_out_file(tmp_path):
    path = tmp_path / "r.json"
    code, out, _ = run("analyze", "--preset", "star", "--n", "3", "--p", "0.5", "--out", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["verdict"] == "biseparable"


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def brackets(rows):
    out = []
    for a, b in zip(rows, rows[1:]):
        if a["classification"] != b["classification"]:
            out.append((float(a["p"]), float(b["p"])))
    return out


def test_scan_star_brackets():
    code, out, _ = run("scan", "--preset", "star", "--n", "3", "--p-grid", "0:0.02:1")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 51
    assert list(rows[0]) == ["p", "classification", "witness_value", "certificate_id"]
    b = brackets(rows)
    assert len(b) == 2
    assert b[0][0] <= 0.547 <= b[0][1]
    assert b[1][0] <= 0.577 <= b[1][1]
    assert all(r["certificate_id"] for r in rows if r["classification"] == "biseparable")


def test_scan_complete_brackets():
    code, out, _ = run("scan", "--preset", "complete", "--n", "3", "--p-grid", "0:0.02:1")
    assert code == 0
    b = brackets(read_csv(out))
    assert b[0][0] <= 0.429 <= b[0][1]
    assert b[1][0] <= 0.491 <= b[1][1]


def test_scan_is_deterministic():
    args = ("scan", "--preset", "star", "--n", "3", "--p-grid", "0.3:0.05:0.7")
    assert run(*args)[1] == run(*args)[1]


def test_game_report():
    code, out, _ = run("game", "--v", "4", "--eta", "0.1", "--K", "2")
    assert code == 0
    report = json.loads(out)
    for key in ("classical_value", "classical_bound", "quantum_value", "quantum_bound", "normalization"):
        assert math.isfinite(report[key])
    assert report["normalized"] is True
    assert report["seed"] == 0xC0FFEE


@pytest.mark.parametrize("argv,code", [
    (("game", "--v", "3", "--eta", "0.1"), 1),
    (("game", "--v", "32", "--eta", "0.1"), 2),
    (("scan", "--preset", "star", "--n", "3", "--p-grid", "0.5:0.1:0.4"), 1),
    (("scan", "--preset", "star", "--n", "3", "--p-grid", "bad"), 1),
    (("analyze", "--preset", "star", "--n", "3"), 1),
    (("analyze", "--preset", "star", "--n", "3", "--p", "0.5", "--p-grid", "0:0.1:1"), 1),
    (("analyze", "--preset", "star", "--n", "3", "--p", "1.5"), 1),
    (("analyze", "--topology", "/nonexistent.json"), 1),
    (("bogus",), 1),
    ((), 1),
])
def test_exit_codes(argv, code):
    got, _, err = run(*argv)
    assert got == code
    assert err


def test_capacity_message_suggests_smaller_v():
    _, _, err = run("game", "--v", "32", "--eta", "0.1")
    assert "v <= 16" in err


def test_inconsistency_exit_code(monkeypatch):
    def boom(*_):
        raise InconsistencyError("forced")

    monkeypatch.setattr(cli, "aggregate", boom)
    assert run("analyze", "--preset", "star", "--n", "3", "--p", "0.5")[0] == 3


def test_aggregate_rejects_conflict():
    outcomes = [cli.Outcome("a", "GME"), cli.Outcome("b", "biseparable")]
    with pytest.raises(InconsistencyError):
        cli.aggregate(outcomes)
    assert cli.aggregate([cli.Outcome("a", "inconclusive")]) == "undetermined"


def test_seed_accepts_hex():
    report = analyze("--preset", "star", "--n", "3", "--p", "0.5", "--seed", "0x10")
    assert report["seed"] == 16
