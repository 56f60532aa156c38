import json

import numpy as np
import pytest

from localsignal.cli import main
from localsignal.simulate import Scenario, generate


@pytest.fixture
def three_csv(tmp_path):
    ts = generate(Scenario(260, changes=[(70, 0.2), (130, -0.4), (190, 0.3)], seed=8))
    p = tmp_path / "three.csv"
    p.write_text("# planted changes at 70, 130, 190\nt,y\n" +
                 "".join(f"{i + 1},{v:.12g}\n" for i, v in enumerate(ts.values)))
    return p


def _report(path):
    d = json.loads(path.read_text())
    assert d["schema"] == 1
    assert "config" in d
    return d


def test_threshold_prints_number(capsys):
    assert main(["--m", "150", "threshold"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2.83, abs=0.05)


def test_threshold_seq_with_options(capsys):
    assert main(["threshold", "--approx", "seq", "--variant", "V1", "--m", "250", "--m0", "3", "--n0", "3"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(4.08, abs=0.05)


def test_segment_seq(three_csv, tmp_path):
    out = tmp_path / "seg.json"
    svg = tmp_path / "seg.svg"
    assert main(["segment", str(three_csv), "--out", str(out), "--svg", str(svg)]) == 0
    d = _report(out)
    locs = [det["t_hat"] for det in d["result"]["detections"]]
    assert len(locs) == 3
    assert all(abs(a - b) <= 15 for a, b in zip(locs, (70, 130, 190)))
    assert svg.read_text().lstrip().startswith("<?xml")
    table = (tmp_path / "seg.csv").read_text().splitlines()
    assert len(table) == 4


@pytest.mark.parametrize("method", ["ms", "pair"])
def test_segment_other_methods(three_csv, tmp_path, method):
    out = tmp_path / f"{method}.json"
    assert main(["segment", str(three_csv), "--method", method, "--out", str(out)]) == 0
    assert _report(out)["result"]["n_detections"] >= 2


def test_svg_is_byte_deterministic(three_csv, tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    for p in (a, b):
        assert main(["detect", str(three_csv), "--svg", str(p), "--out", str(tmp_path / "d.json")]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_detect_report(three_csv, tmp_path):
    out = tmp_path / "d.json"
    assert main(["detect", str(three_csv), "--rho", "mle", "--sigma2", "diff2", "--out", str(out)]) == 0
    d = _report(out)
    assert d["config"]["nuisance"]["sigma2"] == "diff2"
    assert d["config"]["nuisance"]["rho"] == "mle"
    assert "p_value" in json.dumps(d["result"])


def test_refit_improves_r_squared(three_csv, tmp_path):
    out = tmp_path / "r.json"
    assert main(["refit", str(three_csv), "--changes", "70,130,190", "--out", str(out)]) == 0
    res = _report(out)["result"]
    assert res["r_squared"] >= res["r_squared_baseline"]


def test_tar_lynx(tmp_path):
    out = tmp_path / "t.json"
    assert main(["tar", "lynx", "--out", str(out), "--svg", str(tmp_path / "t.svg")]) == 0
    res = _report(out)["result"]
    assert res["max_stat"] == pytest.approx(3.89, abs=0.1)


def test_simulate_series(tmp_path):
    p = tmp_path / "s.csv"
    assert main(["simulate", "--m", "120", "--ar", "0.3", "--changes", "60:0.1", "--series", str(p),
                 "--seed", "4"]) == 0
    lines = [ln for ln in p.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) in (120, 121)


def test_simulate_mc(tmp_path):
    out = tmp_path / "mc.json"
    assert main(["simulate", "--m", "100", "--approx", "rice", "--reps", "1000", "--out", str(out)]) == 0
    res = _report(out)["result"]
    assert 0.0 <= res["empirical"] <= 0.15


def test_exit_codes(tmp_path, three_csv):
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing\n")
    const = tmp_path / "const.csv"
    const.write_text("".join("5\n" for _ in range(50)))
    assert main(["detect", str(empty)]) == 2
    assert main(["detect", str(tmp_path / "missing.csv")]) == 2
    assert main(["detect", str(const)]) == 1
    assert main(["detect", str(three_csv), "--rho", "sometimes"]) == 2
    assert main(["detect", str(three_csv), "--tau-range", "9,3", "--shape", "bump"]) == 2
    assert main(["--bogus"]) == 2
    assert main(["simulate"]) == 2


def test_global_options_before_command(capsys):
    assert main(["--alpha", "0.01", "--m", "150", "threshold"]) == 0
    assert float(capsys.readouterr().out) > 3.0


def test_threads_env_bad(monkeypatch, tmp_path):
    monkeypatch.setenv("LOCAL_SIGNAL_THREADS", "x")
    assert main(["simulate", "--m", "100", "--approx", "rice", "--reps", "1000",
                 "--out", str(tmp_path / "x.json")]) == 2


def test_stdout_report(three_csv, capsys):
    assert main(["detect", str(three_csv)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["schema"] == 1 and d["command"] == "detect"
