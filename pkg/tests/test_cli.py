import json
import logging
import math
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from qtomo.cli import EXIT_CONFIG, EXIT_ETA, EXIT_IO, load_schema, main, run
from qtomo.detector_sim import DataSet

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _write(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload))
    return path


def _simulate(tmp_path, state, n=20_000, eta=1.0, seed=1, name="data", **extra):
    cfg = {"seed": seed, "state": state, "N": n, "eta": eta, "output": {"data": f"{name}.csv", "report": f"{name}.report.json"}}
    cfg.update(extra)
    assert main(["simulate", "--config", str(_write(tmp_path / f"sim_{name}.json", cfg))]) == 0
    return tmp_path / f"{name}.csv"


def _validate_report(path: Path):
    report = json.loads(path.read_text())
    jsonschema.Draft202012Validator(load_schema("report")).validate(report)
    return report


def test_simulate_writes_files_and_summary(tmp_path, capsys):
    csv_path = _simulate(tmp_path, {"kind": "coherent", "alpha": 2.0}, n=100_000)
    out = capsys.readouterr().out
    assert "N=100000" in out and "coherent" in out and "seed=1" in out
    data = DataSet.load(csv_path)
    assert len(data) == 100_000
    assert csv_path.read_text().splitlines()[0].startswith("x,phi")
    side = json.loads(csv_path.with_suffix(".json").read_text())
    assert side["seed"] == 1
    report = _validate_report(tmp_path / "data.report.json")
    assert report["results"]["state"]["kind"] == "coherent"


def test_missing_seed_is_config_error(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"state": {"kind": "vacuum"}, "N": 10, "output": {"data": "d.csv"}})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_invalid_json_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG


def test_unknown_field_is_config_error(tmp_path):
    cfg = _write(tmp_path / "c.json", {"seed": 1, "state": {"kind": "vacuum"}, "N": 10, "colour": 3, "output": {"data": "d.csv"}})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_inputs_are_io_errors(tmp_path):
    cfg = _write(tmp_path / "r.json", {"seed": 1, "data": "absent.csv", "cutoff": 3, "output": {"report": "r.json"}})
    assert main(["reconstruct", "--config", str(cfg)]) == EXIT_IO
    assert main(["reconstruct", "--config", str(tmp_path / "no_config.json")]) == EXIT_IO


def test_eta_domain_exit_code(tmp_path, capsys):
    _simulate(tmp_path, {"kind": "vacuum"}, n=1000, eta=0.4)
    cfg = _write(tmp_path / "r.json", {"seed": 1, "data": "data.csv", "cutoff": 3, "output": {"report": "r.report.json"}})
    assert main(["reconstruct", "--config", str(cfg)]) == EXIT_ETA
    assert "1/2" in capsys.readouterr().err


def test_reconstruct_vacuum(tmp_path):
    _simulate(tmp_path, {"kind": "vacuum"}, n=50_000, eta=0.9)
    cfg = {"seed": 1, "data": "data.csv", "cutoff": 4, "output": {"report": "r.report.json", "table": "rho.csv"}}
    run("reconstruct", _write(tmp_path / "r.json", cfg))
    report = _validate_report(tmp_path / "r.report.json")
    res = report["results"]
    assert abs(res["diagonal"][0] - 1.0) < 4 * res["diagonal_stderr"][0]
    assert set(report["inputs"]) == {"r.json", "data.csv", "data.json"}
    assert (tmp_path / "rho.csv").read_text().splitlines()[0] == "n,d,re,im,stderr"


def test_reruns_are_byte_identical(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    for d in (first, second):
        d.mkdir()
        _simulate(d, {"kind": "thermal", "n_th": 0.5}, n=5000, eta=0.8, seed=7)
        cfg = {"seed": 7, "data": "data.csv", "cutoff": 4, "output": {"report": "r.report.json", "table": "rho.csv"}}
        run("reconstruct", _write(d / "r.json", cfg))
    for name in ("data.csv", "data.json", "data.report.json", "r.report.json", "rho.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_seed_override(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv("QTOMO_SEED", "99")
    with caplog.at_level(logging.WARNING, logger="qtomo"):
        csv_path = _simulate(tmp_path, {"kind": "vacuum"}, n=100, seed=1)
    assert "QTOMO_SEED=99" in caplog.text
    assert json.loads(csv_path.with_suffix(".json").read_text())["seed"] == 99
    assert json.loads((tmp_path / "data.report.json").read_text())["seed"] == 99
    monkeypatch.setenv("QTOMO_SEED", "abc")
    cfg = _write(tmp_path / "c.json", {"seed": 1, "state": {"kind": "vacuum"}, "N": 10, "output": {"data": "d.csv"}})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG


@pytest.mark.parametrize("detection,kind", [(None, "single_lo"), ("two_channel", "two_channel")])
def test_twin_beam_dispatch(tmp_path, detection, kind):
    extra = {} if detection is None else {"detection": detection}
    csv_path = _simulate(tmp_path, {"kind": "twin_beam", "xi": 0.5}, n=1000, **extra)
    assert DataSet.load(csv_path).kind == kind


def test_homodyne_state_rejects_twin_detection(tmp_path):
    cfg = {"seed": 1, "state": {"kind": "vacuum"}, "N": 10, "detection": "two_channel", "output": {"data": "d.csv"}}
    assert main(["simulate", "--config", str(_write(tmp_path / "c.json", cfg))]) == EXIT_CONFIG


def test_test_b_on_cat_data(tmp_path):
    _simulate(tmp_path, {"kind": "cat", "alpha": 2.0}, n=100_000, eta=0.9)
    cfg = {"seed": 1, "data": "data.csv", "test": "b", "cutoff": 8, "output": {"report": "b.report.json", "table": "b.csv"}}
    run("test", _write(tmp_path / "b.json", cfg))
    res = _validate_report(tmp_path / "b.report.json")["results"]
    assert res["verdict"] >= 1
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 1 + 6


def test_test_c_on_twin_beam(tmp_path):
    _simulate(tmp_path, {"kind": "twin_beam", "xi": math.sqrt(0.5)}, n=100_000, eta=0.9, detection="two_channel")
    cfg = {"seed": 1, "data": "data.csv", "test": "c", "target": "ideal", "output": {"report": "c.report.json"}}
    res = run("test", _write(tmp_path / "c.json", cfg))["results"]
    assert abs(res["values"][0] + 2) < 4 * res["stderr"][0]


def test_joint_pmf_reconstruction(tmp_path):
    _simulate(tmp_path, {"kind": "twin_beam", "xi": 0.5}, n=20_000, eta=0.9)
    cfg = {"seed": 1, "data": "data.csv", "cutoff": 3, "method": "joint_pmf", "output": {"report": "j.report.json", "table": "j.csv"}}
    res = run("reconstruct", _write(tmp_path / "j.json", cfg))["results"]
    p = np.array(res["p"])
    assert p.shape == (3, 3)
    assert (tmp_path / "j.csv").read_text().splitlines()[0] == "n,m,p,stderr"


def test_mlfit_models(tmp_path):
    _simulate(tmp_path, {"kind": "coherent", "alpha": 1.0}, n=5000, eta=0.9)
    gauss = {"seed": 1, "data": "data.csv", "model": "gaussian", "restarts": 2, "output": {"report": "g.report.json", "table": "g.csv"}}
    res = run("mlfit", _write(tmp_path / "g.json", gauss))["results"]
    assert abs(res["parameters"]["re_mu"]["value"] - 1.0) < 4 * res["parameters"]["re_mu"]["stderr"]
    dens = {"seed": 1, "data": "data.csv", "model": "density", "cutoff": 4, "restarts": 1, "budget": 200, "output": {"report": "d.report.json"}}
    res = run("mlfit", _write(tmp_path / "d.json", dens))["results"]
    assert res["model"] == "density"
    _validate_report(tmp_path / "d.report.json")


def test_image_disc_pipeline(tmp_path):
    cfg = {
        "seed": 1,
        "source": {"kind": "disc"},
        "angles": 100,
        "cutoffs": [2, 4, 8, 16],
        "render": {"points": 41},
        "output": {"report": "i.report.json", "table": "d.csv", "image": "d.pgm"},
    }
    res = run("image", _write(tmp_path / "i.json", cfg))["results"]
    dist = [row["D"] for row in res["distance"]]
    assert all(b < a for a, b in zip(dist, dist[1:]))
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "d_H,D,trace"
    assert (tmp_path / "d.pgm").read_bytes().startswith(b"P5\n41 41\n65535\n")


def test_image_bundled_fixture(tmp_path):
    cfg = {
        "seed": 1,
        "source": {"kind": "pgm", "path": "qtomo:disc.pgm"},
        "angles": 60,
        "spots_per_angle": 300,
        "cutoffs": [4, 8],
        "output": {"report": "f.report.json"},
    }
    report = run("image", _write(tmp_path / "f.json", cfg))
    assert "qtomo:disc.pgm" in report["inputs"]
    assert report["results"]["reference"] == "d_H=8"


def test_out_directory_and_threads(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path / "c.json", {"seed": 2, "state": {"kind": "vacuum"}, "N": 50, "output": {"data": "v.csv"}})
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--threads", "1"]) == 0
    assert (out / "v.csv").exists()


def test_shipped_configs_validate():
    from qtomo.cli import validate

    for path in sorted(CONFIG_DIR.glob("*.json")):
        command = path.name.split("_")[0]
        validate(json.loads(path.read_text()), command)


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path / "c.json", {"seed": 1, "state": {"kind": "vacuum"}, "N": 10, "output": {"data": "v.csv"}})
    proc = subprocess.run([sys.executable, "-m", "qtomo.cli", "simulate", "--config", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "qtomo.cli", "frobnicate", "--config", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 2
