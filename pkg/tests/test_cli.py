import csv
import json
from pathlib import Path

import numpy as np
import pytest

from deepempc.cli import main

VERIFY_KEYS = {
    "m_dir", "m_vol_ell", "m_vol_svm", "m_fp_ell", "m_fp_svm",
    "r_emp_ell", "r_emp_svm", "delta", "confidence",
}


def write_config(path: Path, out_dir: Path, **overrides) -> Path:
    cfg = {
        "scenario": "oscillator",
        "out_dir": str(out_dir),
        "seed": 11,
        "dataset": {"n_train": 120},
        "train": {"M": 4, "L": 1, "epochs": 15},
        "baselines": {"poly_degree": 2, "refit_horizon": 1},
        "evaluate": {"n_rollouts": 8, "controllers": ["implicit", "net"]},
        "verify": {
            "sizes": {"g": 150, "t": 80, "v": 200},
            "controller": "net",
            "oracle": "explicit",
            "nu": 20.0,
            "delta": 0.02,
        },
    }
    cfg.update(overrides)
    config_path = path / "config.json"
    config_path.write_text(json.dumps(cfg, indent=2))
    return config_path


def run_pipeline(config_path: Path, commands=("generate", "explicit", "exactnet",
                                              "train", "baselines", "evaluate", "verify",
                                              "report")):
    for command in commands:
        code = main([command, "--config", str(config_path)])
        assert code == 0, f"{command} failed"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "out"
    config_path = write_config(root, out)
    run_pipeline(config_path)
    return config_path, out


def test_generate_outputs(pipeline):
    _, out = pipeline
    with open(out / "dataset.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "x1", "u0"]
    assert len(rows) == 121
    meta = json.loads((out / "dataset_meta.json").read_text())
    assert meta["n_train"] == 120 and meta["seed"] == 11


def test_generate_audit_passes(pipeline):
    config_path, _ = pipeline
    assert main(["generate", "--config", str(config_path), "--audit"]) == 0


def test_explicit_report(pipeline):
    _, out = pipeline
    report = json.loads((out / "explicit_report.json").read_text())
    assert report["n_r"] == 5
    assert report["bytes"] == 8 * (report["n_h"] * 3 + report["n_f"] * 3)


def test_exactnet_report(pipeline):
    _, out = pipeline
    report = json.loads((out / "exactnet_report.json").read_text())
    assert report["e_prox"] < 1e-3
    assert report["width"] == 3
    assert len(report["depths_positive_part"]) == 1


def test_train_outputs(pipeline):
    _, out = pipeline
    report = json.loads((out / "train_report.json").read_text())
    assert report["params"] == 4 * 2 + 4 + 4 + 1  # (n_x+1)M + (M+1)n_u
    with open(out / "train_loss.csv") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "epoch,mse"
    assert len(lines) == 16
    assert all(np.isfinite(float(line.split(",")[1])) for line in lines[1:])


def test_baselines_report(pipeline):
    _, out = pipeline
    report = json.loads((out / "baselines_report.json").read_text())
    assert report["poly"]["kB"] == 8 * 1 * 3**2 / 1024.0
    assert report["pwa_refit"]["n_r"] == 5


def test_evaluate_reference_is_unity(pipeline):
    _, out = pipeline
    report = json.loads((out / "evaluate_report.json").read_text())
    assert report["controllers"]["implicit"]["rast"] == pytest.approx(1.0)
    assert (out / "trajectory_implicit.csv").exists()
    assert (out / "settling_net.csv").exists()


def test_verify_report_schema(pipeline):
    _, out = pipeline
    report = json.loads((out / "verify_report.json").read_text())
    assert set(report) == VERIFY_KEYS
    for key in ("m_dir", "m_vol_ell", "m_vol_svm", "m_fp_ell", "m_fp_svm",
                "r_emp_ell", "r_emp_svm"):
        assert 0.0 <= report[key] <= 1.0 or key == "m_dir"
    assert report["confidence"] == pytest.approx(1.0 - 2.0 * np.exp(-2 * 200 * 0.02**2))


def test_report_aggregation(pipeline):
    _, out = pipeline
    combined = json.loads((out / "report.json").read_text())
    assert "explicit_report" in combined and "verify_report" in combined
    assert (out / "report.txt").read_text().startswith("artifact")


def test_rerun_is_byte_identical(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    cfg_a = write_config(tmp_path, out_a)
    commands = ("generate", "explicit", "train", "evaluate")
    run_pipeline(cfg_a, commands)
    snapshot = {p.name: p.read_bytes() for p in sorted(out_a.iterdir())}
    cfg_b = write_config(tmp_path / "b_cfg", out_b) if False else None
    (tmp_path / "b_cfg").mkdir()
    cfg_b = write_config(tmp_path / "b_cfg", out_b)
    run_pipeline(cfg_b, commands)
    for p in sorted(out_b.iterdir()):
        assert snapshot[p.name] == p.read_bytes(), f"{p.name} differs"


def test_seed_flag_overrides(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, out)
    assert main(["generate", "--config", str(cfg), "--seed", "99"]) == 0
    meta = json.loads((out / "dataset_meta.json").read_text())
    assert meta["seed"] == 99


def test_exit_code_bad_config(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["generate", "--config", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"scenario": "warp_drive", "out_dir": "%s"}' % (tmp_path / "o"))
    assert main(["generate", "--config", str(bad)]) == 2


def test_exit_code_numerical_failure(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, out, dataset={"n_train": 30},
                       train={"M": 4, "L": 1, "epochs": 2})
    assert main(["generate", "--config", str(cfg)]) == 0
    # poison the dataset so training overflows on the first batch
    data = (out / "dataset.csv").read_text().splitlines()
    data[1] = "1e200,0,0"
    (out / "dataset.csv").write_text("\n".join(data) + "\n")
    assert main(["train", "--config", str(cfg)]) == 3
