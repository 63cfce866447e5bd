"""End-to-end CLI runs on tiny instances: artifacts, schemas, exit codes."""
import csv
import json

import numpy as np
import pytest

from ntkgan.cli import main
from ntkgan.config import DatasetConfig, ExperimentConfig, FlowSection, KernelConfig, SinkhornSection

from conftest import random_cloud


def _tiny_config(tmp_path, **flow_kwargs) -> str:
    flow = dict(loss="ipm", regime="infinite", eta=100.0, steps=3, tau=1.0, snapshot_every=1)
    flow.update(flow_kwargs)
    cfg = ExperimentConfig(
        name="tiny",
        seed=0,
        repeats=1,
        out_dir=str(tmp_path / "out"),
        dataset=DatasetConfig(name="8gaussians", count=12, seed=0),
        kernel=KernelConfig(variant="rbf"),
        flow=FlowSection(**flow),
        sinkhorn=SinkhornSection(blur=0.05),
    )
    path = tmp_path / "tiny.toml"
    cfg.save(path)
    return str(path)


def _read_metrics(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_produces_artifacts(tmp_path):
    cfg_path = _tiny_config(tmp_path)
    assert main(["run", cfg_path]) == 0
    out = tmp_path / "out" / "tiny"
    assert (out / "config.toml").exists()  # provenance sidecar
    assert ExperimentConfig.load(out / "config.toml").name == "tiny"
    rows = _read_metrics(out / "run_0" / "metrics.csv")
    assert rows[0] == ["step", "sinkhorn", "wall_time"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3"]
    snaps = json.loads((out / "run_0" / "snapshots.json").read_text())
    assert [s["step"] for s in snaps] == [0, 1, 2, 3]
    assert (out / "run_0" / "trajectory.svg").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["repeats"] == 1
    assert summary["final_sinkhorn_mean"] == pytest.approx(summary["final_sinkhorn_values"][0])


def test_run_zero_steps_single_metrics_row(tmp_path):
    cfg_path = _tiny_config(tmp_path, steps=0)
    assert main(["run", cfg_path]) == 0
    rows = _read_metrics(tmp_path / "out" / "tiny" / "run_0" / "metrics.csv")
    assert len(rows) == 2  # header + initial Sinkhorn evaluation


def test_run_repeats_override_and_summary(tmp_path):
    cfg_path = _tiny_config(tmp_path, steps=1)
    assert main(["run", cfg_path, "--repeats", "2"]) == 0
    out = tmp_path / "out" / "tiny"
    assert (out / "run_0").is_dir() and (out / "run_1").is_dir()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["repeats"] == 2
    vals = summary["final_sinkhorn_values"]
    assert summary["final_sinkhorn_mean"] == pytest.approx(float(np.mean(vals)))
    assert summary["final_sinkhorn_std"] == pytest.approx(float(np.std(vals)))


def test_run_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "x"\n\n[dataset]\nname = "cifar"\n')
    assert main(["run", str(bad)]) == 2


def test_run_is_deterministic(tmp_path):
    cfg_path = _tiny_config(tmp_path, steps=2)
    main(["run", cfg_path, "--out", str(tmp_path / "a")])
    main(["run", cfg_path, "--out", str(tmp_path / "b")])
    ma = (tmp_path / "a" / "tiny" / "run_0" / "metrics.csv").read_text()
    mb = (tmp_path / "b" / "tiny" / "run_0" / "metrics.csv").read_text()
    # identical up to wall-clock column
    strip = lambda text: [row.rsplit(",", 1)[0] for row in text.splitlines()]
    assert strip(ma) == strip(mb)


def test_field_outputs_csv_and_svg(tmp_path):
    out = tmp_path / "field"
    assert main([
        "field", "--activation", "relu", "--resolution", "5", "--out", str(out),
    ]) == 0
    with open(out / "field.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "v", "g_u", "g_v"]
    assert len(rows) == 1 + 25
    svg = (out / "field.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg


def test_field_reports_singular_points(tmp_path, capsys):
    out = tmp_path / "field"
    assert main([
        "field", "--activation", "relu", "--bias-variance", "0",
        "--resolution", "5", "--out", str(out),
    ]) == 0
    assert "singular points on grid:" in capsys.readouterr().out


def test_kernel_diagnostics(tmp_path):
    pts = tmp_path / "pts.txt"
    np.savetxt(pts, random_cloud(6, 2, 0))
    out = tmp_path / "kernel"
    assert main(["kernel", "--points", str(pts), "--out", str(out)]) == 0
    k = np.loadtxt(out / "gram.csv", delimiter=",")
    assert k.shape == (6, 6)
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["size"] == 6
    assert diag["min_eigenvalue"] >= -1e-8 * diag["trace"]
    assert diag["max_eigenvalue"] >= diag["min_eigenvalue"]


def test_kernel_rank_deficiency_reported(tmp_path):
    pts = tmp_path / "pts.json"
    pts.write_text("[[1.0, 2.0], [1.0, 2.0]]")  # identical points
    out = tmp_path / "kernel"
    assert main(["kernel", "--points", str(pts), "--out", str(out)]) == 0
    k = np.loadtxt(out / "gram.csv", delimiter=",")
    assert np.allclose(k[0], k[1])
    diag = json.loads((out / "diagnostics.json").read_text())
    assert abs(diag["min_eigenvalue"]) < 1e-8 * diag["trace"]


def test_kernel_rbf_unit_diagonal(tmp_path):
    pts = tmp_path / "pts.txt"
    np.savetxt(pts, random_cloud(4, 2, 1))
    out = tmp_path / "kernel"
    assert main(["kernel", "--variant", "rbf", "--points", str(pts), "--out", str(out)]) == 0
    k = np.loadtxt(out / "gram.csv", delimiter=",")
    assert np.allclose(np.diag(k), 1.0)


def test_eval_matches_library_call(tmp_path, capsys):
    from ntkgan import EmpiricalMeasure, SinkhornConfig, sinkhorn_divergence

    a = random_cloud(5, 2, 2)
    b = random_cloud(5, 2, 3)
    fa, fb = tmp_path / "a.json", tmp_path / "b.json"
    fa.write_text(json.dumps(a.tolist()))
    fb.write_text(json.dumps(b.tolist()))
    assert main(["eval", str(fa), str(fb), "--blur", "0.05"]) == 0
    printed = float(capsys.readouterr().out.strip())
    direct = sinkhorn_divergence(
        EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b), SinkhornConfig(blur=0.05)
    )
    assert printed == pytest.approx(direct, abs=1e-12)


def test_preset_benchmark_settings():
    from pathlib import Path

    preset = Path(__file__).resolve().parents[1] / "presets" / "paper" / "8gauss_ipm_inf_relu.toml"
    cfg = ExperimentConfig.load(preset)
    assert cfg.flow.eta == 1000.0
    assert cfg.flow.tau == 1.0
    assert cfg.flow.steps == 20000
    assert cfg.dataset.count == 500
    assert cfg.repeats == 3


def test_all_presets_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "presets"
    files = sorted(root.glob("*/*.toml"))
    assert len(files) >= 40  # every benchmark cell at two scales
    for path in files:
        cfg = ExperimentConfig.load(path)
        assert cfg.flow.steps > 0
        if "desk" in str(path.parent):
            assert cfg.dataset.count <= 256
