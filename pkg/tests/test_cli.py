import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from csilab.cli import EXIT_CONFIG, EXIT_OK, EXIT_PIPELINE, main
from csilab.io import load_model, read_csv, read_model_metadata

SMALL = {
    "dependence": {"kind": "dependence", "seed": 11, "features": {"oversampling": 1},
                   "evaluation": {"sample_counts": [100, 300]}},
    "static": {"kind": "static", "seed": 7, "features": {"oversampling": 1},
               "model": {"hidden": [16, 16]}, "training": {"epochs": 2},
               "evaluation": {"n_train": 200, "n_test": 50}},
    "sequence": {"kind": "sequence", "seed": 3, "features": {"oversampling": 1},
                 "model": {"hidden": 8, "mlp_hidden": [16]}, "training": {"epochs": 2, "mlp_epochs": 2},
                 "evaluation": {"n_trajectories": 10, "windows_per_trajectory": 2}},
    "grouping": {"kind": "grouping", "seed": 7, "features": {"oversampling": 1, "snapshots": 2},
                 "model": {"hidden": [16]}, "training": {"epochs": 2},
                 "evaluation": {"n_train": 40, "user_counts": [4], "scenes_per_count": 3, "sinr_min": 0.2}},
    "scaling": {"kind": "scaling", "seed": 0, "evaluation": {"m_values": [8, 16], "trials": 50}},
}


def _write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.name != "run.log"}


@pytest.mark.parametrize("kind", list(SMALL))
def test_run_each_kind_embeds_provenance(kind, tmp_path):
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, SMALL[kind]), "--out", str(out)]) == EXIT_OK
    files = _outputs(out)
    assert "config.yaml" in files and (out / "run.log").exists()
    digest = files["config.yaml"].decode().splitlines()[0]
    assert digest.startswith("# config_hash=") and digest.endswith(f"seed={SMALL[kind]['seed']}")
    h = digest.split()[1].split("=")[1]
    for name in files:
        if name.endswith(".csv"):
            prov, _, _ = read_csv(out / name)
            assert prov == {"config_hash": h, "seed": str(SMALL[kind]["seed"])}
        elif name.endswith("_mlp.txt") or name.endswith("_gru.txt"):
            assert read_model_metadata(out / name)["config_hash"] == h
        elif name.endswith("dataset.txt"):
            assert f'"config_hash": "{h}"' in (out / name).read_text().splitlines()[1]


def test_dependence_columns(tmp_path):
    out = tmp_path / "o"
    main(["analyze", "dependence", "--config", _write(tmp_path, SMALL["dependence"]), "--out", str(out)])
    _, header, rows = read_csv(out / "dependence.csv")
    assert header[:4] == ["samples", "H_sbs_bits", "MI_bits", "avg_cca"]
    assert [r[0] for r in rows] == ["100", "300"]


def test_static_oracle_flag(tmp_path):
    raw = {**SMALL["static"], "model": {"oracle": True}}
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    _, header, rows = read_csv(out / "static_points.csv")
    assert header == ["point_id", "delay", "top1_error", "top2_error", "lo_error", "gain_ratio"]
    assert all(float(r[2]) == 0.0 for r in rows)


@pytest.mark.parametrize("kind", ["static", "grouping"])
def test_rerun_bit_identical(kind, tmp_path):
    cfg = _write(tmp_path, SMALL[kind])
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")


def test_seed_override_changes_outputs(tmp_path):
    cfg = _write(tmp_path, SMALL["static"])
    main(["run", cfg, "--out", str(tmp_path / "a")])
    main(["run", cfg, "--seed", "8", "--out", str(tmp_path / "b")])
    assert _outputs(tmp_path / "a")["static_points.csv"] != _outputs(tmp_path / "b")["static_points.csv"]


def test_config_errors_exit_2(tmp_path, capsys):
    bad = {**SMALL["static"], "training": {"epoch": 2}}
    assert main(["run", _write(tmp_path, bad)]) == EXIT_CONFIG
    assert "training.epoch" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["analyze", "scaling"]) == EXIT_CONFIG  # no config and no seed
    assert main(["analyze", "dependence", "--config", _write(tmp_path, SMALL["static"])]) == EXIT_CONFIG


def test_pipeline_errors_exit_3(tmp_path, capsys):
    raw = {**SMALL["sequence"], "evaluation": {**SMALL["sequence"]["evaluation"], "train_fraction": 1.0}}
    assert main(["run", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == EXIT_PIPELINE
    assert "stage 'build dataset'" in capsys.readouterr().err
    cfg = _write(tmp_path, SMALL["static"])
    broken = tmp_path / "broken.txt"
    broken.write_text("csilab-dataset 1\nmetadata {}\n")
    assert main(["train", "--config", cfg, "--dataset", str(broken), "--out", str(tmp_path / "o")]) == EXIT_PIPELINE


def test_dataset_train_eval_chain(tmp_path):
    cfg = _write(tmp_path, SMALL["static"])
    out = tmp_path / "o"
    assert main(["dataset", "build", "--config", cfg, "--out", str(out)]) == EXIT_OK
    ds = out / "static_dataset.txt"
    assert main(["train", "--config", cfg, "--dataset", str(ds), "--out", str(out)]) == EXIT_OK
    load_model(out / "static_mlp.txt")
    assert main(["eval", "--config", cfg, "--dataset", str(ds), "--model", str(out / "static_mlp.txt"),
                 "--out", str(out)]) == EXIT_OK
    _, _, rows = read_csv(out / "eval_points.csv")
    assert len(rows) == 50


def test_group_eval_with_model(tmp_path):
    cfg = _write(tmp_path, SMALL["grouping"])
    out = tmp_path / "o"
    assert main(["dataset", "build", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert main(["train", "--config", cfg, "--dataset", str(out / "aps_dataset.txt"), "--out", str(out)]) == EXIT_OK
    assert main(["group", "eval", "--config", cfg, "--model", str(out / "aps_mlp.txt"), "--out", str(out)]) == EXIT_OK
    _, header, rows = read_csv(out / "grouping.csv")
    assert header == ["user_count", "mode", "tau", "mean_sum_rate", "ci95"]
    assert {r[1] for r in rows} == {"inferred-aps", "true-aps", "all-at-once", "orthogonal"}


def test_scene_sample_and_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("CSILAB_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["scene", "sample", "--family", "mobility", "--seed", "2", "--users", "3"]) == EXIT_OK
    from csilab.io import load_scene
    assert len(load_scene(tmp_path / "root" / "scene-seed2.yaml").users) == 3
    assert main(["scene", "sample", "--family", "nowhere", "--seed", "2"]) == EXIT_CONFIG


def test_module_entry_point_and_threads(tmp_path):
    cfg = _write(tmp_path, SMALL["scaling"])
    r = subprocess.run([sys.executable, "-m", "csilab", "analyze", "scaling", "--config", cfg, "--threads", "1",
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "scaling.csv").exists()
    r = subprocess.run([sys.executable, "-m", "csilab", "run", str(tmp_path / "nope.yaml")], capture_output=True)
    assert r.returncode == 2
