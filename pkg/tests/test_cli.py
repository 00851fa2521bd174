import csv
import json
import statistics
import subprocess
import sys

import numpy as np
import pytest

from pwln_interp.bounds import PwlnArchitecture
from pwln_interp.cli import main
from pwln_interp.experiments import AGGREGATE_SEED, parse_aggregate
from pwln_interp.nn import MlpModel, save_model, zeros_model

CFG = {
    "dataset": "blobs:n=600,c=3,std=0.5,seed=7",
    "model_b": {"layers": [8], "learning_rate": 0.01, "batch_size": 32, "epochs": 5},
    "model_a": {"layers": [4], "learning_rate": 0.01, "batch_size": 32, "epochs": 3},
}


def write_cfg(tmp_path, cfg=CFG, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


# --- bounds --------------------------------------------------------------------------


def test_bounds_entropy_lower_field(capsys):
    doc = run_json(capsys, ["bounds", "--arch-a", "n0=1;layers=2,2;c=2"])
    assert doc["model_a"]["entropy"]["lower"]["value"] == 4.0
    assert doc["model_a"]["complexity"]["upper"]["exact"] == "9"


def test_bounds_identical_pair(capsys):
    lit = "n0=2;layers=4,3;c=3"
    doc = run_json(capsys, ["bounds", "--arch-a", lit, "--arch-b", lit])
    assert doc["interpretability"]["a_interprets_b"]["average"] == 1.0


def test_bounds_all_numbers_finite_for_mnist_scale(capsys):
    out = run_json(capsys, ["bounds", "--arch-a", "n0=784;layers=512,256,128,64;c=10",
                            "--arch-b", "n0=784;layers=256;c=10"])

    def walk(x):
        if isinstance(x, dict):
            for v in x.values():
                walk(v)
        elif isinstance(x, list):
            for v in x:
                walk(v)
        elif isinstance(x, float):
            assert np.isfinite(x)

    walk(out)
    # ineligibility is reported in the field, verbatim
    assert "layer 1" in out["model_a"]["complexity"]["lower"]["error"]
    assert out["model_a"]["entropy"]["upper"]["log2_log2"] > 0


def test_bounds_parse_error_names_field(capsys):
    assert main(["bounds", "--arch-a", "layers="]) == 2
    err = capsys.readouterr().err
    assert "'layers'" in err and "--arch-a" in err and "position" in err


def test_bounds_class_mismatch(capsys):
    assert main(["bounds", "--arch-a", "n0=1;layers=2;c=2", "--arch-b", "n0=1;layers=2;c=3"]) == 2


def test_bounds_config_file_and_override(tmp_path, capsys):
    p = write_cfg(tmp_path, {"arch_a": "n0=1;layers=3;c=2", "arch_b": "n0=1;layers=5;c=2", "n": 1})
    doc = run_json(capsys, ["bounds", "--config", p])
    assert doc["interpretability"]["a_interprets_b"]["average"] == 0.25
    doc = run_json(capsys, ["bounds", "--config", p, "--arch-a", "n0=1;layers=4;c=2"])
    assert doc["interpretability"]["a_interprets_b"]["average"] == 0.5


def test_bounds_out_dir(tmp_path):
    assert main(["bounds", "--arch-a", "n0=2;layers=3;c=3", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "bounds.json").read_text())
    assert doc["model_a"]["entropy"]["lower"]["value"] == pytest.approx(48)


# --- distill -------------------------------------------------------------------------


def test_distill_twice_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    for d in ("a", "b"):
        assert main(["distill", "--config", cfg, "--out-dir", str(tmp_path / d)]) == 0
    for name in ("report.json", "model_a.json", "model_b.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "loss.svg").read_text().startswith("<svg")
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["tool_version"] and len(rep["config_fingerprint"]) == 64


def test_distill_plot_does_not_change_numbers(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["distill", "--config", cfg, "--out-dir", str(tmp_path / "p")])
    main(["distill", "--config", cfg, "--out-dir", str(tmp_path / "n"), "--no-plot"])
    assert not (tmp_path / "n" / "loss.svg").exists()
    assert (tmp_path / "p" / "report.json").read_bytes() == (tmp_path / "n" / "report.json").read_bytes()


def test_distill_rerun_from_embedded_config(tmp_path):
    main(["distill", "--config", write_cfg(tmp_path), "--out-dir", str(tmp_path / "a")])
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    again = write_cfg(tmp_path, rep["config"], "again.json")
    main(["distill", "--config", again, "--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_distill_seed_flag_overrides_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**CFG, "seed": 5})
    rep = run_json(capsys, ["distill", "--config", cfg, "--seed", "2"])
    assert rep["config"]["seed"] == 2 and rep["seeds"]["run"] == 2


def test_distill_query_fraction_zero_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**CFG, "query_fraction": 0})
    assert main(["distill", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    assert "/query_fraction" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_distill_missing_data_dir(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**CFG, "dataset": "mnist"})
    missing = tmp_path / "no-data"
    assert main(["distill", "--config", cfg, "--data-dir", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_distill_missing_config(tmp_path):
    assert main(["distill", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["distill"]) == 2


def test_distill_verbose_per_sample(tmp_path, capsys):
    rep = run_json(capsys, ["distill", "--config", write_cfg(tmp_path), "--verbose"])
    assert "per_sample" in rep
    assert "verbose" not in rep["config"]


# --- sweep ---------------------------------------------------------------------------


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path)
    args = ["sweep", "--config", cfg, "--axis", "query_fraction", "--values", "0.5,1.0", "--seeds", "0,1,2"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("sweep.csv", "sweep_summary.json", "sweep.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "sweep.csv")
    assert len(rows) == 6 + 2
    data = [float(r["interpretability"]) for r in rows[:3]]
    _, std = parse_aggregate(rows[6]["interpretability"])
    assert abs(std - statistics.stdev(data)) <= 1e-12


def test_sweep_one_value_one_seed(tmp_path, capsys):
    assert main(["sweep", "--config", write_cfg(tmp_path), "--axis", "width", "--values", "4", "--seeds", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 1 + 1
    assert lines[2].split(",")[1] == AGGREGATE_SEED


def test_sweep_width_order(tmp_path):
    assert main(["sweep", "--config", write_cfg(tmp_path), "--axis", "width", "--values", "8,16,32",
                 "--seeds", "0", "--out-dir", str(tmp_path)]) == 0
    agg = [r["axis_value"] for r in read_csv(tmp_path / "sweep.csv") if r["seed"] == AGGREGATE_SEED]
    assert agg == ["8", "16", "32"]


def test_sweep_axis_from_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**CFG, "axis": "optimizer", "values": ["adam", "rmsprop"], "seeds": [3]})
    assert main(["sweep", "--config", cfg]) == 0
    assert "rmsprop,3,agreement" in capsys.readouterr().out


def test_sweep_errors(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["sweep", "--config", cfg, "--axis", "width", "--values", "4", "--seeds", ""]) == 2
    assert main(["sweep", "--config", cfg, "--axis", "width"]) == 2
    assert main(["sweep", "--config", cfg, "--axis", "query_fraction", "--values", "0", "--seeds", "0"]) == 2


# --- regions -------------------------------------------------------------------------


def test_regions_zero_model_grid(tmp_path, capsys):
    p = tmp_path / "z.json"
    save_model(zeros_model(PwlnArchitecture(2, (3,), 2)), p)
    doc = run_json(capsys, ["regions", "--model", str(p), "--method", "grid", "--resolution", "64"])
    assert doc["count"] == 1 and doc["satisfied"] is True


def test_regions_exact_random_three_units(tmp_path, capsys):
    rng = np.random.default_rng(0)
    arch = PwlnArchitecture(2, (3,), 2)
    m = MlpModel(arch, [rng.normal(size=(2, 3)), rng.normal(size=(3, 2))], [rng.normal(size=3), np.zeros(2)])
    p = tmp_path / "m.json"
    save_model(m, p)
    doc = run_json(capsys, ["regions", "--model", str(p), "--method", "exact2d"])
    assert doc["count"] <= 7 and doc["complexity_upper"] == 7 and doc["satisfied"]


def test_regions_deep_exact_is_constraint_error(tmp_path, capsys):
    p = tmp_path / "d.json"
    save_model(zeros_model(PwlnArchitecture(2, (3, 3), 2)), p)
    assert main(["regions", "--model", str(p), "--method", "exact2d"]) == 2
    assert "one hidden layer" in capsys.readouterr().err


def test_regions_bad_box(tmp_path):
    p = tmp_path / "z.json"
    save_model(zeros_model(PwlnArchitecture(2, (3,), 2)), p)
    assert main(["regions", "--model", str(p), "--box", "1,0;0,1"]) == 2


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "pwln_interp.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "pwln-interp" in out.stdout
