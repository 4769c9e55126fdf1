import json
import subprocess
import sys

import numpy as np
import pytest

from ghostfiber.cli import load_experiment, main, reference_frequency, resolve_config_digitizers
from ghostfiber.io import read_bfs_csv, read_image_csv, read_map_csv, read_records_csv
from ghostfiber.spectroscopy import measure_profile
from ghostfiber.validation import ConfigError

FIBER = {
    "schema_version": 1,
    "group_index": 1.4682,
    "attenuation_db_per_km": 0.2,
    "pump_w": 0.01,
    "probe_w": 0.001,
    "mode": "brillouin_gain",
    "segments": [
        {"length_m": 120.0, "bfs_mhz": 10860.0, "gain": 0.25, "linewidth_mhz": 30.0},
        {"length_m": 40.0, "bfs_mhz": 10900.0, "gain": 0.25, "linewidth_mhz": 30.0},
    ],
}

CONFIG = {
    "schema_version": 1,
    "fiber": "tiny_fiber.json",
    "plan": {"k": 5, "bit_duration_ns": 50, "shifts": 2},
    "digitizer": {
        "resolution_bits": 14,
        "full_scale": "auto",
        "noise": {"fraction_of_mean_bucket": 0.002},
    },
    "sweep": {"start_mhz": 10800.0, "stop_mhz": 10920.0, "step_mhz": 2.0},
    "method": "whgi",
    "seed": 7,
    "output_dir": "out",
}


@pytest.fixture()
def config_path(tmp_path):
    (tmp_path / "tiny_fiber.json").write_text(json.dumps(FIBER))
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_console_script_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "ghostfiber.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout


def test_config_error_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--config", "builtin:nope"]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "fiber": "f.json", "surprise": 1}))
    assert main(["sweep", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "surprise" in err
    old = tmp_path / "old.json"
    old.write_text(json.dumps({**CONFIG, "schema_version": 2}))
    assert main(["sweep", "--config", str(old)]) == 2


def test_missing_records_is_runtime_error(config_path, tmp_path):
    code = main([
        "reconstruct", "--config", config_path,
        "--records", str(tmp_path / "nothing.csv"),
        "--out", str(tmp_path / "o"),
    ])
    assert code == 3


def test_builtin_configs_load():
    for name in ("builtin:short", "builtin:long"):
        cfg = load_experiment(name)
        assert cfg.plan.frequencies_mhz
        assert cfg.fiber.total_length_m > 1000.0
    assert reference_frequency(load_experiment("builtin:short")) == 10860.0


def test_simulate_outputs_and_manifest(config_path, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config_path, "--out", str(out)]) == 0
    recs = read_records_csv(str(out / "records_10860.csv"))
    # 32 patterns x 1 section x 2 shifts
    assert len(recs) == 64
    assert {r.shift for r in recs} == {0, 1}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rate_reduction_factor"] == 64
    assert manifest["sections_required"] == 1
    assert manifest["reference_frequency_mhz"] == 10860.0
    assert manifest["frequencies_mhz"] == [10860.0]
    assert len(manifest["digitizers"]) == 1
    assert manifest["digitizers"][0]["noise_fraction"] == 0.002
    assert manifest["digitizers"][0]["sigma_at_reference"] > 0


def test_simulate_then_reconstruct_matches_library(config_path, tmp_path):
    out = tmp_path / "pipe"
    assert main([
        "simulate", "--config", config_path, "--out", str(out),
        "--frequency", "10850", "--frequency", "10860",
    ]) == 0
    assert main([
        "reconstruct", "--config", config_path, "--out", str(out),
        "--records", str(out / "records_10860.csv"),
    ]) == 0
    freq, pos, vals = read_image_csv(str(out / "image_10860.csv"))
    assert freq == 10860.0

    cfg = load_experiment(config_path)
    digs = resolve_config_digitizers(cfg)
    want = measure_profile(
        cfg.plan, cfg.fiber, 10860.0, cfg.method,
        section_digitizers=digs, pattern_seed=cfg.seed,
    )
    assert np.array_equal(vals, want.image.values)
    assert np.allclose(pos, want.image.positions_m, rtol=1e-12)


def test_dump_patterns(config_path, tmp_path):
    out = tmp_path / "sim2"
    dump = tmp_path / "patterns.txt"
    assert main([
        "simulate", "--config", config_path, "--out", str(out),
        "--dump-patterns", str(dump),
    ]) == 0
    text = dump.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("k=5 dt_ns=50")
    rows = lines[1:]
    assert len(rows) == 64  # each pattern followed by its complement
    assert set(rows[0]) <= {"0", "1"}
    # complement rows invert their predecessor
    flip = rows[1].translate(str.maketrans("01", "10"))
    assert flip == rows[0]


def test_sweep_fit_round_trip(config_path, tmp_path):
    out = tmp_path / "sweepout"
    assert main(["sweep", "--config", config_path, "--out", str(out)]) == 0
    m = read_map_csv(str(out / "map_whgi.csv"))
    assert m.method == "whgi"
    assert m.values.shape == (61, 64)
    assert main(["fit", "--map", str(out / "map_whgi.csv")]) == 0
    prof = read_bfs_csv(str(out / "bfs_whgi.csv"))
    pos = prof.positions_m
    interior = (pos > 15.0) & (pos < 105.0)
    assert np.all(np.abs(prof.bfs_mhz[interior] - 10860.0) < 2.0)


def test_method_override(config_path, tmp_path):
    out = tmp_path / "iwht"
    assert main(["sweep", "--config", config_path, "--method", "iwht",
                 "--out", str(out)]) == 0
    m = read_map_csv(str(out / "map_iwht.csv"))
    assert m.method == "iwht"


def test_compare_outputs(config_path, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", config_path, "--out", str(out)]) == 0
    for name in ("map_whgi.csv", "bfs_whgi.csv", "map_conventional.csv",
                 "bfs_conventional.csv", "comparison.json", "manifest.json"):
        assert (out / name).exists(), name
    comparison = json.loads((out / "comparison.json").read_text())
    assert comparison["conventional_n_average"] == 2**6 * 2
    assert comparison["rate_reduction_factor"] == 64
    assert comparison["n_mutually_resolved"] > 0
    assert comparison["max_abs_diff_mhz"] is not None
    conv = read_map_csv(str(out / "map_conventional.csv"))
    patterned = read_map_csv(str(out / "map_whgi.csv"))
    assert np.array_equal(conv.positions_m, patterned.positions_m)


def test_reruns_are_byte_identical(config_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--config", config_path, "--out", str(out)]) == 0
        assert main(["sweep", "--config", config_path, "--out", str(out)]) == 0
    for name in ("records_10860.csv", "map_whgi.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_load_experiment_rejects_bad_plan(tmp_path):
    (tmp_path / "tiny_fiber.json").write_text(json.dumps(FIBER))
    cfg = dict(CONFIG)
    cfg["plan"] = {"k": 5, "bit_duration_ns": 50, "window": 3}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    with pytest.raises(ConfigError, match="window"):
        load_experiment(str(path))
    cfg["plan"] = {"bit_duration_ns": 50}
    path.write_text(json.dumps(cfg))
    with pytest.raises(ConfigError, match="k"):
        load_experiment(str(path))
