import json
import math
import subprocess
import sys

import numpy as np
import pytest

from nhbloch.cli import main

PI = math.pi


def write_cfg(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(args):
    return main(args)


def test_models_listing(capsys):
    assert run_cli(["models"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "three_band_interp" in doc
    assert doc["two_band_alt"]["params"]["t_y"] == 0.5


def test_spectrum_rows_and_oracle(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "bilayer_square", "params": {"alpha": 1.0}},
        "grid": {"nx": 41, "ny": 41},
    })
    assert run_cli(["spectrum", "--config", cfg, "--out", str(tmp_path),
                    "--threads", "1"]) == 0
    lines = (tmp_path / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0] == "kx,ky,band,re_e,im_e"
    assert len(lines) == 1 + 41 * 41 * 2
    import nhbloch as nb
    model = nb.make_bilayer_square(1.0)
    for row in lines[1:40]:
        kx, ky, band, re_e, im_e = row.split(",")
        want = np.sort_complex(model.analytic_spectrum(float(kx), float(ky)))
        got = complex(float(re_e), float(im_e))
        assert min(abs(got - w) for w in want) < 1e-9


def test_spectrum_resolution_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "hn_folded", "params": {"m": 1}},
    })
    assert run_cli(["spectrum", "--config", cfg, "--out", str(tmp_path),
                    "--resolution", "32,33"]) == 0
    lines = (tmp_path / "spectrum.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 32 * 33


def test_loop_class_output(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "three_band_interp",
                  "params": {"s1": 0.5, "s2": 0.0}},
        "loops": [{"axis": "y", "fixed": 0.0, "n_steps": 256}],
    })
    assert run_cli(["loop-class", "--config", cfg,
                    "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "loop_class.json").read_text())
    assert doc["cycle_type"] == "1^1 2^1"
    assert sorted(doc["permutation"]) == [0, 1, 2]
    assert doc["composed"] is None
    assert len(doc["trajectories"]) == 3
    ws = {(w["W"], w["C"]) for w in doc["windings"]}
    assert any(c == 2 for _, c in ws)


def test_loop_class_composition(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "three_band_interp",
                  "params": {"s1": 0.25, "s2": 0.0}},
        "loops": [{"axis": "x", "fixed": -PI, "n_steps": 256},
                  {"axis": "y", "fixed": -PI, "n_steps": 256}],
    })
    assert run_cli(["loop-class", "--config", cfg,
                    "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "loop_class.json").read_text())
    assert doc["composed"]["cycle_type"] == "3^1"


def test_winding_via_cli(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "hn_folded",
                  "params": {"m": 3, "gamma0": 0.5}},
        "loops": [{"axis": "x", "fixed": 0.0, "n_steps": 512}],
        "e_ref": [1.5, 0.0],
    })
    assert run_cli(["loop-class", "--config", cfg,
                    "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "loop_class.json").read_text())
    assert {"W": 2, "C": 3} == {k: doc["windings"][0][k] for k in ("W", "C")}


def test_features_output_schema(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "two_band_alt", "params": {"eps0": 1.0}},
        "grid": {"nx": 101, "ny": 101},
    })
    assert run_cli(["features", "--config", cfg,
                    "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "features.json").read_text())
    assert set(doc) == {"eps", "phls", "relations"}
    assert len(doc["eps"]) == 2
    for ep in doc["eps"]:
        assert set(ep) == {"kx", "ky", "bands", "residual", "order"}
    assert doc["relations"] == [{"a": 0, "b": 1, "relation": "paired"}]
    for phl in doc["phls"]:
        assert set(phl) == {"kind", "bands", "homology", "endpoints",
                            "points", "exceptional_line"}
        assert phl["kind"] in ("real", "imag", "exceptional")
    out = capsys.readouterr().out
    assert "eps: 2" in out


def test_features_empty_for_hermitian_diagonal(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "two_band_alt",
                  "params": {"t_x": 0.0, "t_y": 0.0, "eps0": 1.0}},
        "grid": {"nx": 64, "ny": 64},
    })
    assert run_cli(["features", "--config", cfg,
                    "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "features.json").read_text())
    assert doc["eps"] == [] and doc["phls"] == [] and doc["relations"] == []


def test_sweep_files(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "two_band_alt",
                  "params": {"t_x": 1.0, "t_y": 0.5}},
        "grid": {"nx": 101, "ny": 101},
        "sweep": {"param": "eps0", "lo": 0.8, "hi": 0.9, "n_samples": 3,
                  "observables": [{"kind": "ep_count"}]},
    })
    assert run_cli(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert [s["observables"]["ep_count"] for s in doc["samples"]] == [0, 0, 2]
    assert len(doc["transitions"]) == 1
    assert abs(doc["transitions"][0]["value"] - math.sqrt(3) / 2) < 1e-3
    csv_lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert csv_lines[0] == 'parameter,"ep_count"'
    assert len(csv_lines) == 4


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(["spectrum", "--config", str(bad),
                    "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "spectrum.csv").exists()
    assert "config error" in capsys.readouterr().err


def test_unknown_keys_rejected(tmp_path, capsys):
    for cfg_body in (
        {"model": {"name": "hn_folded"}, "bogus": 1},
        {"model": {"name": "hn_folded", "params": {"nope": 2}}},
        {"model": {"name": "not_a_model"}},
        {"model": {"name": "hn_folded"}, "grid": {"nx": 64, "nz": 64}},
    ):
        cfg = write_cfg(tmp_path, "c.json", cfg_body)
        assert run_cli(["spectrum", "--config", cfg,
                        "--out", str(tmp_path)]) == 2
        capsys.readouterr()


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "two_band_alt",
                  "params": {"eps0": math.sqrt(3) / 2}},
        "loops": [{"axis": "y", "fixed": PI, "n_steps": 256}],
    })
    assert run_cli(["loop-class", "--config", cfg,
                    "--out", str(tmp_path)]) == 3
    assert "NearDegeneracyUnresolved" in capsys.readouterr().err


def test_artifacts_byte_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": {"name": "two_band_alt", "params": {"eps0": 1.0}},
        "grid": {"nx": 64, "ny": 64},
    })
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        out.mkdir()
        threads = 1 if sub == "a" else 2
        assert run_cli(["features", "--config", cfg, "--out", str(out),
                        "--threads", str(threads)]) == 0
        outs.append((out / "features.json").read_bytes())
    assert outs[0] == outs[1]


def test_cli_subprocess_entry():
    proc = subprocess.run([sys.executable, "-m", "nhbloch.cli", "models"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "hn_folded" in proc.stdout


CONFIG_COMMANDS = {
    "band_surfaces.json": "spectrum",
    "separable_features.json": "features",
    "intersected_features.json": "features",
    "ep_pair_loops.json": "loop-class",
    "folded_exchange_loop.json": "loop-class",
    "fractional_winding.json": "loop-class",
    "ep_creation_sweep.json": "sweep",
    "line_conversion_sweep.json": "sweep",
}


def test_shipped_configs_run_end_to_end(tmp_path):
    import pathlib
    import time
    cfg_dir = pathlib.Path(__file__).resolve().parent.parent / "configs"
    names = sorted(p.name for p in cfg_dir.glob("*.json"))
    assert names == sorted(CONFIG_COMMANDS)
    for name in names:
        out = tmp_path / name.replace(".json", "")
        out.mkdir()
        t0 = time.time()
        code = run_cli([CONFIG_COMMANDS[name], "--config",
                        str(cfg_dir / name), "--out", str(out)])
        assert code == 0, name
        assert time.time() - t0 < 300.0
        assert any(out.iterdir())
