import json

import numpy as np
import pytest

from fqchopt import __version__
from fqchopt import io
from fqchopt.cli import main
from fqchopt.config import PRESETS, config_hash, load_scenario, parse_scenario
from fqchopt.spectral import ConfigurationError

FAST = {"model": {"T": 0.02}, "study": {"snapshot_stride": 5}}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def _run(tmp_path, command, cfg, out="out", capsys=None):
    code = main([command, "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / out)])
    return code, tmp_path / out


def test_presets_build():
    for name in PRESETS:
        scen = parse_scenario({"preset": name}, env={})
        cfg = scen.model()
        assert cfg.num_steps == 250 and cfg.n == 32
    assert parse_scenario({"preset": "dirichlet-1d"}, env={}).model().operators.zero_mean is False
    assert parse_scenario({}, env={}).model().operators.zero_mean is True


@pytest.mark.parametrize("raw", [{"nope": 1}, {"model": {"dtt": 1}}, {"model": 3}, {"preset": "x"},
                                 {"model": {"dt": 3e-3}}, {"initial": {"kind": "weird"}},
                                 {"initial": {"amplitude": 1.5}}, {"cost": {"beta1": -1}},
                                 {"model": {"r": "a"}}, []])
def test_invalid_configs(raw):
    with pytest.raises(ConfigurationError):
        parse_scenario(raw, env={})


def test_seed_env_override():
    a = parse_scenario({"seed": 3}, env={})
    b = parse_scenario({"seed": 3}, env={"FQCHOPT_SEED": "11"})
    assert a.seed == 3 and b.seed == 11 and a.hash != b.hash
    with pytest.raises(ConfigurationError):
        parse_scenario({}, env={"FQCHOPT_SEED": "x"})


def test_hash_stable_and_ignores_output():
    a = parse_scenario({"output": "somewhere"}, env={})
    b = parse_scenario({}, env={})
    assert a.hash == b.hash and len(a.hash) == 16
    assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
    assert parse_scenario({"model": {"tau": 0.2}}, env={}).hash != b.hash


def test_malformed_json_location(tmp_path):
    p = _write(tmp_path, '{\n  "model": {"tau": 0.1,}\n}')
    with pytest.raises(ConfigurationError, match=r":2:\d+:"):
        load_scenario(p, env={})


def test_csv_roundtrip(tmp_path):
    vals = np.random.default_rng(0).standard_normal((5, 2))
    io.write_csv(tmp_path / "a.csv", ["x", "y"], vals, "abc")
    header, cols, data = io.read_csv(tmp_path / "a.csv")
    assert header == f"# fqchopt {__version__} config=abc"
    assert cols == ["x", "y"] and np.array_equal(data, vals)


def test_json_header_keys(tmp_path):
    io.write_json(tmp_path / "s.json", {"x": np.float64(1.5), "y": np.arange(2), "z": float("inf")}, "h")
    d = json.loads((tmp_path / "s.json").read_text())
    assert list(d)[:2] == ["fqchopt_version", "config_hash"]
    assert d["config_hash"] == "h" and d["y"] == [0, 1] and d["z"] == "inf"


def test_solve_zero_state(tmp_path, monkeypatch):
    monkeypatch.delenv("FQCHOPT_SEED", raising=False)
    cfg = {**FAST, "initial": {"kind": "constant", "mean": 0.0}}
    code, out = _run(tmp_path, "solve", cfg)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_code"] == 0 and not summary["failed_checks"]
    snaps = sorted((out / "trajectory").glob("snapshot_*.csv"))
    assert len(snaps) == 5
    for f in snaps[1:]:
        _, cols, data = io.read_csv(f)
        assert not data[:, cols.index("y")].any() and not data[:, cols.index("u")].any()


def test_every_output_carries_header(tmp_path, monkeypatch):
    monkeypatch.delenv("FQCHOPT_SEED", raising=False)
    code, out = _run(tmp_path, "solve", FAST)
    assert code == 0
    h = parse_scenario(FAST, env={}).hash
    files = [p for p in out.rglob("*") if p.is_file()]
    assert any(p.suffix == ".png" for p in files)
    for p in files:
        if p.suffix == ".csv":
            assert p.read_text().splitlines()[0] == f"# fqchopt {__version__} config={h}"
        elif p.suffix == ".json":
            d = json.loads(p.read_text())
            assert d["config_hash"] == h and d["fqchopt_version"] == __version__
        elif p.suffix == ".png":
            from PIL import Image

            assert Image.open(p).info["Description"] == f"fqchopt {__version__} config={h}"


def test_identical_configs_give_identical_csvs(tmp_path, monkeypatch):
    monkeypatch.delenv("FQCHOPT_SEED", raising=False)
    cfg = {**FAST, "control": {"kind": "random_smooth", "amplitude": 0.5}}
    _, a = _run(tmp_path, "solve", cfg, out="a")
    _, b = _run(tmp_path, "solve", cfg, out="b")
    fa = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert fa == sorted(p.relative_to(b) for p in b.rglob("*.csv")) and fa
    for rel in fa:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_exit_code_config_errors(tmp_path, capsys):
    assert main(["solve", "--config", str(_write(tmp_path, "{\n  oops\n}")), "--out", str(tmp_path / "o")]) == 2
    assert ":2:3:" in capsys.readouterr().err
    assert _run(tmp_path, "solve", {"bogus": 1})[0] == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["solve", "--config", str(_write(tmp_path, {})), "--jobs", "0"]) == 2


def test_exit_code_solver_failure(tmp_path):
    cfg = {**FAST, "model": {"T": 0.02, "max_newton": 1, "tol_newton": 1e-15},
           "initial": {"kind": "cosine", "amplitude": 0.9}}
    code, out = _run(tmp_path, "solve", cfg)
    assert code == 3
    assert json.loads((out / "summary.json").read_text())["exit_code"] == 3


def test_exit_code_failed_check(tmp_path):
    code, out = _run(tmp_path, "grad-check", {**FAST, "study": {"grad_tol": 1e-15}})
    assert code == 4
    assert "discrete_gradient" in json.loads((out / "summary.json").read_text())["failed_checks"]


def test_grad_check_passes(tmp_path):
    code, out = _run(tmp_path, "grad-check", FAST)
    assert code == 0
    assert (out / "grad_check.csv").exists()


def test_quench_sweep_writes_tables(tmp_path):
    code, out = _run(tmp_path, "quench-sweep", {"model": {"T": 0.05}, "study": {"pairs": 3}})
    summary = json.loads((out / "summary.json").read_text())
    assert code in (0, 4)
    assert all((out / f).exists() for f in ("rate.csv", "two_parameter.csv", "dt_convergence.csv"))
    assert "rate_slope" in summary["checks"]


def test_energy_factor_controls_identity_check(tmp_path):
    fast_modes = {"model": {"alpha": 0.05, "T": 0.1}, "initial": {"kind": "cosine", "amplitude": 0.3, "modes": [2]}}
    code, out = _run(tmp_path, "solve", fast_modes, out="a")
    checks = json.loads((out / "summary.json").read_text())["checks"]
    assert code == 4 and not checks["energy_identity"]["passed"] and checks["energy_dissipative"]["passed"]
    relaxed = {**fast_modes, "study": {"energy_factor": 200.0}}
    assert _run(tmp_path, "solve", relaxed, out="b")[0] == 0


def test_oracle_instance_profile():
    cfg, init, profile = parse_scenario({}, env={}).oracle_instance()
    assert cfg.n == 8 and cfg.num_steps == 4 and cfg.quench_scale == 1.0
    x = cfg.domain.coordinates()[:, 0]
    assert np.allclose(profile, np.cos(np.pi * x))
    assert parse_scenario({"preset": "dirichlet-1d"}, env={}).oracle_instance()[2] is None
    with pytest.raises(ConfigurationError):
        parse_scenario({"study": {"oracle_profile": "zigzag"}}, env={})
