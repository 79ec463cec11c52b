import csv
import hashlib
import json
import math

import pytest

from lasersim.cli import build_initial_state, parse_config, run
from lasersim.errors import ConfigError
from lasersim.hilbert import SpaceSpec
from lasersim.params import LaserParams


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def invoke(tmp_path, kind, cfg, out="out", extra=()):
    path = write(tmp_path, f"{out}.json", cfg)
    code = run([kind, "--config", str(path), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def check_manifest(out):
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["name"] for f in man["files"]}
    present = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == present
    for f in man["files"]:
        assert hashlib.sha256((out / f["name"]).read_bytes()).hexdigest() == f["sha256"]
    assert set(man["versions"]) == {"lasersim", "numpy", "scipy", "python"}
    return man


STEADY = {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}, "space": {"n_max": 24}}
EVOLVE = {
    "params": {"kappa": 1, "gamma": 1, "d": 0.5, "g": 2},
    "space": {"n_max": 12},
    "integrator": {"t_end": 1.0, "dt": 0.01, "sample_every": 0.25},
    "initial_state": "coherent:0.2+0.1i,atom:(0.6,0.1)",
    "observables": ["trace_distance_to_stationary", "mean_photon", "p(0)", "varQ", "von_neumann"],
}


def test_steady(tmp_path):
    code, out = invoke(tmp_path, "steady", STEADY, extra=["--check"])
    assert code == 0
    rep = json.loads((out / "steady_report.json").read_text())
    assert rep["stationary_residual"] < 1e-12 and rep["regime"] == "BelowThreshold"
    assert not (out / "limit_cycle_state.json").exists()
    man = check_manifest(out)
    assert man["status"] == "ok" and man["config"]["params"]["g"] == 2


def test_steady_lasing_writes_cycle(tmp_path):
    cfg = dict(STEADY, params={"kappa": 1, "gamma": 1, "d": 0.5, "g": 2})
    code, out = invoke(tmp_path, "steady", cfg)
    rep = json.loads((out / "steady_report.json").read_text())
    assert code == 0 and rep["limit_cycle_residual"] < 1e-8
    check_manifest(out)


def test_evolve_outputs_and_determinism(tmp_path):
    code, out = invoke(tmp_path, "evolve", EVOLVE, out="a")
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    assert rows[0] == ["t", "Re A", "Im A", "Re S", "Im S", "D"] + EVOLVE["observables"]
    assert len(rows) == 6
    assert all(float(x) == float(x) for x in rows[-1])
    mb = read_csv(out / "mb_trajectory.csv")
    assert [float(r[0]) for r in mb[1:]] == pytest.approx([float(r[0]) for r in rows[1:]])
    # means of the quantum flow and the classical flow agree
    assert float(mb[-1][1]) == pytest.approx(float(rows[-1][1]), abs=1e-6)
    man = check_manifest(out)
    code, out_b = invoke(tmp_path, "evolve", EVOLVE, out="b")
    for f in man["files"]:
        assert (out / f["name"]).read_bytes() == (out_b / f["name"]).read_bytes()


def test_cli_overrides(tmp_path):
    code, out = invoke(tmp_path, "evolve", EVOLVE, extra=["--n-max", "10", "--dt", "0.02"])
    man = json.loads((out / "manifest.json").read_text())
    assert code == 0 and man["config"]["space"]["n_max"] == 10 and man["config"]["integrator"]["dt"] == 0.02


def test_stability(tmp_path):
    cfg = {"params": {"kappa": 4, "gamma": 1, "d": 0.5, "g": 2},
           "sweep": {"variable": "C_b", "grid": [0.5, 10, 30, 35.9, 36.1, 40, 60]}}
    code, out = invoke(tmp_path, "stability", cfg)
    assert code == 0
    rows = read_csv(out / "stability.csv")
    assert rows[0] == ["C_b", "max_real_part", "classification"]
    assert [float(r[0]) for r in rows[1:]] == [10, 30, 35.9, 36.1, 40, 60]  # C_b <= 1 dropped
    assert [r[2] for r in rows[1:]] == ["Stable"] * 3 + ["Unstable"] * 3
    summary = json.loads((out / "stability.json").read_text())
    assert summary["closed_form_threshold"] == pytest.approx(36)
    assert len(summary["flips"]) == 1
    assert summary["flips"][0]["bisection"] == pytest.approx(36, abs=1e-3)
    check_manifest(out)


def test_verify_pass_and_fail(tmp_path):
    cfg = {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}, "space": {"n_max": 12},
           "integrator": {"t_end": 2.0, "sample_every": 0.5}, "initial_state": "product_basis:2,+",
           "bounds": ["symmetric_decay", "free_decay", "mb_lyapunov"]}
    code, out = invoke(tmp_path, "verify", cfg)
    assert code == 0
    for b in cfg["bounds"]:
        doc = json.loads((out / f"verification_{b}.json").read_text())
        assert set(doc) == {"bound_id", "hypothesis_ok", "samples_checked", "violations", "worst_margin"}
        assert doc["violations"] == 0
    check_manifest(out)
    # non-symmetric data break the hypothesis of the symmetric bound
    bad = dict(cfg, initial_state="coherent:0.3,atom:(0.5,0)", bounds=["symmetric_decay"])
    code, out = invoke(tmp_path, "verify", bad, out="bad")
    assert code == 3
    assert json.loads((out / "manifest.json").read_text())["status"] == "verification_failed"


def test_verify_drive_bounds(tmp_path):
    cfg = {"params": {"kappa": 1, "gamma": 1, "d": 0.5, "g": 2}, "space": {"n_max": 14},
           "integrator": {"t_end": 2.0, "sample_every": 0.25}, "initial_state": "coherent:0.2,atom:(0.6,0.05)",
           "drive": {"kind": "maxwell_bloch"}, "bounds": ["constant_drive", "drive_perturbation"]}
    code, out = invoke(tmp_path, "verify", cfg)
    assert code == 0


@pytest.mark.parametrize("cfg", [
    {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2, "kappa_minus": 0.8}},
    {"params": {"kappa": -1, "gamma": 1, "d": 0.2, "g": 2}},
    {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}, "initial_state": "limit_cycle:abc"},
    {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}, "integrator": {"dt": -1}},
    {"kind": "sweep", "params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}},
    {"params": {"kappa": 1, "gamma": 1, "d": 0.2, "g": 2}, "observables": ["unknown"]},
])
def test_config_errors(tmp_path, cfg):
    assert invoke(tmp_path, "evolve", cfg)[0] == 1


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["steady", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_numerical_abort(tmp_path):
    cfg = {"params": {"kappa": 1, "gamma": 1, "d": 0.5, "g": 2}, "space": {"n_max": 12},
           "integrator": {"t_end": 0.5}, "initial_state": "coherent:2.0,atom:(1,0)"}
    code, out = invoke(tmp_path, "evolve", cfg)
    assert code == 2


def test_numerical_abort_during_run(tmp_path):
    cfg = {"params": {"kappa": 0.01, "gamma": 1, "d": 0.9, "g": 3}, "space": {"n_max": 6},
           "integrator": {"t_end": 20, "dt": 0.01}, "initial_state": "coherent:0.01,atom:(1,0)"}
    code, out = invoke(tmp_path, "evolve", cfg)
    assert code == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "numerical_abort"


def test_initial_state_specs():
    p = LaserParams(1, 1, 0.5, 2)
    sp = SpaceSpec(16)
    for spec in ("stationary", "limit_cycle:0.3", "coherent:0.1-0.2j,atom:(0.5,0.2i)", "product_basis:3,-"):
        assert build_initial_state(spec, p, sp).hygiene().ok()
    for spec in ("coherent:0.1,atom:(0.9,0.5)", "garbage", "product_basis:99,+"):
        with pytest.raises(ConfigError):
            build_initial_state(spec, p, sp)


def test_parse_config_defaults():
    cfg = parse_config({"params": {"kappa_minus": 0.5, "kappa_plus": 1.5, "kappa": 1, "g": 2}}, "evolve")
    assert cfg.params.d == pytest.approx(0.5) and cfg.space.n_max == 24 and cfg.t_end == 50
    assert cfg.resolved()["integrator"]["dt"] > 0
    with pytest.raises(ConfigError):
        parse_config({"kind": "steady", "params": {"kappa": 1, "gamma": 1, "d": 0, "g": 1}}, "evolve")
    with pytest.raises(ConfigError):
        parse_config({"params": {"kappa": 1, "gamma": 1, "d": 0, "g": 1}}, "verify")


def test_sweep_bifurcation(tmp_path, monkeypatch):
    monkeypatch.setenv("LASERSIM_THREADS", "2")
    grid = [round(0.5 + 0.1 * k, 10) for k in range(26)]
    cfg = {"params": {"kappa": 1, "gamma": 1, "d": 0.5, "g": 2}, "space": {"n_max": 16},
           "integrator": {"t_end": 40, "dt": 0.01}, "initial_state": "coherent:0.1,atom:(0.6,0.1)",
           "sweep": {"variable": "C_b", "grid": grid}}
    code, out = invoke(tmp_path, "sweep", cfg)
    assert code == 0
    rows = read_csv(out / "sweep.csv")[1:]
    assert len(rows) == 26
    for r in rows:
        c, a, ref = float(r[1]), float(r[2]), float(r[3])
        if c <= 0.7:
            assert a < 1e-3
        elif c >= 1.4:
            assert ref == pytest.approx(math.sqrt(c - 1) / (math.sqrt(2) * math.sqrt(c / 0.5)))
            assert a == pytest.approx(ref, abs=1e-6)
    check_manifest(out)


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LASERSIM_THREADS", "zero")
    cfg = {"params": {"kappa": 1, "gamma": 1, "d": 0.5, "g": 2}, "space": {"n_max": 6},
           "integrator": {"t_end": 0.1}, "sweep": {"grid": [1.5, 2.0]}, "initial_state": "coherent:0.1,atom:(0.6,0)"}
    assert invoke(tmp_path, "sweep", cfg)[0] == 1
