"""Batch front end: ``lasersim <kind> --config FILE --out DIR``.

Exit codes: 0 success, 1 configuration error, 2 numerical abort,
3 verification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import hashlib
import json
import logging
import math
import os
import platform
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    locate_hopf,
    sign_flips,
    stability_sweep,
    verify_explicit_bound,
)
from .closed_forms import limit_cycle_state, linear_equilibrium, stationary_state
from .errors import ConfigError, LaserSimError, NumericalAbort
from .hilbert import SpaceSpec, basis_vector, coherent_vector
from .lindblad import (
    ConstantDriveGenerator,
    DensityMatrix,
    DriveFunctions,
    DrivenGenerator,
    LinearGenerator,
    MeanFieldGenerator,
    default_dt,
    evolve,
    field_means,
    generator_meanfield,
    hygiene,
)
from .maxwell_bloch import MBState, integrate_mb, lasing_amplitude, lyapunov_certificates
from .observables import observable_functions
from .params import LaserParams, classify_regime

log = logging.getLogger("lasersim")

KINDS = ("steady", "evolve", "sweep", "stability", "verify")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
DEFAULT_OBSERVABLES = ["trace_distance_to_stationary", "mean_photon", "varQ", "varP", "linear_entropy", "von_neumann"]
MB_BOUNDS = ("mb_lyapunov", "mb_sharpened")


def fmt(x) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------- configuration

@dataclass
class ExperimentConfig:
    kind: str
    params: LaserParams
    space: SpaceSpec
    dt: float | None = None
    t_end: float = 50.0
    sample_every: float = 1.0
    initial_state: str = "stationary"
    observables: list = field(default_factory=lambda: list(DEFAULT_OBSERVABLES))
    bounds: list = field(default_factory=list)
    sweep_variable: str | None = None
    sweep_grid: list = field(default_factory=list)
    frame: str = "rotating"
    drive: dict = field(default_factory=dict)
    seed_free: bool = True
    check: bool = False

    def resolved(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "space": {"n_max": self.space.n_max},
            "integrator": {
                "dt": self.dt if self.dt is not None else default_dt(self.params, self.space),
                "t_end": self.t_end,
                "sample_every": self.sample_every,
            },
            "initial_state": self.initial_state,
            "observables": self.observables,
            "bounds": self.bounds,
            "sweep": {"variable": self.sweep_variable, "grid": self.sweep_grid},
            "frame": self.frame,
            "drive": self.drive,
            "seed_free": self.seed_free,
        }


def _num(block, key, default=None, positive=False):
    value = block.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{key} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{key} must be positive, got {value}")
    return float(value)


def parse_config(raw: dict, kind: str, n_max: int | None = None, dt: float | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("kind", kind) != kind:
        raise ConfigError(f"config kind {raw.get('kind')!r} does not match command {kind!r}")
    if "params" not in raw:
        raise ConfigError("config needs a params block")
    params = LaserParams.from_dict(raw["params"])
    space_block = raw.get("space", {})
    space = SpaceSpec(n_max if n_max is not None else space_block.get("n_max", SpaceSpec().n_max))
    integ = raw.get("integrator", {})
    if not isinstance(integ, dict):
        raise ConfigError("integrator block must be an object")
    cfg = ExperimentConfig(
        kind=kind,
        params=params,
        space=space,
        dt=dt if dt is not None else _num(integ, "dt", positive=True),
        t_end=_num(integ, "t_end", 50.0),
        sample_every=_num(integ, "sample_every", 1.0, positive=True),
        initial_state=raw.get("initial_state", "stationary"),
        observables=list(raw.get("observables", DEFAULT_OBSERVABLES)),
        bounds=list(raw.get("bounds", [])),
        frame=raw.get("frame", "rotating"),
        drive=dict(raw.get("drive", {})),
        seed_free=bool(raw.get("seed_free", True)),
    )
    if cfg.t_end < 0:
        raise ConfigError("t_end must be nonnegative")
    if cfg.frame not in ("rotating", "lab"):
        raise ConfigError(f"frame must be 'rotating' or 'lab', got {cfg.frame!r}")
    sweep = raw.get("sweep")
    if kind in ("sweep", "stability"):
        if not isinstance(sweep, dict) or not sweep.get("grid"):
            raise ConfigError(f"{kind} needs a sweep block with a nonempty grid")
        cfg.sweep_variable = sweep.get("variable", "C_b")
        cfg.sweep_grid = [_float(x) for x in sweep["grid"]]
        if kind == "stability" and cfg.sweep_variable != "C_b":
            raise ConfigError("stability sweeps run over C_b")
        if cfg.sweep_variable not in ("C_b", "kappa", "gamma", "d", "g", "omega"):
            raise ConfigError(f"cannot sweep over {cfg.sweep_variable!r}")
    if kind == "verify" and not cfg.bounds:
        raise ConfigError("verify needs a nonempty bounds list")
    return cfg


def _float(x) -> float:
    try:
        value = float(x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read number {x!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"number must be finite, got {x!r}")
    return value


def parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot read complex number {text!r}") from exc


def build_initial_state(spec: str, p: LaserParams, space: SpaceSpec) -> DensityMatrix:
    """Initial states: ``stationary``, ``limit_cycle:THETA``,
    ``coherent:ZETA,atom:(P_PLUS,C)`` or ``product_basis:N,ETA``."""
    spec = spec.strip()
    if spec == "stationary":
        return stationary_state(p, space)
    m = re.fullmatch(r"limit_cycle:(.+)", spec)
    if m:
        return limit_cycle_state(replace(p, omega=0.0), 0.0, _float(m.group(1)), space)
    m = re.fullmatch(r"coherent:([^,]+),\s*atom:\(\s*([^,]+)\s*,\s*([^)]+)\)", spec)
    if m:
        zeta = parse_complex(m.group(1))
        pp = _float(m.group(2))
        c = parse_complex(m.group(3))
        atom = np.array([[pp, c], [np.conj(c), 1 - pp]])
        if np.linalg.eigvalsh(atom)[0] < -1e-12:
            raise ConfigError(f"atom block {atom.tolist()} is not a density matrix")
        return DensityMatrix(np.kron(coherent_vector(zeta, space).projector(), atom), space)
    m = re.fullmatch(r"product_basis:(\d+),\s*([+\-01])", spec)
    if m:
        eta = {"+": 0, "0": 0, "-": 1, "1": 1}[m.group(2)]
        return DensityMatrix.from_vector(basis_vector(space, int(m.group(1)), eta), space)
    raise ConfigError(f"unrecognised initial_state {spec!r}")


def _drives(cfg: ExperimentConfig, rho0: DensityMatrix) -> DriveFunctions:
    kind = cfg.drive.get("kind", "constant")
    if kind == "constant":
        a = parse_complex(str(cfg.drive.get("alpha0", "0")))
        b = parse_complex(str(cfg.drive.get("beta0", "0")))
        return DriveFunctions.constant(a, b)
    if kind == "maxwell_bloch":
        traj = integrate_mb(MBState(*field_means(rho0.entries)), cfg.params, cfg.t_end)
        return DriveFunctions.from_mb_trajectory(traj, cfg.params)
    raise ConfigError(f"unknown drive kind {kind!r}")


# ---------------------------------------------------------------- output

class Writer:
    """Single writer for every artifact; keeps the manifest list."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        (self.out / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def csv(self, name: str, header: list, rows) -> None:
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) if isinstance(x, (float, np.floating, int)) and not isinstance(x, bool)
                            else x for x in row])
        self.files.append(name)

    def manifest(self, cfg: ExperimentConfig, status: str) -> None:
        entries = []
        for name in self.files:
            digest = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
            entries.append({"name": name, "sha256": digest})
        doc = {
            "files": entries,
            "config": cfg.resolved(),
            "status": status,
            "versions": {
                "lasersim": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _state_check(rho: np.ndarray) -> dict:
    h = hygiene(rho)
    return {"trace_error": h.trace_error, "hermiticity": h.hermiticity, "min_eigenvalue": h.min_eigenvalue,
            "leakage": h.leakage, "ok": h.ok()}


# ---------------------------------------------------------------- experiment kinds

def run_steady(cfg: ExperimentConfig, w: Writer) -> int:
    p, space = cfg.params, cfg.space
    rho = stationary_state(p, space)
    w.json("stationary_state.json", rho.to_dict())
    residual = float(np.abs(generator_meanfield(rho, p, rotating_frame=cfg.frame == "rotating")).max())
    rep = classify_regime(p)
    report = {"c_b": rep.c_b, "regime": rep.regime.value, "second_threshold": _finite(rep.second_threshold),
              "stationary_residual": residual, "stationary_check": _state_check(rho.entries)}
    if rep.c_b > 1:
        p0 = replace(p, omega=0.0)
        lc = limit_cycle_state(p0, 0.0, 0.0, space)
        w.json("limit_cycle_state.json", lc.to_dict())
        report["limit_cycle_residual"] = float(np.abs(generator_meanfield(lc, p0)).max())
        report["limit_cycle_check"] = _state_check(lc.entries)
    w.json("steady_report.json", report)
    if cfg.check and not (report["stationary_check"]["ok"] and residual < 1e-12):
        return EXIT_VERIFY
    return EXIT_OK


def _finite(x):
    return x if math.isfinite(x) else "inf"


def _generator(cfg: ExperimentConfig):
    return MeanFieldGenerator(cfg.params, cfg.space, rotating_frame=cfg.frame == "rotating")


def _real_means(rho) -> np.ndarray:
    A, S, D = field_means(rho)
    return np.array([A.real, A.imag, S.real, S.imag, D])


def run_evolve(cfg: ExperimentConfig, w: Writer) -> int:
    p, space = cfg.params, cfg.space
    rho0 = build_initial_state(cfg.initial_state, p, space)
    ref = stationary_state(p, space)
    obs = observable_functions(cfg.observables, space, ref)
    obs_means = dict(obs, _means=_real_means)
    ev = evolve(rho0, _generator(cfg), cfg.t_end, cfg.dt, cfg.sample_every, observables=obs_means,
                keep_states=False)
    means = ev.observables.pop("_means")
    rows = [[t, *means[k]] + [ev.observables[n][k] for n in cfg.observables] for k, t in enumerate(ev.times)]
    w.csv("trajectory.csv", ["t", "Re A", "Im A", "Re S", "Im S", "D"] + cfg.observables, rows)
    w.json("final_state.json", ev.final.to_dict())
    mb_p = p if cfg.frame == "lab" else replace(p, omega=0.0)
    mb = integrate_mb(MBState(*field_means(rho0.entries)), mb_p, cfg.t_end, store_every=1)
    keep = np.unique(np.searchsorted(mb.times, ev.times - 1e-12).clip(0, len(mb) - 1))
    w.csv("mb_trajectory.csv", ["t", "Re A", "Im A", "Re S", "Im S", "D"],
          [[mb.times[k], mb.A[k].real, mb.A[k].imag, mb.S[k].real, mb.S[k].imag, mb.D[k]] for k in keep])
    worst = ev.worst()
    w.json("hygiene.json", {"max_trace_error": worst.trace_error, "max_hermiticity": worst.hermiticity,
                            "min_eigenvalue": worst.min_eigenvalue, "max_leakage": worst.leakage,
                            "samples": len(ev.times)})
    if cfg.check and not worst.ok():
        return EXIT_VERIFY
    return EXIT_OK


def _sweep_point(args):
    cfg, value = args
    p = cfg.params
    if cfg.sweep_variable == "C_b":
        p = p.with_c_b(value)
    else:
        p = replace(p, **{cfg.sweep_variable: value})
    rho0 = build_initial_state(cfg.initial_state, p, cfg.space)
    ev = evolve(rho0, MeanFieldGenerator(p, cfg.space), cfg.t_end, cfg.dt, None, keep_states=False)
    A, S, D = field_means(ev.final.entries)
    rep = classify_regime(p)
    return [value, rep.c_b, abs(A), lasing_amplitude(p), D, rep.regime.value]


def worker_count() -> int:
    raw = os.environ.get("LASERSIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"LASERSIM_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("LASERSIM_THREADS must be >= 1")
    return n


def run_sweep(cfg: ExperimentConfig, w: Writer) -> int:
    jobs = [(cfg, v) for v in cfg.sweep_grid]
    n = min(worker_count(), len(jobs))
    if n <= 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with cf.ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_point, jobs))  # map keeps grid order
    header = ["grid_" + cfg.sweep_variable, "C_b", "abs_A_final", "abs_A_closed_form", "D_final", "regime"]
    w.csv("sweep.csv", header, rows)
    return EXIT_OK


def run_stability(cfg: ExperimentConfig, w: Writer) -> int:
    p = cfg.params
    grid = [c for c in cfg.sweep_grid if c > 1]
    if not grid:
        raise ConfigError("stability grid needs C_b values above 1")
    reports = stability_sweep(p.kappa, p.gamma, grid)
    w.csv("stability.csv", ["C_b", "max_real_part", "classification"],
          [[r.c_b, r.max_real_part, r.classification.value] for r in reports])
    flips = sign_flips(reports)
    summary = {"kappa": p.kappa, "gamma": p.gamma, "closed_form_threshold": _finite(reports[0].hopf_threshold),
               "flips": [{"bracket": list(f), "bisection": locate_hopf(p.kappa, p.gamma, *f)} for f in flips]}
    w.json("stability.json", summary)
    return EXIT_OK


def run_verify(cfg: ExperimentConfig, w: Writer) -> int:
    p, space = cfg.params, cfg.space
    rho0 = build_initial_state(cfg.initial_state, p, space)
    failed = False
    for bound_id in cfg.bounds:
        if bound_id in MB_BOUNDS:
            traj = integrate_mb(MBState(*field_means(rho0.entries)), p, cfg.t_end)
            checks = lyapunov_certificates(traj, p, sharpened=True if bound_id == "mb_sharpened" else False)
            chk = checks["sharpened" if bound_id == "mb_sharpened" else "long_time"]
            margin = chk.rhs - chk.lhs
            doc = {"bound_id": bound_id, "hypothesis_ok": True, "samples_checked": int(len(chk.lhs)),
                   "violations": int(np.sum(~chk.holds)), "worst_margin": float(margin.min())}
        else:
            if bound_id == "symmetric_decay":
                gen, target, drives = MeanFieldGenerator(p, space), stationary_state(p, space), None
            elif bound_id == "free_decay":
                gen, target, drives = LinearGenerator(p, space), stationary_state(p, space), None
            elif bound_id == "constant_drive":
                drives = _drives(replace(cfg, drive=dict(cfg.drive, kind="constant")), rho0)
                gen = ConstantDriveGenerator(p, space, drives.alpha0, drives.beta0)
                target = linear_equilibrium(p, drives.alpha0, drives.beta0, space)
            elif bound_id == "drive_perturbation":
                drives = _drives(cfg, rho0)
                gen = DrivenGenerator(p, space, drives)
                target = linear_equilibrium(p, drives.alpha0, drives.beta0, space)
            else:
                raise ConfigError(f"unknown bound {bound_id!r}")
            ev = evolve(rho0, gen, cfg.t_end, cfg.dt, cfg.sample_every)
            doc = verify_explicit_bound(ev, target, bound_id, p, drives, strict=False).to_dict()
        w.json(f"verification_{bound_id}.json", doc)
        failed |= (not doc["hypothesis_ok"]) or doc["violations"] > 0
    return EXIT_VERIFY if failed else EXIT_OK


RUNNERS = {"steady": run_steady, "evolve": run_evolve, "sweep": run_sweep, "stability": run_stability,
           "verify": run_verify}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lasersim", description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--check", action="store_true", help="run the invariant suite on outputs before exiting")
    ap.add_argument("--n-max", type=int, default=None)
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    w = None
    try:
        if args.dt is not None and not args.dt > 0:
            raise ConfigError("--dt must be positive")
        cfg = parse_config(raw, args.kind, args.n_max, args.dt)
        cfg.check = args.check
        w = Writer(args.out)
        code = RUNNERS[args.kind](cfg, w)
    except NumericalAbort as exc:
        log.error("numerical abort: %s", exc)
        if w is not None:
            w.manifest(cfg, "numerical_abort")
        return EXIT_NUMERICAL
    except LaserSimError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    w.manifest(cfg, "ok" if code == EXIT_OK else "verification_failed")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
