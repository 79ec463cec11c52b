"""Verification layer: Hopf stability of the lasing fixed point, explicit
bound checks, decay-rate fits, the variation-of-constants residual, phase
tracking near the limit cycle and cutoff-robustness studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .closed_forms import limit_cycle_state, linear_equilibrium, stationary_state
from .errors import ConfigError, HypothesisError, LaserSimError, RegimeError
from .hilbert import SpaceSpec, make_operators
from .lindblad import (
    ConstantDriveGenerator,
    DensityMatrix,
    DriveFunctions,
    DrivenGenerator,
    Evolution,
    MeanFieldGenerator,
    default_dt,
    drive_coefficients,
    evolve,
    field_means,
    rk4_steps,
)
from .maxwell_bloch import MBState, lasing_amplitude, theta_infinity
from .observables import (
    ObservableSeries,
    entropies,
    mean_photon,
    mean_value,
    photon_distribution,
    quadrature_variances,
    trace_distance,
)
from .params import LaserParams, Regime, classify_regime, cooperative_parameter, second_threshold


# ---------------------------------------------------------------- Hopf analysis

class Stability(str, Enum):
    STABLE = "Stable"
    MARGINAL = "Marginal"
    UNSTABLE = "Unstable"


@dataclass
class StabilityReport:
    kappa: float
    gamma: float
    c_b: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    cubic_coeffs: tuple
    max_real_part: float
    hopf_threshold: float
    classification: Stability


MARGINAL_TOL = 1e-12


def lasing_jacobian(kappa: float, gamma: float, c_b: float, g: float = 1.0) -> np.ndarray:
    """Jacobian of the omega = 0 polar system in (r, S_R, S_I, D_R) at the lasing point."""
    r0 = gamma * math.sqrt(c_b - 1) / (math.sqrt(2) * abs(g))
    return np.array([
        [-kappa, g, 0, 0],
        [kappa * gamma / g, -gamma, 0, g * r0],
        [0, 0, -gamma - kappa, 0],
        [-4 * kappa * r0, -4 * g * r0, 0, -2 * gamma],
    ])


def characteristic_cubic(kappa: float, gamma: float, c_b: float) -> tuple:
    return (1.0, 3 * gamma + kappa, 2 * gamma**2 * c_b + 2 * gamma * kappa, 4 * kappa * gamma**2 * (c_b - 1))


def routh_hurwitz_stable(coeffs) -> bool:
    """All roots of a monic cubic in the open left half-plane."""
    _, a2, a1, a0 = coeffs
    return a2 > 0 and a1 > 0 and a0 > 0 and a2 * a1 > a0


def stability_at(kappa: float, gamma: float, c_b: float, g: float = 1.0) -> StabilityReport:
    """Linear stability of the nonzero fixed point; eigenvalues do not depend on g."""
    if kappa <= 0 or gamma <= 0:
        raise ConfigError("kappa and gamma must be positive")
    if c_b <= 1:
        raise RegimeError(f"no lasing fixed point for C_b = {c_b} <= 1")
    coeffs = characteristic_cubic(kappa, gamma, c_b)
    roots = np.roots(coeffs)  # companion-matrix eigenvalues
    eig = np.concatenate([[-(gamma + kappa) + 0j], roots.astype(complex)])
    mx = float(eig.real.max())
    scale = max(kappa, gamma)
    if mx < -MARGINAL_TOL * scale:
        cls = Stability.STABLE
    elif mx > MARGINAL_TOL * scale:
        cls = Stability.UNSTABLE
    else:
        cls = Stability.MARGINAL
    return StabilityReport(kappa, gamma, c_b, lasing_jacobian(kappa, gamma, c_b, g), eig, coeffs[1:], mx,
                           second_threshold(kappa, gamma), cls)


def locate_hopf(kappa: float, gamma: float, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisection on the sign of the largest real part over C_b in [lo, hi]."""
    f_lo = stability_at(kappa, gamma, lo).max_real_part
    f_hi = stability_at(kappa, gamma, hi).max_real_part
    if f_lo * f_hi > 0:
        raise HypothesisError(f"no sign change of the largest real part on [{lo}, {hi}]")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        f_mid = stability_at(kappa, gamma, mid).max_real_part
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stability_sweep(kappa: float, gamma: float, grid) -> list[StabilityReport]:
    return [stability_at(kappa, gamma, c) for c in grid]


def sign_flips(reports: list[StabilityReport]) -> list[tuple[float, float]]:
    """Consecutive grid pairs across which the stability class changes."""
    out = []
    for a, b in zip(reports, reports[1:]):
        if (a.max_real_part < 0) != (b.max_real_part < 0):
            out.append((a.c_b, b.c_b))
    return out


# ---------------------------------------------------------------- explicit bounds

BOUND_IDS = ("symmetric_decay", "free_decay", "constant_drive", "drive_perturbation")
SYMMETRY_TOL = 1e-12
BOUND_ATOL = 1e-12


@dataclass
class BoundReport:
    bound_id: str
    hypothesis_ok: bool
    samples_checked: int
    violations: int
    worst_margin: float
    times: np.ndarray = field(repr=False, default=None)
    lhs: np.ndarray = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)
    atol: float = 0.0

    @property
    def holds(self) -> np.ndarray:
        return self.lhs <= self.rhs + self.atol

    def to_dict(self) -> dict:
        return {
            "bound_id": self.bound_id,
            "hypothesis_ok": self.hypothesis_ok,
            "samples_checked": self.samples_checked,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
        }


def decay_bound_rhs(t, p: LaserParams, n0: float, alpha: complex = 0j) -> np.ndarray:
    """12 e^{-gamma t}(1 + |d|) + e^{-kappa t}(2|alpha|/sqrt(kappa^2 + omega^2) + 4 sqrt(n0))."""
    t = np.asarray(t, dtype=float)
    drive = 2 * abs(alpha) / math.hypot(p.kappa, p.omega)
    return 12 * np.exp(-p.gamma * t) * (1 + abs(p.d)) + np.exp(-p.kappa * t) * (drive + 4 * math.sqrt(max(n0, 0.0)))


def _states(traj: Evolution):
    if traj.states is None:
        raise ConfigError("bound verification needs a trajectory with stored states")
    return [s.entries for s in traj.states]


def _report(bound_id, hyp_ok, times, lhs, rhs, atol) -> BoundReport:
    margin = rhs - lhs
    return BoundReport(bound_id, hyp_ok, len(lhs), int(np.sum(margin < -atol)), float(margin.min()),
                       times, lhs, rhs, atol)


def verify_explicit_bound(
    traj: Evolution,
    target,
    bound_id: str,
    p: LaserParams,
    drives: DriveFunctions | None = None,
    strict: bool = True,
    atol: float = BOUND_ATOL,
) -> BoundReport:
    """Check an explicit trace-distance bound at every sample of ``traj``.

    ``symmetric_decay``: mean-field flow from data with tr(a rho0) = tr(s^- rho0) = 0.
    ``free_decay``: undriven linear flow.
    ``constant_drive``: linear flow with constant drives ``drives.alpha0``.
    ``drive_perturbation``: driven flow compared through the autonomous
    semigroup with reference drives (alpha0, beta0), split at the first sample.
    Time in the bounds is measured from the first sample.  A sample passes
    when lhs <= rhs + ``atol``; ``atol`` absorbs the floating-point floor of
    the trace distance once the bound itself decays below it.
    """
    if bound_id not in BOUND_IDS:
        raise ConfigError(f"unknown bound {bound_id!r}; choose from {BOUND_IDS}")
    states = _states(traj)
    tgt = np.asarray(getattr(target, "entries", target))
    t = traj.times - traj.times[0]
    lhs = np.array([trace_distance(s, tgt) for s in states])
    rho0 = states[0]
    n0 = mean_photon(rho0)

    if bound_id == "symmetric_decay":
        A, S, _ = field_means(rho0)
        hyp = abs(A) <= SYMMETRY_TOL and abs(S) <= SYMMETRY_TOL
        rhs = decay_bound_rhs(t, p, n0)
    elif bound_id == "free_decay":
        hyp = True
        rhs = decay_bound_rhs(t, p, n0)
    elif bound_id == "constant_drive":
        if drives is None:
            raise ConfigError("constant_drive needs the drive amplitudes")
        hyp = True
        rhs = decay_bound_rhs(t, p, n0, drives.alpha0)
    else:
        if drives is None:
            raise ConfigError("drive_perturbation needs the drive functions")
        hyp = True
        rhs = _perturbation_rhs(traj, states, tgt, p, drives)
    if strict and not hyp:
        raise HypothesisError(f"{bound_id}: initial data violate the bound's hypotheses")
    return _report(bound_id, hyp, traj.times, lhs, rhs, atol)


def _perturbation_rhs(traj, states, tgt, p, drives):
    space = traj.final.space
    gen = ConstantDriveGenerator(p, space, drives.alpha0, drives.beta0)
    h = traj.meta["dt"]
    times = traj.times
    base = [states[0]]
    y = np.array(states[0])
    for a, b in zip(times, times[1:]):
        y = rk4_steps(gen, y, 0.0, h, int(round((b - a) / h)))
        base.append(y)
    first = np.array([trace_distance(r, tgt) for r in base])
    ar = np.array([abs(drives.alpha_R(u)) for u in times])
    br = np.array([abs(drives.beta_R(u)) for u in times])
    n = np.array([mean_photon(r) for r in states])
    field_int = cumulative_trapezoid(ar * np.sqrt(n + 1), times, initial=0.0)
    atom_int = cumulative_trapezoid(br, times, initial=0.0)
    # 2 (||s^-|| + ||s^+||) = 4
    return first + 4 * field_int + 4 * atom_int


# ---------------------------------------------------------------- rate fits

@dataclass
class RateFit:
    fitted_rate: float
    window: tuple
    residual: float
    reference_rate: float | None = None
    samples: int = 0

    def meets(self, slack: float = 0.05) -> bool:
        """One-sided comparison: fitted >= (1 - slack) * reference."""
        if self.reference_rate is None:
            return self.fitted_rate > 0
        return self.fitted_rate >= (1 - slack) * self.reference_rate


def fit_decay_rate(series: ObservableSeries, reference_rate: float | None = None,
                   skip_fraction: float = 0.2, floor: float = 1e-10, envelope: bool = True) -> RateFit:
    """Least-squares slope of log(values) on the tail window.

    The window ends at the first value below ``floor`` and drops the first
    ``skip_fraction`` of the samples before that point.  With ``envelope``
    the running maximum from the right is fitted, so oscillating decays are
    measured by their upper envelope.
    """
    t = np.asarray(series.times, dtype=float)
    v = np.abs(np.asarray(series.values))
    below = np.nonzero(v < floor)[0]
    stop = int(below[0]) if len(below) else len(t)
    start = int(math.ceil(skip_fraction * stop))
    tw, vw = t[start:stop], v[start:stop]
    if len(tw) < 2:
        raise HypothesisError(f"rate fit window on {series.name!r} has {len(tw)} samples")
    if envelope:
        vw = np.maximum.accumulate(vw[::-1])[::-1]
    y = np.log(vw)
    slope, icpt = np.polyfit(tw, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * tw + icpt)) ** 2)))
    return RateFit(float(-slope), (float(tw[0]), float(tw[-1])), res, reference_rate, len(tw))


# ---------------------------------------------------------------- variation of constants

def _commutator(X: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return X @ rho - rho @ X


def voc_residual(rho0, p: LaserParams, drives: DriveFunctions, t: float, s: float, quad_points: int = 64,
                 dt: float | None = None) -> float:
    """Trace distance between the driven state at t and its
    variation-of-constants reconstruction from the state at s.

    ``quad_points`` is the (even) number of composite-Simpson subintervals on
    [s, t].  The sum over nodes is folded Horner-style,
    acc <- R_h(acc) + w_k C_k, so the semigroup is applied one panel at a
    time.  The RK4 step is shrunk to divide the panel width.
    """
    if not t >= s >= 0:
        raise ConfigError(f"need t >= s >= 0, got t = {t}, s = {s}")
    if quad_points < 2 or quad_points % 2:
        raise ConfigError("quad_points must be an even number >= 2")
    rho0 = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0, SpaceSpec(len(rho0) // 2 - 1))
    space = rho0.space
    dt = default_dt(p, space) if dt is None else dt
    driven = DrivenGenerator(p, space, drives)
    rho_s = evolve(rho0, driven, s, dt, keep_states=False).final.entries if s > 0 else np.array(rho0.entries)
    if t == s:
        return 0.0
    panel = (t - s) / quad_points
    sub = max(1, int(math.ceil(panel / dt - 1e-9)))
    h = panel / sub
    ops = make_operators(space)
    adag, a, sm, spl = (ops.adag.entries, ops.a.entries, ops.sigma_minus.entries, ops.sigma_plus.entries)
    auto = ConstantDriveGenerator(p, space, drives.alpha0, drives.beta0)
    w = np.full(quad_points + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= panel / 3

    def forcing(u, rho):
        c1, c2, c3, c4 = drive_coefficients(drives.alpha_R(u), drives.beta_R(u))
        return _commutator(c1 * adag + c2 * a + c3 * sm + c4 * spl, rho)

    rho = rho_s.copy()
    acc = rho_s + w[0] * forcing(s, rho)
    for k in range(1, quad_points + 1):
        u0 = s + (k - 1) * panel
        rho = rk4_steps(driven, rho, u0, h, sub)
        acc = rk4_steps(auto, acc, 0.0, h, sub) + w[k] * forcing(s + k * panel, rho)
    return trace_distance(rho, acc)


# ---------------------------------------------------------------- phase tracking near the limit cycle

DEFAULT_EPSILON = 0.05


def closeness_to_cycle(rho0, p: LaserParams) -> float:
    """Largest deviation of the initial means from the lasing circle."""
    A, S, D = field_means(np.asarray(getattr(rho0, "entries", rho0)))
    c = cooperative_parameter(p)
    r0 = lasing_amplitude(p)
    if A == 0:
        return math.inf
    return max(abs(abs(A) - r0), abs(S - p.kappa / p.g * r0 * A / abs(A)), abs(D - p.d / c))


@dataclass
class TrackingReport:
    theta_inf: float
    closeness: float
    epsilon: float
    times: np.ndarray
    distance: np.ndarray
    mean_gap: np.ndarray
    distance_fit: RateFit | None
    gap_fit: RateFit | None
    evolution: Evolution = field(repr=False, default=None)
    jacobian_gap: float | None = None

    @property
    def final_distance(self) -> float:
        return float(self.distance[-1])


def theta_tracking_check(
    rho0,
    p: LaserParams,
    t_end: float = 200.0,
    dt: float | None = None,
    sample_every: float = 1.0,
    epsilon: float = DEFAULT_EPSILON,
    test_operator=None,
    keep_states: bool = False,
) -> TrackingReport:
    """Run the rotating-frame mean-field flow from rho0 and measure how it
    approaches the limit-cycle state whose phase is the asymptotic phase of
    the Maxwell-Bloch flow seeded by rho0's means."""
    rho0 = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0, SpaceSpec(len(rho0) // 2 - 1))
    p0 = replace(p, omega=0.0)
    rep = classify_regime(p0)
    if rep.regime is not Regime.STABLE_LASING:
        raise RegimeError(f"phase tracking needs stable lasing, got {rep.regime.value} (C_b = {rep.c_b})")
    close = closeness_to_cycle(rho0, p0)
    if not close < epsilon:
        raise HypothesisError(f"initial means are {close:.3g} from the lasing circle (epsilon = {epsilon})")
    theta = theta_infinity(MBState(*field_means(rho0.entries)), p0)
    target = limit_cycle_state(p0, 0.0, theta, rho0.space).entries
    ops = make_operators(rho0.space)
    A = ops.N.entries @ (ops.sigma_plus.entries + ops.sigma_minus.entries) if test_operator is None \
        else np.asarray(test_operator)
    ref_mean = mean_value(target, A)
    ev = evolve(
        rho0, MeanFieldGenerator(p0, rho0.space), t_end, dt, sample_every,
        observables={
            "distance": lambda r: trace_distance(r, target),
            "gap": lambda r: abs(mean_value(r, A) - ref_mean),
        },
        keep_states=keep_states,
    )
    dist, gap = ev.observables["distance"], ev.observables["gap"]
    fits = []
    for name, vals in (("distance", dist), ("gap", gap)):
        try:
            fits.append(fit_decay_rate(ObservableSeries(ev.times, name, vals)))
        except HypothesisError:
            fits.append(None)
    gap_rate = -stability_at(p0.kappa, p0.gamma, rep.c_b).max_real_part
    return TrackingReport(theta, close, epsilon, ev.times, dist, gap, fits[0], fits[1], ev, gap_rate)


# ---------------------------------------------------------------- cutoff robustness

@dataclass
class TruncationReport:
    n_max_list: list
    deviations: dict
    max_deviation: float
    converged: bool
    tol: float
    aborts: dict = field(default_factory=dict)


def truncation_study(experiment: Callable[[int], dict], n_max_list, tol: float = 1e-8) -> TruncationReport:
    """Rerun ``experiment(n_max)`` (returning name -> array of observables)
    for every cutoff and report the largest pairwise deviation per name."""
    n_max_list = list(n_max_list)
    if len(n_max_list) < 2:
        raise ConfigError("truncation study needs at least two cutoffs")
    results, aborts = {}, {}
    for n in n_max_list:
        try:
            results[n] = experiment(n)
        except LaserSimError as exc:
            aborts[n] = f"{type(exc).__name__}: {exc}"
    deviations = {}
    keys = list(results)
    for i, n1 in enumerate(keys):
        for n2 in keys[i + 1:]:
            for name in results[n1]:
                a, b = np.asarray(results[n1][name]), np.asarray(results[n2][name])
                dev = float(np.max(np.abs(a - b))) if a.size else 0.0
                deviations[name] = max(deviations.get(name, 0.0), dev)
    worst = max(deviations.values(), default=0.0)
    converged = not aborts and len(results) >= 2 and worst <= tol
    return TruncationReport(n_max_list, deviations, worst, converged, tol, aborts)


def standard_observables(space: SpaceSpec, reference) -> dict:
    ref = np.asarray(getattr(reference, "entries", reference))

    def means(r):
        A, S, D = field_means(r)
        return np.array([A.real, A.imag, S.real, S.imag, D])

    return {
        "trace_distance": lambda r: trace_distance(r, ref),
        "means": means,
        "mean_photon": mean_photon,
        "p0": lambda r: photon_distribution(r)[0],
        "variances": lambda r: np.array(quadrature_variances(r)),
        "linear_entropy": lambda r: entropies(r).linear_entropy,
        "von_neumann": lambda r: entropies(r).von_neumann,
    }


def meanfield_experiment(p: LaserParams, initial: Callable[[SpaceSpec], DensityMatrix], t_end: float,
                         reference: Callable[[SpaceSpec], DensityMatrix], dt: float | None = None,
                         sample_every: float = 1.0) -> Callable[[int], dict]:
    """Experiment factory for truncation_study: rotating-frame mean-field run."""

    def run(n_max: int) -> dict:
        space = SpaceSpec(n_max)
        rho0 = initial(space)
        obs = standard_observables(space, reference(space))
        step = dt if dt is not None else default_dt(p, SpaceSpec(max(n_max, 1)))
        ev = evolve(rho0, MeanFieldGenerator(p, space), t_end, step, sample_every, observables=obs, keep_states=False)
        return ev.observables

    return run


# ---------------------------------------------------------------- auxiliary identities

def number_mean_residual(traj: Evolution, p: LaserParams, drives: DriveFunctions) -> float:
    """Max residual of d/dt tr(rho N) = -2 kappa tr(rho N) + 2 Re(conj(alpha) tr(rho a))
    along sampled states, using central differences."""
    states = _states(traj)
    t = traj.times
    n = np.array([mean_photon(s) for s in states])
    A = np.array([field_means(s)[0] for s in states])
    dn = (n[2:] - n[:-2]) / (t[2:] - t[:-2])
    rhs = -2 * p.kappa * n[1:-1] + 2 * np.real(np.conj([drives.alpha(u) for u in t[1:-1]]) * A[1:-1])
    return float(np.max(np.abs(dn - rhs)))


def trace_norm_inequality(rho, A) -> tuple[float, float]:
    """(tr|A rho|, sqrt(tr(rho A^dag A)))."""
    r = np.asarray(getattr(rho, "entries", rho))
    M = np.asarray(A)
    lhs = float(np.linalg.svd(M @ r, compute_uv=False).sum())
    rhs = math.sqrt(max(float(np.real(np.trace(r @ M.conj().T @ M))), 0.0))
    return lhs, rhs


def symmetric_decay_run(p: LaserParams, rho0: DensityMatrix, t_end: float, dt=None, sample_every=1.0):
    """Mean-field run plus its symmetric-data bound report."""
    ev = evolve(rho0, MeanFieldGenerator(p, rho0.space), t_end, dt, sample_every)
    return ev, verify_explicit_bound(ev, stationary_state(p, rho0.space), "symmetric_decay", p)


def constant_drive_run(p: LaserParams, rho0: DensityMatrix, alpha0: complex, beta0: complex, t_end: float,
                       dt=None, sample_every=1.0):
    gen = ConstantDriveGenerator(p, rho0.space, alpha0, beta0)
    ev = evolve(rho0, gen, t_end, dt, sample_every)
    target = linear_equilibrium(p, alpha0, beta0, rho0.space)
    return ev, verify_explicit_bound(ev, target, "constant_drive", p, DriveFunctions.constant(alpha0, beta0))
