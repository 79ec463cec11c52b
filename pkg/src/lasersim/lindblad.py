"""Master-equation generators on the truncated space and their RK4 flow.

All generators share one kernel.  Writing the non-Hermitian effective
operator K = -i H0 - (1/2) sum L^dag L (diagonal in the Fock x qubit basis)
and a drive X = c1 a^dag + c2 a + c3 sigma^- + c4 sigma^+, every generator is

    L(rho) = K rho + rho K^dag + J(rho) + [X, rho]

with J(rho) = 2 kappa a rho a^dag + kappa_- s^- rho s^+ + kappa_+ s^+ rho s^-.
Each term is evaluated with strided slices of rho instead of dense products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigError, NumericalAbort, PositivityError, TruncationError
from .hilbert import SpaceSpec, operator_from_dict, operator_to_dict
from .params import LaserParams

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-8
LEAKAGE_TOL = 1e-8


# ---------------------------------------------------------------- states

@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    space: SpaceSpec
    time_tag: float | None = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ConfigError(f"density matrix shape {m.shape} does not match dim {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @classmethod
    def from_vector(cls, vec, space: SpaceSpec | None = None, time_tag=None) -> "DensityMatrix":
        v = getattr(vec, "amplitudes", vec)
        v = np.asarray(v, dtype=complex)
        if space is None:
            space = getattr(vec, "space", None) or SpaceSpec(len(v) // 2 - 1)
        return cls(np.outer(v, v.conj()), space, time_tag)

    @classmethod
    def product(cls, field_rho, atom_rho, space: SpaceSpec | None = None) -> "DensityMatrix":
        f = np.asarray(field_rho, dtype=complex)
        space = space or SpaceSpec(f.shape[0] - 1)
        return cls(np.kron(f, np.asarray(atom_rho, dtype=complex)), space)

    def hygiene(self) -> "Hygiene":
        return hygiene(self.entries)

    def validate(self, **tols) -> "DensityMatrix":
        hygiene(self.entries).raise_if_bad(**tols)
        return self

    def to_dict(self) -> dict:
        out = operator_to_dict(self.entries, self.space, "rho")
        if self.time_tag is not None:
            out["time"] = self.time_tag
        return out

    @classmethod
    def from_dict(cls, block: dict) -> "DensityMatrix":
        entries, space, _ = operator_from_dict(block)
        return cls(entries, space, block.get("time"))


@dataclass(frozen=True)
class Hygiene:
    trace_error: float
    hermiticity: float
    min_eigenvalue: float
    leakage: float

    def raise_if_bad(self, trace_tol=TRACE_TOL, herm_tol=HERMITIAN_TOL, pos_tol=POSITIVITY_TOL,
                     leak_tol=LEAKAGE_TOL, where: str = ""):
        if not math.isfinite(self.trace_error):
            raise NumericalAbort(f"non-finite state{where}")
        if self.leakage > leak_tol:
            raise TruncationError(
                f"population {self.leakage:.3e} in the top two Fock levels{where}; increase n_max")
        if self.min_eigenvalue < -pos_tol:
            raise PositivityError(f"minimum eigenvalue {self.min_eigenvalue:.3e}{where}")
        if self.trace_error > trace_tol:
            raise NumericalAbort(f"trace drift {self.trace_error:.3e}{where}")
        if self.hermiticity > herm_tol:
            raise NumericalAbort(f"Hermiticity defect {self.hermiticity:.3e}{where}")

    def ok(self, **tols) -> bool:
        try:
            self.raise_if_bad(**tols)
        except NumericalAbort:
            return False
        return True


def hygiene(rho: np.ndarray) -> Hygiene:
    rho = np.asarray(rho)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    diag = np.real(np.diagonal(rho))
    lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    return Hygiene(
        trace_error=float(abs(np.trace(rho) - 1)),
        hermiticity=herm,
        min_eigenvalue=float(lam[0]),
        leakage=float(diag[-4:].sum()),
    )


# ---------------------------------------------------------------- drives

@dataclass
class DriveFunctions:
    """Time-dependent drive amplitudes alpha(t), beta(t) with reference
    constants alpha0, beta0 used by the variation-of-constants split."""

    alpha: Callable[[float], complex]
    beta: Callable[[float], complex]
    alpha0: complex = 0j
    beta0: complex = 0j

    @classmethod
    def constant(cls, alpha0: complex, beta0: complex) -> "DriveFunctions":
        a, b = complex(alpha0), complex(beta0)
        return cls(lambda t: a, lambda t: b, a, b)

    @classmethod
    def from_mb_trajectory(cls, traj, p: LaserParams, alpha0=None, beta0=None) -> "DriveFunctions":
        """alpha = g S(t), beta = g A(t) along a Maxwell-Bloch trajectory.

        Cubic Hermite interpolation with the exact vector field as slopes;
        the drives are exact on the stored grid.
        """
        A, S, D = traj.A, traj.S, traj.D
        dA = -(p.kappa + 1j * p.omega) * A + p.g * S
        dS = -(p.gamma + 1j * p.omega) * S + p.g * A * D
        a_spl = CubicHermiteSpline(traj.times, p.g * S, p.g * dS)
        b_spl = CubicHermiteSpline(traj.times, p.g * A, p.g * dA)
        a0 = p.g * S[0] if alpha0 is None else alpha0
        b0 = p.g * A[0] if beta0 is None else beta0
        return cls(lambda t: complex(a_spl(t)), lambda t: complex(b_spl(t)), complex(a0), complex(b0))

    def alpha_R(self, t: float) -> complex:
        return self.alpha(t) - self.alpha0

    def beta_R(self, t: float) -> complex:
        return self.beta(t) - self.beta0

    def continuity_defect(self, t_end: float, dt: float) -> float:
        """Largest jump between consecutive samples, relative to dt."""
        ts = np.arange(0.0, t_end + dt / 2, dt)
        a = np.array([self.alpha(t) for t in ts])
        b = np.array([self.beta(t) for t in ts])
        return float(max(np.abs(np.diff(a)).max(initial=0), np.abs(np.diff(b)).max(initial=0)))


def drive_coefficients(alpha: complex, beta: complex):
    """Coefficients (c1, c2, c3, c4) of X = alpha a^dag - conj(alpha) a + conj(beta) s^- - beta s^+."""
    return alpha, -np.conj(alpha), np.conj(beta), -beta


# ---------------------------------------------------------------- kernel

class _Kernel:
    def __init__(self, space: SpaceSpec, p: LaserParams, with_omega: bool):
        self.space = space
        dim = space.dim
        n = np.repeat(np.arange(space.n_levels, dtype=float), 2)
        up = np.tile([1.0, 0.0], space.n_levels)  # 1 on e_+ rows
        s3 = 2 * up - 1
        omega = p.omega if with_omega else 0.0
        h0 = omega / 2 * (2 * n + s3)
        decay = 2 * p.kappa * n + p.kappa_minus * up + p.kappa_plus * (1 - up)
        self.k = -1j * h0 - decay / 2
        self.kcol = self.k[:, None]
        self.sq_n = np.sqrt(n)[:, None]  # sqrt(n_i) for a^dag rows
        self.sq_n1 = np.sqrt(n + 1)[:, None]  # sqrt(n_i + 1) for a rows
        sq = np.sqrt(n[:-2] + 1)
        self.half_damp = p.kappa * np.outer(sq, sq)
        self.half_km = p.kappa_minus / 2
        self.half_kp = p.kappa_plus / 2
        self.dim = dim
        self.n_field = space.n_levels

    def half(self, rho: np.ndarray, c) -> np.ndarray:
        """K rho + J(rho)/2 + X rho."""
        y = self.kcol * rho
        y[:-2, :-2] += self.half_damp * rho[2:, 2:]
        y[1::2, 1::2] += self.half_km * rho[0::2, 0::2]
        y[0::2, 0::2] += self.half_kp * rho[1::2, 1::2]
        if c is not None:
            c1, c2, c3, c4 = c
            if c1:
                y[2:] += (c1 * self.sq_n[2:]) * rho[:-2]
            if c2:
                y[:-2] += (c2 * self.sq_n1[:-2]) * rho[2:]
            if c3:
                y[1::2] += c3 * rho[0::2]
            if c4:
                y[0::2] += c4 * rho[1::2]
        return y

    def apply_hermitian(self, rho, c=None):
        y = self.half(rho, c)
        return y + y.conj().T

    def apply(self, rho, c=None):
        rho = np.asarray(rho, dtype=complex)
        return self.half(rho, c) + self.half(rho.conj().T, c).conj().T


@lru_cache(maxsize=32)
def _mean_weights(dim: int):
    sq = np.repeat(np.sqrt(np.arange(1, dim // 2, dtype=float)), 2)
    s3 = np.tile([1.0, -1.0], dim // 2)
    return sq, s3


def field_means(rho: np.ndarray):
    """(tr(a rho), tr(sigma^- rho), tr(sigma^3 rho)) read directly from entries."""
    sq, s3 = _mean_weights(rho.shape[0])
    A = sq @ np.diagonal(rho, offset=-2)
    S = np.trace(rho[0::2, 1::2])
    D = s3 @ np.diagonal(rho).real
    return complex(A), complex(S), float(D)


def _space_of(rho):
    if isinstance(rho, DensityMatrix):
        return rho.space, rho.entries
    m = np.asarray(rho, dtype=complex)
    return SpaceSpec(m.shape[0] // 2 - 1), m


# ---------------------------------------------------------------- generator handles

class Generator:
    """Callable ``rhs(t, rho) -> drho/dt`` on raw arrays."""

    label = "generator"

    def __init__(self, p: LaserParams, space: SpaceSpec, with_omega: bool = True):
        self.p = p
        self.space = space
        self.kernel = _Kernel(space, p, with_omega)

    def coefficients(self, t: float, rho: np.ndarray):
        return None

    def rhs(self, t: float, rho: np.ndarray, hermitian: bool = True) -> np.ndarray:
        c = self.coefficients(t, rho)
        if hermitian:
            return self.kernel.apply_hermitian(rho, c)
        return self.kernel.apply(rho, c)

    def __call__(self, rho, t: float = 0.0) -> np.ndarray:
        return self.rhs(t, np.asarray(rho, dtype=complex), hermitian=False)


class LinearGenerator(Generator):
    label = "linear"


class MeanFieldGenerator(Generator):
    label = "meanfield"

    def __init__(self, p: LaserParams, space: SpaceSpec, rotating_frame: bool = True):
        super().__init__(p, space, with_omega=not rotating_frame)
        self.rotating_frame = rotating_frame

    def coefficients(self, t, rho):
        A, S, _ = field_means(rho)
        g = self.p.g
        return drive_coefficients(g * S, g * A)


class DrivenGenerator(Generator):
    label = "driven"

    def __init__(self, p: LaserParams, space: SpaceSpec, drives: DriveFunctions):
        super().__init__(p, space, with_omega=True)
        self.drives = drives

    def coefficients(self, t, rho):
        return drive_coefficients(self.drives.alpha(t), self.drives.beta(t))


class ConstantDriveGenerator(Generator):
    """Autonomous driven generator with fixed (alpha0, beta0)."""

    label = "autonomous"

    def __init__(self, p: LaserParams, space: SpaceSpec, alpha0: complex, beta0: complex):
        super().__init__(p, space, with_omega=True)
        self.c = drive_coefficients(complex(alpha0), complex(beta0))
        if not any(self.c):
            self.c = None

    def coefficients(self, t, rho):
        return self.c


def generator_linear_h(rho, p: LaserParams) -> np.ndarray:
    space, m = _space_of(rho)
    return LinearGenerator(p, space)(m)


def generator_meanfield(rho, p: LaserParams, rotating_frame: bool = True) -> np.ndarray:
    space, m = _space_of(rho)
    return MeanFieldGenerator(p, space, rotating_frame)(m)


def generator_driven(rho, p: LaserParams, drives: DriveFunctions, t: float) -> np.ndarray:
    space, m = _space_of(rho)
    return DrivenGenerator(p, space, drives)(m, t)


# ---------------------------------------------------------------- integration

def default_dt(p: LaserParams, space: SpaceSpec) -> float:
    """Fixed RK4 step: resolves the slowest physical scales and stays well
    inside the stability region of the fastest truncated mode."""
    scale = 0.01 / max(p.kappa, p.gamma, abs(p.g), abs(p.omega), 1.0)
    stiff = 1.0 / (2 * p.kappa * space.n_max + abs(p.omega) * space.n_max + 2 * p.gamma)
    return min(scale, stiff)


def rk4_steps(gen: Generator, rho: np.ndarray, t0: float, h: float, n: int, hermitian: bool = True) -> np.ndarray:
    """n RK4 steps of size h without any checks; returns a new array."""
    y = np.array(rho, dtype=complex)
    f = gen.rhs
    h2, h6 = h / 2, h / 6
    t = t0
    for _ in range(n):
        k1 = f(t, y, hermitian)
        k2 = f(t + h2, y + h2 * k1, hermitian)
        k3 = f(t + h2, y + h2 * k2, hermitian)
        k4 = f(t + h, y + h * k3, hermitian)
        k2 += k3
        k2 *= 2
        k1 += k4
        k1 += k2
        k1 *= h6
        y += k1
        t += h
    return y


@dataclass
class Evolution:
    times: np.ndarray
    states: list | None
    observables: dict
    hygiene: list
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> DensityMatrix:
        return self.meta["final"]

    def worst(self) -> Hygiene:
        return Hygiene(
            trace_error=max(h.trace_error for h in self.hygiene),
            hermiticity=max(h.hermiticity for h in self.hygiene),
            min_eigenvalue=min(h.min_eigenvalue for h in self.hygiene),
            leakage=max(h.leakage for h in self.hygiene),
        )


def _grid(t_end: float, dt: float, sample_every: float | None):
    if dt <= 0 or not math.isfinite(dt):
        raise ConfigError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ConfigError(f"t_end must be nonnegative, got {t_end}")
    n = int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / n if n else dt
    if sample_every is None:
        stride = max(n, 1)
    else:
        stride = max(1, int(round(sample_every / h)))
    return n, h, stride


def evolve(
    rho0,
    gen: Generator,
    t_end: float,
    dt: float | None = None,
    sample_every: float | None = None,
    observables: dict | None = None,
    keep_states: bool = True,
    check: bool = True,
    t0: float = 0.0,
    tolerances: dict | None = None,
) -> Evolution:
    """Integrate drho/dt = gen(rho) with classical RK4.

    For the mean-field generator the drives are read off each RK4 stage
    state.  Samples are taken every ``sample_every`` time units (rounded to
    a whole number of steps) and at the end; each sample is checked for
    trace, Hermiticity, positivity and top-level leakage.
    """
    space, y = _space_of(rho0)
    if space != gen.space:
        raise ConfigError(f"state space {space} does not match generator space {gen.space}")
    dt = default_dt(gen.p, space) if dt is None else dt
    n, h, stride = _grid(t_end, dt, sample_every)
    observables = observables or {}
    tolerances = tolerances or {}
    times, states, hyg = [], [], []
    obs = {k: [] for k in observables}
    y = np.array(y, dtype=complex)

    def record(step, m):
        t = t0 + step * h
        hy = hygiene(m)
        if check:
            hy.raise_if_bad(where=f" at t = {t:.6g}", **tolerances)
        times.append(t)
        hyg.append(hy)
        if keep_states:
            states.append(DensityMatrix(m, space, t))
        for k, fn in observables.items():
            obs[k].append(fn(m))

    record(0, y)
    step = 0
    while step < n:
        todo = min(stride, n - step)
        y = rk4_steps(gen, y, t0 + step * h, h, todo)
        step += todo
        record(step, y)
    meta = {"dt": h, "steps": n, "generator": gen.label, "n_max": space.n_max,
            "final": DensityMatrix(y, space, t0 + n * h)}
    return Evolution(np.array(times), states if keep_states else None,
                     {k: np.array(v) for k, v in obs.items()}, hyg, meta)


def semigroup_R(rho, p: LaserParams, alpha0: complex, beta0: complex, t: float,
                dt: float | None = None, check: bool = True) -> DensityMatrix:
    """State at time t of the autonomous flow with constant drives."""
    space, m = _space_of(rho)
    gen = ConstantDriveGenerator(p, space, alpha0, beta0)
    ev = evolve(m, gen, t, dt, keep_states=False, check=check)
    return ev.final


def apply_semigroup(m: np.ndarray, gen: ConstantDriveGenerator, t: float, dt: float) -> np.ndarray:
    """Autonomous flow applied to any Hermitian matrix (not necessarily a state)."""
    n, h, _ = _grid(t, dt, None)
    return rk4_steps(gen, m, 0.0, h, n)
