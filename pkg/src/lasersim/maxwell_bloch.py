"""Maxwell-Bloch equations for the field amplitude A, polarization S and
inversion D, with their equilibria, polar form, asymptotic phase and
Lyapunov decay certificates.

    A' = -(kappa + i omega) A + g S
    S' = -(gamma + i omega) S + g A D
    D' = -4 g Re(conj(A) S) - 2 gamma (D - d)
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field, replace

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    ConfigError,
    NoConvergenceError,
    NumericalAbort,
    PhaseUndefinedError,
    RegimeError,
    SingularTrajectoryError,
)
from .params import LaserParams, cooperative_parameter

R_FLOOR = 1e-8
THETA_WINDOW_TOL = 1e-12


@dataclass(frozen=True)
class MBState:
    A: complex
    S: complex
    D: float

    def __post_init__(self):
        object.__setattr__(self, "A", complex(self.A))
        object.__setattr__(self, "S", complex(self.S))
        object.__setattr__(self, "D", float(np.real(self.D)))

    def as_tuple(self):
        return self.A, self.S, self.D

    def is_bloch_physical(self, atol: float = 1e-12) -> bool:
        """Atomic means compatible with some qubit density matrix."""
        return 4 * abs(self.S) ** 2 + self.D**2 <= 1 + atol

    def rotated(self, theta: float) -> "MBState":
        ph = np.exp(1j * theta)
        return MBState(ph * self.A, ph * self.S, self.D)

    def distance(self, other: "MBState") -> float:
        return max(abs(self.A - other.A), abs(self.S - other.S), abs(self.D - other.D))


@dataclass(frozen=True)
class PolarMBState:
    """Polar form A = r e^{i phi}, S = (S_R + i S_I) e^{i phi}, D = D_R + d."""

    r: float
    phi: float
    S_R: float
    S_I: float
    D_R: float

    def to_cartesian(self, d: float) -> MBState:
        ph = np.exp(1j * self.phi)
        return MBState(self.r * ph, (self.S_R + 1j * self.S_I) * ph, self.D_R + d)

    @classmethod
    def from_cartesian(cls, s: MBState, d: float) -> "PolarMBState":
        r = abs(s.A)
        if r < R_FLOOR:
            raise SingularTrajectoryError(f"|A| = {r:.3e} below the polar floor {R_FLOOR}")
        phi = float(np.angle(s.A))
        rot = s.S * np.exp(-1j * phi)
        return cls(r, phi, rot.real, rot.imag, s.D - d)


@dataclass
class MBTrajectory:
    times: np.ndarray
    A: np.ndarray
    S: np.ndarray
    D: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("trajectory time grid must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> MBState:
        return MBState(self.A[k], self.S[k], self.D[k])

    @property
    def states(self) -> list[MBState]:
        return [self.state(k) for k in range(len(self))]

    @property
    def final(self) -> MBState:
        return self.state(-1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "Re A", "Im A", "Re S", "Im S", "D"])
            for row in zip(self.times, self.A.real, self.A.imag, self.S.real, self.S.imag, self.D):
                w.writerow([f"{x:.17g}" for x in row])


def default_dt(p: LaserParams) -> float:
    return 1e-3 / max(p.kappa, p.gamma, abs(p.g), abs(p.omega), 1.0)


def _rhs(A, S, D, kappa, gamma, d, g, omega):
    dA = -(kappa + 1j * omega) * A + g * S
    dS = -(gamma + 1j * omega) * S + g * A * D
    dD = -4.0 * g * (A.conjugate() * S).real - 2.0 * gamma * (D - d)
    return dA, dS, dD


def mb_rhs(s: MBState, p: LaserParams) -> MBState:
    """Time derivative of (A, S, D); returned as an MBState of derivatives."""
    return MBState(*_rhs(s.A, s.S, s.D, p.kappa, p.gamma, p.d, p.g, p.omega))


def _step_count(t_end: float, dt: float) -> int:
    if dt <= 0 or not math.isfinite(dt):
        raise ConfigError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ConfigError(f"t_end must be nonnegative, got {t_end}")
    return int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0


def integrate_mb(
    s0: MBState,
    p: LaserParams,
    t_end: float,
    dt: float | None = None,
    store_every: int = 1,
    t0: float = 0.0,
) -> MBTrajectory:
    """Classical fixed-step RK4.  The step is shrunk slightly if needed so
    that an integer number of steps lands exactly on ``t_end``."""
    dt = default_dt(p) if dt is None else dt
    n = _step_count(t_end, dt)
    h = t_end / n if n else dt
    k, gm, d, g, om = p.kappa, p.gamma, p.d, p.g, p.omega
    A, S, D = complex(s0.A), complex(s0.S), float(s0.D)
    n_out = n // store_every + 1 + (1 if n % store_every else 0)
    As = np.empty(n_out, dtype=complex)
    Ss = np.empty(n_out, dtype=complex)
    Ds = np.empty(n_out)
    ts = np.empty(n_out)
    As[0], Ss[0], Ds[0], ts[0] = A, S, D, t0
    out = 1
    h2 = h / 2
    h6 = h / 6
    for i in range(1, n + 1):
        a1, s1, d1 = _rhs(A, S, D, k, gm, d, g, om)
        a2, s2, d2 = _rhs(A + h2 * a1, S + h2 * s1, D + h2 * d1, k, gm, d, g, om)
        a3, s3, d3 = _rhs(A + h2 * a2, S + h2 * s2, D + h2 * d2, k, gm, d, g, om)
        a4, s4, d4 = _rhs(A + h * a3, S + h * s3, D + h * d3, k, gm, d, g, om)
        A = A + h6 * (a1 + 2 * a2 + 2 * a3 + a4)
        S = S + h6 * (s1 + 2 * s2 + 2 * s3 + s4)
        D = D + h6 * (d1 + 2 * d2 + 2 * d3 + d4)
        if i % store_every == 0 or i == n:
            if not (math.isfinite(A.real) and math.isfinite(A.imag) and math.isfinite(S.real)
                    and math.isfinite(S.imag) and math.isfinite(D)):
                raise NumericalAbort(f"Maxwell-Bloch state became non-finite at t = {t0 + i * h:.6g}")
            As[out], Ss[out], Ds[out], ts[out] = A, S, D, t0 + i * h
            out += 1
    meta = {"method": "rk4", "dt": h, "steps": n, "store_every": store_every}
    return MBTrajectory(ts[:out], As[:out], Ss[:out], Ds[:out], meta)


def interpolate_mb(traj: MBTrajectory, p: LaserParams, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, S, D) at arbitrary times by cubic Hermite interpolation, using the
    vector field for the slopes (fourth order in the stored step)."""
    dA, dS, dD = _rhs(traj.A, traj.S, traj.D, p.kappa, p.gamma, p.d, p.g, p.omega)
    out = []
    for y, dy in ((traj.A, dA), (traj.S, dS), (traj.D, dD)):
        out.append(CubicHermiteSpline(traj.times, y, dy)(times))
    return out[0], out[1], np.real(out[2])


# ---------------------------------------------------------------- equilibria

@dataclass(frozen=True)
class MBEquilibrium:
    state: MBState
    phase_family: bool  # True: any global phase rotation is also an equilibrium


def lasing_amplitude(p: LaserParams) -> float:
    """|A| on the nonzero equilibrium circle (zero at or below threshold)."""
    c = cooperative_parameter(p)
    if c <= 1:
        return 0.0
    return p.gamma * math.sqrt(c - 1) / (math.sqrt(2) * abs(p.g))


def lasing_equilibrium(p: LaserParams, theta: float = 0.0) -> MBState:
    """Point of the nonzero equilibrium circle (omega = 0) with arg A = theta."""
    c = cooperative_parameter(p)
    if c <= 1:
        raise RegimeError(f"no lasing equilibrium for C_b = {c} <= 1")
    r0 = lasing_amplitude(p)
    ph = np.exp(1j * theta)
    return MBState(r0 * ph, p.kappa * r0 / p.g * ph, p.gamma * p.kappa / p.g**2)


def mb_equilibria(p: LaserParams) -> list[MBEquilibrium]:
    out = [MBEquilibrium(MBState(0, 0, p.d), False)]
    if p.omega == 0 and cooperative_parameter(p) > 1:
        out.append(MBEquilibrium(lasing_equilibrium(p), True))
    return out


# ---------------------------------------------------------------- polar form

def polar_rhs(s: PolarMBState, p: LaserParams) -> PolarMBState:
    """Derivatives of (r, phi, S_R, S_I, D_R) for omega = 0."""
    if s.r < R_FLOOR:
        raise SingularTrajectoryError(f"r = {s.r:.3e} below floor")
    k, gm, d, g = p.kappa, p.gamma, p.d, p.g
    return PolarMBState(
        r=-k * s.r + g * s.S_R,
        phi=g * s.S_I / s.r,
        S_R=-gm * s.S_R + g * s.r * (s.D_R + d) + g * s.S_I**2 / s.r,
        S_I=-gm * s.S_I - g * s.S_I * s.S_R / s.r,
        D_R=-2 * gm * s.D_R - 4 * g * s.r * s.S_R,
    )


def integrate_polar(s0: PolarMBState, p: LaserParams, t_end: float, dt: float | None = None):
    """RK4 on the polar system; returns (times, array of rows r, phi, S_R, S_I, D_R)."""
    dt = default_dt(p) if dt is None else dt
    n = _step_count(t_end, dt)
    h = t_end / n if n else dt
    y = np.array([s0.r, s0.phi, s0.S_R, s0.S_I, s0.D_R])
    rows = np.empty((n + 1, 5))
    rows[0] = y

    def f(v):
        return np.array(astuple(polar_rhs(PolarMBState(*v), p)))

    for i in range(1, n + 1):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rows[i] = y
    return np.linspace(0.0, n * h, n + 1), rows


# ---------------------------------------------------------------- asymptotic phase

@dataclass(frozen=True)
class ThetaResult:
    theta: float
    horizon: float
    trajectory: MBTrajectory


def theta_infinity(
    s0: MBState,
    p: LaserParams,
    dt: float | None = None,
    t_start: float | None = None,
    t_max: float | None = None,
    window: float | None = None,
    tol: float = THETA_WINDOW_TOL,
    converge_tol: float = 1e-6,
    full: bool = False,
):
    """Limiting phase of the field under the omega = 0 flow started at s0.

    Computes arg( A0/|A0| exp(i g int_0^inf Im(S/A) ds) ) in [0, 2 pi).  The
    horizon doubles from ``t_start`` until |Im(S/A)| < ``tol`` over the last
    ``window`` time units and the state sits on the lasing circle.
    """
    if s0.A == 0:
        raise PhaseUndefinedError("A(0) = 0: the phase is undefined")
    p0 = replace(p, omega=0.0)
    if cooperative_parameter(p0) <= 1:
        raise RegimeError("the asymptotic phase needs C_b > 1")
    m = min(p.kappa, p.gamma)
    dt = default_dt(p0) if dt is None else dt
    horizon = 50.0 / m if t_start is None else t_start
    t_max = 64 * horizon if t_max is None else t_max
    window = 5.0 / m if window is None else window
    target = lasing_equilibrium(p0)
    r0 = abs(target.A)

    chunks = [integrate_mb(s0, p0, horizon, dt)]
    while True:
        traj = _concat(chunks)
        r = np.abs(traj.A)
        if r.min() < R_FLOOR:
            k = int(np.argmin(r))
            raise SingularTrajectoryError(f"|A| fell to {r[k]:.3e} at t = {traj.times[k]:.6g}")
        integrand = p0.g * np.imag(traj.S / traj.A)
        tail = traj.times >= traj.times[-1] - window
        fin = traj.final
        on_circle = (
            abs(abs(fin.A) - r0) <= converge_tol * max(r0, 1.0)
            and abs(fin.D - target.D) <= converge_tol
            and abs(fin.S - p0.kappa * fin.A / p0.g) <= converge_tol
        )
        if np.all(np.abs(integrand[tail]) < tol) and on_circle:
            break
        if traj.times[-1] >= t_max:
            raise NoConvergenceError(
                f"asymptotic phase not settled by t = {traj.times[-1]:.6g} "
                f"(max tail integrand {np.abs(integrand[tail]).max():.3e})"
            )
        chunks.append(integrate_mb(fin, p0, traj.times[-1], chunks[-1].meta["dt"], t0=traj.times[-1]))
    total = simpson(integrand, x=traj.times)
    theta = float(np.mod(np.angle(s0.A) + total, 2 * np.pi))
    if full:
        return ThetaResult(theta, float(traj.times[-1]), traj)
    return theta


def _concat(chunks: list[MBTrajectory]) -> MBTrajectory:
    if len(chunks) == 1:
        return chunks[0]
    first = chunks[0]
    rest = chunks[1:]
    return MBTrajectory(
        np.concatenate([first.times] + [c.times[1:] for c in rest]),
        np.concatenate([first.A] + [c.A[1:] for c in rest]),
        np.concatenate([first.S] + [c.S[1:] for c in rest]),
        np.concatenate([first.D] + [c.D[1:] for c in rest]),
        dict(first.meta, chunks=len(chunks)),
    )


# ---------------------------------------------------------------- Lyapunov certificates

@dataclass
class CertificateCheck:
    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    holds: np.ndarray

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))


def _compare(name, lhs, rhs, rtol):
    return CertificateCheck(name, lhs, rhs, lhs <= rhs * (1 + rtol) + 1e-300)


def long_time_certificate(traj: MBTrajectory, p: LaserParams, rtol: float = 1e-9) -> CertificateCheck:
    """Decay of a weighted energy of (A, S, D - d); branch chosen by the sign of d."""
    t = traj.times - traj.times[0]
    a2, s2, z2 = np.abs(traj.A) ** 2, np.abs(traj.S) ** 2, (traj.D - p.d) ** 2
    if p.d < 0:
        energy = 4 * abs(p.d) * a2 + 4 * s2 + z2
        rate = 2 * min(p.kappa, p.gamma)
        name = "long_time_d_negative"
    else:
        w = p.g**2 / (p.gamma * p.kappa)
        energy = a2 + w * s2 + w / 4 * z2
        rate = min(p.kappa - p.g**2 * p.d / p.gamma, p.gamma - p.g**2 * p.d / p.kappa)
        name = "long_time_d_nonnegative"
    return _compare(name, energy, np.exp(-rate * t) * energy[0], rtol)


def sharpened_certificate(traj: MBTrajectory, p: LaserParams, rtol: float = 1e-9) -> CertificateCheck:
    """Bound on |S|^2 + (D - d)^2/4 for 0 <= d < 1 below threshold."""
    c = cooperative_parameter(p)
    if not (0 <= p.d < 1) or c >= 1:
        raise RegimeError(f"sharpened bound needs 0 <= d < 1 and C_b < 1 (d = {p.d}, C_b = {c})")
    t = traj.times - traj.times[0]
    k, gm = p.kappa, p.gamma
    lhs = np.abs(traj.S) ** 2 + (traj.D - p.d) ** 2 / 4
    A0, S0, D0 = traj.A[0], traj.S[0], traj.D[0]
    pref = 4 * k * p.d / gm * abs(A0) ** 2 + (4 * k / gm + 1) * abs(S0) ** 2 + (k / gm + 0.25) * (D0 - p.d) ** 2
    rhs = np.exp(-(1 - c) * min(k, gm) * t) * pref
    return _compare("sharpened", lhs, rhs, rtol)


def lyapunov_certificates(traj: MBTrajectory, p: LaserParams, sharpened: bool | None = None) -> dict:
    """Pointwise checks of the explicit Lyapunov bounds along a trajectory.

    ``sharpened=None`` includes the sharpened bound only when its hypotheses
    hold; ``True`` demands it and raises RegimeError otherwise.
    """
    out = {"long_time": long_time_certificate(traj, p)}
    applicable = 0 <= p.d < 1 and cooperative_parameter(p) < 1
    if sharpened or (sharpened is None and applicable):
        out["sharpened"] = sharpened_certificate(traj, p)
    return out
