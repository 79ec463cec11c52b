"""Closed-form states and solutions: the stationary state, the lasing
limit cycle, the equilibrium of the constantly driven linear equation, the
driven two-level block, pure-death photon statistics and the long-time
values of photon statistics and entropies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import binom, poisson

from .errors import RegimeError
from .hilbert import LEAKAGE_TOL, SpaceSpec, coherent_vector, weyl_field
from .lindblad import DensityMatrix
from .maxwell_bloch import lasing_amplitude
from .params import LaserParams, cooperative_parameter

EXPM_COND_LIMIT = 1e8


def _vacuum(space: SpaceSpec) -> np.ndarray:
    f = np.zeros((space.n_levels, space.n_levels), dtype=complex)
    f[0, 0] = 1.0
    return f


def stationary_state(p: LaserParams, space: SpaceSpec) -> DensityMatrix:
    """Field vacuum times the atomic populations ((1 + d)/2, (1 - d)/2)."""
    atom = np.diag([(1 + p.d) / 2, (1 - p.d) / 2]).astype(complex)
    return DensityMatrix.product(_vacuum(space), atom, space)


def limit_cycle_atom(p: LaserParams, t: float, theta: float) -> np.ndarray:
    c = cooperative_parameter(p)
    ph = np.exp(-1j * (p.omega * t - theta))
    coh = ph * p.kappa * p.gamma * math.sqrt(c - 1) / (math.sqrt(2) * p.g * abs(p.g))
    return np.array([[(1 + p.d / c) / 2, coh], [np.conj(coh), (1 - p.d / c) / 2]])


def limit_cycle_state(p: LaserParams, t: float, theta: float, space: SpaceSpec,
                      tol: float = LEAKAGE_TOL) -> DensityMatrix:
    """Coherent field times a fixed qubit state, rotating with phase theta - omega t."""
    c = cooperative_parameter(p)
    if c <= 1:
        raise RegimeError(f"limit-cycle states need C_b > 1, got {c}")
    zeta = lasing_amplitude(p) * np.exp(-1j * (p.omega * t - theta))
    field = coherent_vector(zeta, space, tol).projector()
    return DensityMatrix(np.kron(field, limit_cycle_atom(p, t, theta)), space, t)


def equilibrium_atom(p: LaserParams, beta0: complex) -> np.ndarray:
    den = p.gamma**2 + p.omega**2 + 2 * abs(beta0) ** 2
    pop = p.d * (p.gamma**2 + p.omega**2) / (2 * den)
    off = p.d * beta0 * (p.gamma - 1j * p.omega) / den
    return np.array([[0.5 + pop, off], [np.conj(off), 0.5 - pop]])


def linear_equilibrium(p: LaserParams, alpha0: complex, beta0: complex, space: SpaceSpec,
                       tol: float = LEAKAGE_TOL) -> DensityMatrix:
    """Stationary state of the linear equation with constant drives."""
    field = coherent_vector(alpha0 / (p.kappa + 1j * p.omega), space, tol).projector()
    return DensityMatrix(np.kron(field, equilibrium_atom(p, beta0)), space)


# ---------------------------------------------------------------- qubit block

@dataclass(frozen=True)
class AtomBlockSolution:
    """Linear system v' = M v + f for v = (a_pp - a_mm, a_pm, a_mp).

    The trace a_pp + a_mm is conserved and enters only through the forcing.
    """

    matrix3: np.ndarray
    equilibrium3: np.ndarray
    trace_const: complex
    forcing3: np.ndarray

    def lyapunov_defect(self) -> float:
        """Distance of A^* M + M A from -4 gamma I for M = diag(1, 2, 2)."""
        M = np.diag([1.0, 2.0, 2.0])
        gamma = -self.matrix3[0, 0].real / 2
        lhs = self.matrix3.conj().T @ M + M @ self.matrix3
        return float(np.max(np.abs(lhs + 4 * gamma * np.eye(3))))


def atom_block(p: LaserParams, beta: complex, trace: complex = 1.0) -> AtomBlockSolution:
    g, w, b = p.gamma, p.omega, complex(beta)
    A = np.array([
        [-2 * g, -2 * np.conj(b), -2 * b],
        [b, -g - 1j * w, 0],
        [np.conj(b), 0, -g + 1j * w],
    ], dtype=complex)
    den = g**2 + w**2 + 2 * abs(b) ** 2
    eq = p.d * trace / den * np.array([g**2 + w**2, b * (g - 1j * w), np.conj(b) * (g + 1j * w)])
    forcing = np.array([2 * g * p.d * trace, 0, 0], dtype=complex)
    return AtomBlockSolution(A, eq, complex(trace), forcing)


def expm_small(A: np.ndarray, t: float) -> np.ndarray:
    """exp(A t) by eigendecomposition, falling back to scaling-and-squaring
    when the eigenvector basis is ill-conditioned."""
    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) > EXPM_COND_LIMIT:
        return expm(A * t)
    return (V * np.exp(lam * t)) @ np.linalg.inv(V)


def atom_block_evolve(initial: np.ndarray, p: LaserParams, beta: complex, t: float) -> np.ndarray:
    """Exact qubit state at time t under the constant-beta atomic generator."""
    r0 = np.asarray(initial, dtype=complex)
    tr = r0[0, 0] + r0[1, 1]
    sol = atom_block(p, beta, tr)
    v0 = np.array([r0[0, 0] - r0[1, 1], r0[0, 1], r0[1, 0]])
    v = sol.equilibrium3 + expm_small(sol.matrix3, t) @ (v0 - sol.equilibrium3)
    return np.array([[(tr + v[0]) / 2, v[1]], [v[2], (tr - v[0]) / 2]])


# ---------------------------------------------------------------- photon death

@dataclass(frozen=True)
class PureDeathDistribution:
    """Photon-number law of a field started in e_n and damped at rate 2 kappa per photon."""

    n_start: int
    kappa: float

    def at(self, t: float) -> np.ndarray:
        survive = math.exp(-2 * self.kappa * t)
        return binom.pmf(np.arange(self.n_start + 1), self.n_start, survive)


def pure_death(n_start: int, kappa: float, t: float, n_max: int | None = None) -> np.ndarray:
    if n_start < 0 or (n_max is not None and n_start > n_max):
        raise RegimeError(f"n_start = {n_start} outside 0..{n_max}")
    return PureDeathDistribution(n_start, kappa).at(t)


def displaced_vacuum_population(field_rho0: np.ndarray, v: complex, kappa: float, t: float) -> float:
    """Predicted <e_0| W(-v) rho_t W(v) |e_0> for the damped field driven
    towards the coherent amplitude v."""
    n_max = field_rho0.shape[0] - 1
    W = weyl_field(v, n_max)
    shifted = W.conj().T @ field_rho0 @ W
    phi0 = np.real(np.diagonal(shifted))
    return float(np.sum(phi0 * (1 - math.exp(-2 * kappa * t)) ** np.arange(n_max + 1)))


# ---------------------------------------------------------------- long-time statistics

def lasing_mean_photon(p: LaserParams) -> float:
    return p.gamma**2 * (cooperative_parameter(p) - 1) / (2 * p.g**2)


def poisson_limit(p: LaserParams, n_max: int) -> np.ndarray:
    """Photon-number law approached above threshold (Poisson)."""
    mu = lasing_mean_photon(p)
    return poisson.pmf(np.arange(n_max + 1), mu)


def below_threshold_linear_entropy(d: float) -> float:
    return (1 - d**2) / 2


def below_threshold_von_neumann(d: float) -> float:
    return -0.5 * math.log(0.25 - d**2 / 4) - d / 2 * math.log((1 + d) / (1 - d))


def lasing_linear_entropy(c_b: float, d: float) -> float:
    return 0.5 + d**2 / (2 * c_b**2) - d**2 / c_b


def lasing_von_neumann(c_b: float, d: float) -> float:
    root = math.sqrt(2 * c_b - 1)
    return (-0.5 * math.log(0.25 - d**2 / (4 * c_b**2) * (2 * c_b - 1))
            - d * root / (2 * c_b) * math.log((c_b + d * root) / (c_b - d * root)))
