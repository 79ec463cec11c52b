"""Scalar diagnostics of density matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import entr

from .errors import ConfigError, PositivityError
from .hilbert import SpaceSpec, make_operators
from .lindblad import DensityMatrix, field_means

CLIPPED_MASS_BUDGET = 1e-7


@dataclass
class ObservableSeries:
    times: np.ndarray
    name: str
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.shape != self.values.shape[:1]:
            raise ConfigError("times and values must have the same length")


@dataclass(frozen=True)
class EntropyReport:
    linear_entropy: float
    von_neumann: float
    clipped_mass: float


def _m(rho) -> np.ndarray:
    return rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)


def mean_value(rho, A) -> complex:
    """tr(rho A)."""
    r, a = _m(rho), np.asarray(A)
    if r.shape != a.shape:
        raise ConfigError(f"state shape {r.shape} does not match operator shape {a.shape}")
    return complex(np.sum(r * a.T))


def photon_distribution(rho) -> np.ndarray:
    dg = np.real(np.diagonal(_m(rho)))
    return dg[0::2] + dg[1::2]


def mean_photon(rho) -> float:
    pn = photon_distribution(rho)
    return float(np.dot(np.arange(len(pn)), pn))


@lru_cache(maxsize=16)
def _quadratures(n_max: int):
    ops = make_operators(SpaceSpec(n_max))
    Q, P = ops.Q().entries, ops.P().entries
    return Q, Q @ Q, P, P @ P


def quadrature_variances(rho) -> tuple[float, float]:
    r = _m(rho)
    Q, Q2, P, P2 = _quadratures(r.shape[0] // 2 - 1)
    mq, mp = mean_value(r, Q).real, mean_value(r, P).real
    return mean_value(r, Q2).real - mq**2, mean_value(r, P2).real - mp**2


def entropies(rho, budget: float = CLIPPED_MASS_BUDGET) -> EntropyReport:
    r = _m(rho)
    lam = np.linalg.eigvalsh((r + r.conj().T) / 2)
    clipped = float(-lam[lam < 0].sum())
    if clipped > budget:
        raise PositivityError(f"negative eigenvalue mass {clipped:.3e} exceeds {budget:.1e}")
    lam = np.clip(lam, 0.0, None)
    linear = 1.0 - float(np.real(np.sum(r * r.T)))
    return EntropyReport(linear, float(entr(lam).sum()), clipped)


def trace_distance(rho1, rho2) -> float:
    """tr|rho1 - rho2| (no factor 1/2), exactly symmetric in its arguments."""
    a, b = np.ascontiguousarray(_m(rho1)), np.ascontiguousarray(_m(rho2))
    if a.tobytes() > b.tobytes():  # canonical order so that swapping is bit-identical
        a, b = b, a
    diff = a - b
    return float(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def total_variation(p, q) -> float:
    n = max(len(p), len(q))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p
    b[: len(q)] = q
    return 0.5 * float(np.abs(a - b).sum())


def observable_functions(names, space: SpaceSpec, reference=None) -> dict:
    """Map CLI observable names to callables on raw density matrices.

    ``reference`` is the state used by ``trace_distance_to_stationary``.
    """
    table = {
        "mean_photon": mean_photon,
        "varQ": lambda r: quadrature_variances(r)[0],
        "varP": lambda r: quadrature_variances(r)[1],
        "linear_entropy": lambda r: entropies(r).linear_entropy,
        "von_neumann": lambda r: entropies(r).von_neumann,
        "re_A": lambda r: field_means(r)[0].real,
        "im_A": lambda r: field_means(r)[0].imag,
        "abs_A": lambda r: abs(field_means(r)[0]),
        "re_S": lambda r: field_means(r)[1].real,
        "im_S": lambda r: field_means(r)[1].imag,
        "D": lambda r: field_means(r)[2],
        "trace": lambda r: float(np.real(np.trace(r))),
    }
    out = {}
    for name in names:
        if name == "trace_distance_to_stationary":
            if reference is None:
                raise ConfigError("trace_distance_to_stationary needs a reference state")
            ref = _m(reference)
            out[name] = lambda r, ref=ref: trace_distance(r, ref)
        elif name.startswith("p(") and name.endswith(")"):
            try:
                n = int(name[2:-1])
            except ValueError as exc:
                raise ConfigError(f"bad photon-number observable {name!r}") from exc
            if not 0 <= n <= space.n_max:
                raise ConfigError(f"{name} outside 0..{space.n_max}")
            out[name] = lambda r, n=n: float(photon_distribution(r)[n])
        elif name in table:
            out[name] = table[name]
        else:
            raise ConfigError(f"unknown observable {name!r}")
    return out
