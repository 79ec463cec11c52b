"""Truncated Fock(n_max) x qubit space, its operators and coherent states.

Basis ordering is field-major with the qubit index running fastest:
index ``2*n + eta`` holds ``e_n (x) e_eta`` where ``eta = 0`` is the excited
state ``e_+`` and ``eta = 1`` is ``e_-``.  Full-space operators are
``np.kron(field_op, atom_op)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

from .errors import ConfigError, TruncationError

DEFAULT_N_MAX = 24
LEAKAGE_TOL = 1e-8

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SpaceSpec:
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if isinstance(self.n_max, bool) or int(self.n_max) != self.n_max or self.n_max < 1:
            raise ConfigError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def n_levels(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, n: int, eta: int) -> int:
        """Position of ``e_n (x) e_eta`` (eta 0 for e_+, 1 for e_-)."""
        if not (0 <= n <= self.n_max and eta in (0, 1)):
            raise ConfigError(f"basis label ({n}, {eta}) outside the space")
        return 2 * n + eta


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator on the full space with a symbolic label."""

    entries: np.ndarray
    space: SpaceSpec
    label: str = "custom"

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ConfigError(f"operator shape {m.shape} does not match dim {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        rhs = other.entries if isinstance(other, OperatorMatrix) else other
        return OperatorMatrix(self.entries @ rhs, self.space, f"{self.label}*{getattr(other, 'label', 'custom')}")

    @property
    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.space, f"({self.label})^dag")

    def to_json(self) -> str:
        return json.dumps(operator_to_dict(self.entries, self.space, self.label))

    @classmethod
    def from_json(cls, text: str) -> "OperatorMatrix":
        entries, space, label = operator_from_dict(json.loads(text))
        return cls(entries, space, label)


def operator_to_dict(entries: np.ndarray, space: SpaceSpec, label: str) -> dict:
    flat = np.asarray(entries, dtype=complex).ravel()
    # float -> repr round-trips exactly through json
    return {
        "space": {"n_max": space.n_max},
        "label": label,
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }


def operator_from_dict(block: dict):
    try:
        space = SpaceSpec(block["space"]["n_max"])
        raw = np.asarray(block["entries"], dtype=float)
        label = block.get("label", "custom")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed operator block: {exc}") from exc
    if raw.shape != (space.dim * space.dim, 2):
        raise ConfigError(f"expected {space.dim**2} [re, im] pairs, got shape {raw.shape}")
    entries = (raw[:, 0] + 1j * raw[:, 1]).reshape(space.dim, space.dim)
    return entries, space, label


@dataclass(frozen=True)
class StateVector:
    """Vector on the field factor (length n_max+1) or on the full space.

    ``leakage`` is the probability mass that the untruncated state would
    place above ``n_max``.
    """

    amplitudes: np.ndarray
    space: SpaceSpec
    leakage: float = 0.0

    @property
    def is_field(self) -> bool:
        return self.amplitudes.shape[0] == self.space.n_levels

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def ladder(n_max: int) -> np.ndarray:
    """Field annihilation operator on Fock levels 0..n_max."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def tensor_embed(field_op, atom_op, space: SpaceSpec | None = None, label: str = "custom") -> OperatorMatrix:
    """Embed ``field_op (x) atom_op`` in the interleaved basis."""
    f = np.asarray(field_op, dtype=complex)
    a = np.asarray(atom_op, dtype=complex)
    if a.shape != (2, 2):
        raise ConfigError(f"atom operator must be 2x2, got {a.shape}")
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ConfigError(f"field operator must be square, got {f.shape}")
    if space is None:
        space = SpaceSpec(f.shape[0] - 1)
    elif f.shape[0] != space.n_levels:
        raise ConfigError(f"field operator has {f.shape[0]} levels, space has {space.n_levels}")
    return OperatorMatrix(np.kron(f, a), space, label)


@dataclass(frozen=True)
class OperatorSet:
    space: SpaceSpec
    a: OperatorMatrix
    adag: OperatorMatrix
    N: OperatorMatrix
    sigma_plus: OperatorMatrix
    sigma_minus: OperatorMatrix
    sigma_3: OperatorMatrix
    identity: OperatorMatrix = field(repr=False, default=None)

    def Q(self) -> OperatorMatrix:
        return OperatorMatrix((self.adag.entries + self.a.entries) / np.sqrt(2), self.space, "Q")

    def P(self) -> OperatorMatrix:
        return OperatorMatrix(1j * (self.adag.entries - self.a.entries) / np.sqrt(2), self.space, "P")


def make_operators(space: SpaceSpec) -> OperatorSet:
    a = ladder(space.n_max)
    If = np.eye(space.n_levels, dtype=complex)
    number = np.diag(np.arange(space.n_levels, dtype=float)).astype(complex)
    return OperatorSet(
        space=space,
        a=tensor_embed(a, ID2, space, "a"),
        adag=tensor_embed(a.T.copy(), ID2, space, "a^dag"),
        N=tensor_embed(number, ID2, space, "N"),
        sigma_plus=tensor_embed(If, SIGMA_PLUS, space, "sigma^+"),
        sigma_minus=tensor_embed(If, SIGMA_MINUS, space, "sigma^-"),
        sigma_3=tensor_embed(If, SIGMA_3, space, "sigma^3"),
        identity=OperatorMatrix(np.eye(space.dim, dtype=complex), space, "I"),
    )


def poisson_tail(mean: float, n_max: int) -> float:
    """Mass of Poisson(mean) above n_max."""
    return float(poisson.sf(n_max, mean)) if mean > 0 else 0.0


def _check_leakage(leak: float, tol: float, what: str):
    if leak > tol:
        raise TruncationError(f"{what}: truncation leakage {leak:.3e} exceeds {tol:.1e}; increase n_max")


def coherent_amplitudes(zeta: complex, n_max: int) -> np.ndarray:
    """e^{-|z|^2/2} z^n / sqrt(n!) for n = 0..n_max, built by recursion."""
    amps = np.empty(n_max + 1, dtype=complex)
    amps[0] = np.exp(-abs(zeta) ** 2 / 2)
    for n in range(1, n_max + 1):
        amps[n] = amps[n - 1] * zeta / np.sqrt(n)
    return amps


def coherent_vector(zeta: complex, space: SpaceSpec, tol: float = LEAKAGE_TOL) -> StateVector:
    """Normalized coherent vector E(zeta) on the field factor."""
    leak = poisson_tail(abs(zeta) ** 2, space.n_max)
    _check_leakage(leak, tol, f"coherent vector with |zeta| = {abs(zeta):.4g}")
    return StateVector(coherent_amplitudes(zeta, space.n_max), space, leak)


def exponential_vector(zeta: complex, space: SpaceSpec) -> StateVector:
    """Unnormalized exponential vector e(zeta) = sum zeta^n / sqrt(n!) e_n."""
    amps = coherent_amplitudes(zeta, space.n_max) * np.exp(abs(zeta) ** 2 / 2)
    return StateVector(amps, space, poisson_tail(abs(zeta) ** 2, space.n_max))


def product_vector(field_vec, atom_vec, space: SpaceSpec | None = None) -> StateVector:
    f = field_vec.amplitudes if isinstance(field_vec, StateVector) else np.asarray(field_vec, dtype=complex)
    if space is None:
        space = field_vec.space if isinstance(field_vec, StateVector) else SpaceSpec(len(f) - 1)
    leak = field_vec.leakage if isinstance(field_vec, StateVector) else 0.0
    return StateVector(np.kron(f, np.asarray(atom_vec, dtype=complex)), space, leak)


def weyl_field(u: complex, n_max: int) -> np.ndarray:
    """Displacement exp(u a^dag - conj(u) a) on the field factor."""
    a = ladder(n_max)
    return expm(u * a.conj().T - np.conj(u) * a)


def weyl(u: complex, space: SpaceSpec, tol: float = LEAKAGE_TOL) -> OperatorMatrix:
    """Weyl operator W(u) (x) I on the full space.

    Unitary by construction; the reported leakage is that of W(u) e_0.
    """
    _check_leakage(poisson_tail(abs(u) ** 2, space.n_max), tol, f"Weyl operator with |u| = {abs(u):.4g}")
    return tensor_embed(weyl_field(u, space.n_max), ID2, space, f"W({complex(u)})")


def weyl_composition_phase(u: complex, v: complex) -> complex:
    """Phase c with W(u) W(v) = c W(u + v)."""
    return np.exp(1j * np.imag(u * np.conj(v)))


def basis_vector(space: SpaceSpec, n: int, eta: int) -> np.ndarray:
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(n, eta)] = 1.0
    return v
