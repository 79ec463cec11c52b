"""Physical parameters of the single-mode laser and regime classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, RegimeError

REGIME_RTOL = 1e-9


class Regime(str, Enum):
    BELOW_THRESHOLD = "BelowThreshold"
    STABLE_LASING = "StableLasing"
    UNSTABLE_LASING = "UnstableLasing"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class LaserParams:
    """Cavity decay ``kappa``, atomic relaxation ``gamma``, pump ``d``,
    coupling ``g`` and frequency ``omega``.

    The atomic rates can also be given through the upward and downward jump
    rates, see :meth:`from_jump_rates`.
    """

    kappa: float
    gamma: float
    d: float
    g: float
    omega: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma", "d", "g", "omega"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not -1.0 < self.d < 1.0:
            raise ConfigError(f"d must lie in (-1, 1), got {self.d}")
        if self.g == 0:
            raise ConfigError("g must be nonzero")

    @classmethod
    def from_jump_rates(cls, kappa, kappa_plus, kappa_minus, g, omega=0.0):
        """Build from the rates of the sigma^+ (up) and sigma^- (down) jumps."""
        if kappa_plus <= 0 or kappa_minus <= 0:
            raise ConfigError("kappa_plus and kappa_minus must be positive")
        total = kappa_plus + kappa_minus
        return cls(kappa=kappa, gamma=total / 2, d=(kappa_plus - kappa_minus) / total, g=g, omega=omega)

    @classmethod
    def from_dict(cls, block: dict) -> "LaserParams":
        """Parse the JSON parameter block.

        Either ``gamma`` and ``d`` or ``kappa_plus`` and ``kappa_minus`` may be
        given, never a mix of the two.
        """
        if not isinstance(block, dict):
            raise ConfigError("params block must be a JSON object")
        direct = {"gamma", "d"} & block.keys()
        jumps = {"kappa_plus", "kappa_minus"} & block.keys()
        if direct and jumps:
            raise ConfigError("give either gamma/d or kappa_plus/kappa_minus, not both")
        allowed = {"kappa", "gamma", "d", "g", "omega", "kappa_plus", "kappa_minus"}
        unknown = block.keys() - allowed
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        required = {"kappa", "g"} | ({"kappa_plus", "kappa_minus"} if jumps else {"gamma", "d"})
        missing = required - block.keys()
        if missing:
            raise ConfigError(f"missing parameter keys: {sorted(missing)}")
        omega = block.get("omega", 0.0)
        if jumps:
            return cls.from_jump_rates(block["kappa"], block["kappa_plus"], block["kappa_minus"], block["g"], omega)
        return cls(kappa=block["kappa"], gamma=block["gamma"], d=block["d"], g=block["g"], omega=omega)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "gamma": self.gamma, "d": self.d, "g": self.g, "omega": self.omega}

    @property
    def kappa_minus(self) -> float:
        """Rate of the downward jump sigma^-."""
        return self.gamma * (1.0 - self.d)

    @property
    def kappa_plus(self) -> float:
        """Rate of the upward jump sigma^+."""
        return self.gamma * (1.0 + self.d)

    @property
    def c_b(self) -> float:
        return cooperative_parameter(self)

    def with_c_b(self, c_b: float) -> "LaserParams":
        """Copy with ``g`` rescaled (sign kept) so that C_b equals ``c_b``.

        Needs ``d`` with the same sign as ``c_b``.
        """
        if self.d == 0 or c_b / self.d <= 0:
            raise ConfigError("c_b and d must share a nonzero sign")
        g = math.copysign(math.sqrt(c_b * self.kappa * self.gamma / self.d), self.g)
        return LaserParams(self.kappa, self.gamma, self.d, g, self.omega)


@dataclass(frozen=True)
class RegimeReport:
    c_b: float
    first_threshold_exceeded: bool
    second_threshold: float
    regime: Regime


def cooperative_parameter(p: LaserParams) -> float:
    return p.g**2 * p.d / (p.kappa * p.gamma)


def second_threshold(kappa: float, gamma: float) -> float:
    """Value of C_b where the lasing fixed point loses stability (inf if never)."""
    if kappa <= 3 * gamma:
        return math.inf
    return (kappa**2 + 5 * kappa * gamma) / (gamma * (kappa - 3 * gamma))


def classify_regime(p: LaserParams, rtol: float = REGIME_RTOL) -> RegimeReport:
    c = cooperative_parameter(p)
    c2 = second_threshold(p.kappa, p.gamma)
    if abs(c - 1.0) <= rtol or (math.isfinite(c2) and abs(c - c2) <= rtol * c2):
        regime = Regime.BOUNDARY
    elif c < 1.0:
        regime = Regime.BELOW_THRESHOLD
    elif c < c2:
        regime = Regime.STABLE_LASING
    else:
        regime = Regime.UNSTABLE_LASING
    return RegimeReport(c_b=c, first_threshold_exceeded=c > 1.0, second_threshold=c2, regime=regime)


def decay_rate_delta_sys(p: LaserParams) -> float:
    """Guaranteed exponential rate of approach to the stationary state below threshold."""
    c = cooperative_parameter(p)
    if c >= 1.0:
        raise RegimeError(f"decay rate only available below threshold, C_b = {c}")
    m = min(p.kappa, p.gamma)
    if p.d < 0:
        return m / 2
    return (1.0 - c) * m / 3
