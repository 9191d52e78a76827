"""Hidden-state space of the spin pair: circle arithmetic, spin projections, densities.

The hidden coordinate of each particle lives on a circle of circumference
``2V`` represented by the half-open interval ``(-V, V]``.  Spins are carried
as integers ``+1``/``-1`` in units of hbar/2.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class InvalidArgumentError(ValueError):
    """Raised for out-of-domain arguments (non-finite values, V <= 0, bad timelines)."""


class Variant(enum.Enum):
    """Which particle may enter isolato mode."""

    ASYMMETRIC_A = "asym"
    SYMMETRIC = "sym"

    @classmethod
    def parse(cls, value: "Variant | str") -> "Variant":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name, member.name.lower()):
                return member
        raise InvalidArgumentError(f"unknown variant {value!r}; expected 'asym' or 'sym'")


def _check_half_period(V: float) -> None:
    if not (math.isfinite(V) and V > 0):
        raise InvalidArgumentError(f"half-period V must be finite and > 0, got {V!r}")


@dataclass(frozen=True)
class ModelParams:
    V: float = 1.0
    variant: Variant = Variant.ASYMMETRIC_A
    seed: int = 0

    def __post_init__(self):
        _check_half_period(self.V)
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def lambda_max(self) -> float:
        """Upper end of the mode-variable range, pi/(4V)."""
        return math.pi / (4.0 * self.V)


def reduce_angle(theta):
    """Reduce an angle into [0, 2pi)."""
    r = np.mod(theta, TWO_PI)
    # np.mod can round up to exactly 2pi for tiny negative inputs
    r = np.where(r >= TWO_PI, 0.0, r)
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class Settings:
    """Analyzer angles (radians) of stations A and B, stored reduced to [0, 2pi)."""

    theta_a: float
    theta_b: float

    def __post_init__(self):
        for name in ("theta_a", "theta_b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, reduce_angle(value))

    @property
    def delta(self) -> float:
        return self.theta_a - self.theta_b


@dataclass(frozen=True)
class HiddenPairState:
    """One point (x_A, lambda_A, x_B, lambda_B, mu) of the extended hidden space."""

    x_a: float
    lambda_a: float
    x_b: float
    lambda_b: float
    mu: float = field(default=0.0)


def wrap(x, V):
    """Map ``x`` onto the representative interval (-V, V] modulo 2V.

    >>> wrap(3.0, 1.0), wrap(-1.0, 1.0)
    (1.0, 1.0)
    """
    _check_half_period(V)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("wrap() requires finite x")
    r = V - np.mod(V - x, 2.0 * V)
    r = np.where(r <= -V, r + 2.0 * V, r)
    return float(r) if r.ndim == 0 else r


def _phase(theta, x, V):
    # position relative to the analyzer boundary, in units of V, reduced into (-1, 1]
    u = np.asarray(x, dtype=float) / V - np.asarray(theta, dtype=float) / math.pi
    r = 1.0 - np.mod(1.0 - u, 2.0)
    return np.where(r <= -1.0, r + 2.0, r)


def spin_projection(theta, x, V):
    """Quantized spin sign: +1 iff wrap(x - (V/pi) theta) lies in (0, V], else -1."""
    _check_half_period(V)
    s = np.where(_phase(theta, x, V) > 0.0, 1, -1)
    return int(s) if s.ndim == 0 else s


def nonquantized_spin(theta, x, V):
    """Continuous spin value sin(pi x / V - theta), in units of hbar/2."""
    _check_half_period(V)
    s = np.sin(math.pi * np.asarray(x, dtype=float) / V - np.asarray(theta, dtype=float))
    return float(s) if s.ndim == 0 else s


def sigma1_density(x_a, theta_a, V):
    """Observed-pair density of x_A fixed by the A setting: (pi/4V)|sin(pi x_A/V - theta_A)|."""
    return math.pi / (4.0 * V) * np.abs(nonquantized_spin(theta_a, x_a, V))


def sigma2_density(x, theta_b, V):
    """Observed-pair density of x_A fixed by the B setting: same form with theta_B."""
    return math.pi / (4.0 * V) * np.abs(nonquantized_spin(theta_b, x, V))
