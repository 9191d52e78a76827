"""Emission of pairs from the prepared ensemble and the isolato detection rule.

Each emitted pair is drawn from the normalized prepared ensemble:
x_A uniform on (-V, V], x_B = wrap(x_A - V), lambda_A and lambda_B uniform on
[0, pi/4V), mu uniform on [-1, 1).  Whether a particle is in isolato mode is
decided locally from its own hidden variables and its own analyzer angle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    HiddenPairState,
    ModelParams,
    Settings,
    Variant,
    spin_projection,
    wrap,
)


class RngStream:
    """Deterministic random stream identified by (seed, substream).

    Distinct substreams come from ``SeedSequence.spawn_key`` and are
    statistically independent; a stream is owned by a single worker.
    """

    def __init__(self, seed: int, substream: int = 0):
        self.seed = int(seed)
        self.substream = int(substream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.substream,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, size=None):
        """Doubles on [0, 1)."""
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, substream={self.substream})"


@dataclass
class PairBatch:
    """Column-wise batch of hidden pair states."""

    x_a: np.ndarray
    lambda_a: np.ndarray
    x_b: np.ndarray
    lambda_b: np.ndarray
    mu: np.ndarray

    def __len__(self):
        return len(self.x_a)

    def __getitem__(self, i) -> HiddenPairState:
        return HiddenPairState(
            float(self.x_a[i]), float(self.lambda_a[i]), float(self.x_b[i]),
            float(self.lambda_b[i]), float(self.mu[i]),
        )


def sample_pairs(rng: RngStream, params: ModelParams, n: int) -> PairBatch:
    V = params.V
    # fixed draw order keeps every column reproducible for a given stream
    x_a = V - 2.0 * V * rng.uniform(n)  # (-V, V]
    lambda_a = params.lambda_max * rng.uniform(n)
    lambda_b = params.lambda_max * rng.uniform(n)
    mu = 2.0 * rng.uniform(n) - 1.0
    x_b = wrap(x_a - V, V)
    return PairBatch(x_a, lambda_a, np.atleast_1d(x_b), lambda_b, mu)


def sample_initial_pair(rng: RngStream, params: ModelParams) -> HiddenPairState:
    return sample_pairs(rng, params, 1)[0]


def detection_threshold_a(x_a, theta_a, V):
    return math.pi / (4.0 * V) * np.abs(np.sin(math.pi * np.asarray(x_a) / V - theta_a))


def detection_threshold_b(x_b, theta_b, V):
    return math.pi / (4.0 * V) * np.abs(np.sin(math.pi * np.asarray(x_b) / V - math.pi - theta_b))


def is_isolato_a(state, theta_a, params: ModelParams):
    """A is undetectable iff lambda_A exceeds its threshold (and mu < 0 when symmetric).

    ``state`` may be a HiddenPairState or a PairBatch.
    """
    hidden = np.asarray(state.lambda_a) > detection_threshold_a(state.x_a, theta_a, params.V)
    if params.variant is Variant.SYMMETRIC:
        hidden = hidden & (np.asarray(state.mu) < 0.0)
    return bool(hidden) if np.ndim(hidden) == 0 else hidden


def is_isolato_b(state, theta_b, params: ModelParams):
    """B can only hide in the symmetric variant, and only when mu >= 0."""
    if params.variant is Variant.ASYMMETRIC_A:
        hidden = np.zeros(np.shape(state.x_b), dtype=bool)
    else:
        hidden = (np.asarray(state.lambda_b) > detection_threshold_b(state.x_b, theta_b, params.V)) & (
            np.asarray(state.mu) >= 0.0
        )
    return bool(hidden) if np.ndim(hidden) == 0 else hidden


class OutcomeKind(enum.Enum):
    COINCIDENCE = "coincidence"
    SINGLE_A = "single_a"
    SINGLE_B = "single_b"


@dataclass(frozen=True)
class TrialOutcome:
    kind: OutcomeKind
    s_a: int | None = None
    s_b: int | None = None


# integer codes used by the vectorized path
PP, PM, MP, MM, SINGLE_A_CODE, SINGLE_B_CODE = range(6)


def classify_batch(batch: PairBatch, settings: Settings, params: ModelParams,
                   theta_a_hidden=None) -> np.ndarray:
    """Outcome codes for a batch.

    ``theta_a_hidden`` is the angle entering A's isolato rule; it defaults to
    the A setting and differs only for the time-evolution extension.
    """
    V = params.V
    if theta_a_hidden is None:
        theta_a_hidden = settings.theta_a
    hide_a = is_isolato_a(batch, theta_a_hidden, params)
    hide_b = is_isolato_b(batch, settings.theta_b, params)
    if np.any(hide_a & hide_b):
        raise AssertionError("both particles of a pair in isolato mode; mu gate violated")
    s_a = spin_projection(settings.theta_a, batch.x_a, V)
    s_b = spin_projection(settings.theta_b, batch.x_b, V)
    codes = 2 * (s_a < 0) + (s_b < 0)
    codes = np.where(hide_a, SINGLE_B_CODE, codes)
    codes = np.where(hide_b, SINGLE_A_CODE, codes)
    return codes.astype(np.int8)


def measure_trial(state: HiddenPairState, settings: Settings, params: ModelParams) -> TrialOutcome:
    hide_a = is_isolato_a(state, settings.theta_a, params)
    hide_b = is_isolato_b(state, settings.theta_b, params)
    if hide_a and hide_b:
        raise AssertionError("both particles of a pair in isolato mode; mu gate violated")
    if hide_a:
        return TrialOutcome(OutcomeKind.SINGLE_B, s_b=spin_projection(settings.theta_b, state.x_b, params.V))
    if hide_b:
        return TrialOutcome(OutcomeKind.SINGLE_A, s_a=spin_projection(settings.theta_a, state.x_a, params.V))
    return TrialOutcome(
        OutcomeKind.COINCIDENCE,
        s_a=spin_projection(settings.theta_a, state.x_a, params.V),
        s_b=spin_projection(settings.theta_b, state.x_b, params.V),
    )
