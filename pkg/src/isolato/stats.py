"""Standard errors, Wilson intervals and Pearson chi-square tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy import stats as _sps

Z95 = NormalDist().inv_cdf(0.975)


class SparseBinError(ValueError):
    """A chi-square bin has expected count below 5."""


@dataclass(frozen=True)
class BinomialEstimate:
    successes: int
    trials: int
    p_hat: float
    stderr: float
    ci_low: float
    ci_high: float


def binomial_estimate(successes: int, trials: int, z: float = Z95) -> BinomialEstimate:
    """Point estimate, Wald standard error and 95% Wilson score interval."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    n = trials
    p = successes / n
    stderr = math.sqrt(p * (1.0 - p) / n)
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, min(p, centre - half))
    high = 1.0 if successes == n else min(1.0, max(p, centre + half))
    return BinomialEstimate(successes, trials, p, stderr, low, high)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float


def chi_square_uniformity(histogram, expected) -> ChiSquareResult:
    """Pearson goodness-of-fit of bin counts against expected bin weights.

    ``expected`` holds per-bin probabilities (or any nonnegative weights); it is
    rescaled to the histogram total.  The p-value uses (bins - 1) dof.
    """
    obs = np.asarray(histogram, dtype=float)
    weights = np.asarray(expected, dtype=float)
    if obs.ndim != 1 or obs.shape != weights.shape or obs.size < 2:
        raise ValueError("histogram and expected must be 1-d with equal length >= 2")
    exp = weights / weights.sum() * obs.sum()
    if np.any(exp < 5.0):
        raise SparseBinError(f"expected count {exp.min():.3g} < 5 in at least one bin")
    statistic = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return ChiSquareResult(statistic, dof, float(_sps.chi2.sf(statistic, dof)))


def correlation_stderr(counts, normalization) -> float:
    """Delta-method standard error of the correlation estimate.

    For coincidence normalization each coincidence contributes +/-1, giving
    sqrt((1 - E^2)/D).  Under all-emissions normalization undetected pairs
    contribute 0, so the per-trial variance is c/n - E^2.
    """
    from .engine import Normalization, correlation

    e = correlation(counts, normalization)
    if Normalization.parse(normalization) is Normalization.COINCIDENCE_ONLY:
        d = counts.n_coincidences
        var = 1.0 - e * e
    else:
        d = counts.n_emitted
        var = counts.n_coincidences / d - e * e
    return math.sqrt(max(var, 0.0) / d)
