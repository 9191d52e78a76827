"""Closed-form singlet statistics and quadrature cross-checks of the model densities."""

from __future__ import annotations

import enum
import itertools
import math

import numpy as np
from scipy import integrate

from .model import Variant, reduce_angle, sigma1_density, sigma2_density

QUAD_ABS_TOL = 1e-10

OUTCOMES = tuple(itertools.product((1, -1), repeat=2))  # (s_A, s_B)


class QuadratureError(ArithmeticError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved abs error {achieved:.3g})")
        self.achieved = achieved


class Sigma(enum.Enum):
    SIGMA1 = 1
    SIGMA2 = 2


def _check_outcome(outcome):
    if tuple(outcome) not in OUTCOMES:
        raise ValueError(f"outcome must be a pair of signs +/-1, got {outcome!r}")
    return tuple(outcome)


def quantum_probability(outcome, theta_a, theta_b) -> float:
    """Singlet joint probability: sin^2(delta/2)/2 for equal signs, cos^2(delta/2)/2 otherwise."""
    s_a, s_b = _check_outcome(outcome)
    half = (theta_a - theta_b) / 2.0
    if s_a == s_b:
        return 0.5 * math.sin(half) ** 2
    return 0.5 * math.cos(half) ** 2


def analytic_correlation(theta_a, theta_b) -> float:
    return -math.cos(theta_a - theta_b)


def analytic_chsh(a, a_prime, b, b_prime) -> float:
    E = analytic_correlation
    return E(a, b) - E(a, b_prime) + E(a_prime, b) + E(a_prime, b_prime)


def _arc_intervals(start, length, period):
    """Half-open arc (start, start + length] as intervals inside [0, period)."""
    s = start % period
    e = s + length
    if e <= period:
        return [(s, e)]
    return [(s, period), (0.0, e - period)]


def _intersect(arcs1, arcs2, min_width=0.0):
    out = []
    for (a0, a1), (b0, b1) in itertools.product(arcs1, arcs2):
        lo, hi = max(a0, b0), min(a1, b1)
        if hi - lo > min_width:
            out.append((lo, hi))
    return out


def integrate_density(density, lo, hi, kink_phase, V, tol=QUAD_ABS_TOL) -> float:
    """Adaptive quadrature of ``density`` on [lo, hi], split at the zeros
    x = (V/pi) kink_phase + kV of the |sin| factor."""
    first = math.ceil((lo - V * kink_phase / math.pi) / V)
    cuts = [lo]
    k = first
    while True:
        z = V * kink_phase / math.pi + k * V
        if z >= hi - 1e-12 * V:
            break
        # zeros within rounding distance of an end point are the end point
        if lo + 1e-12 * V < z < hi - 1e-12 * V:
            cuts.append(z)
        k += 1
    cuts.append(hi)
    total = 0.0
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        value, err = integrate.quad(density, x0, x1, epsabs=tol, epsrel=0.0, limit=200)
        if err > tol:
            raise QuadratureError(f"quadrature on [{x0}, {x1}] did not converge", err)
        total += value
    return total


def outcome_region(outcome, theta_a, theta_b, V=1.0):
    """Set of x_A in [0, 2V) producing the given sign pair, as a list of intervals.

    A reads +1 on the arc (V theta_A/pi, V theta_A/pi + V]; B, sitting at
    x_A - V, reads +1 where x_A lies in (V theta_B/pi + V, V theta_B/pi + 2V].
    """
    s_a, s_b = _check_outcome(outcome)
    period = 2.0 * V
    ca = V * reduce_angle(theta_a) / math.pi
    cb = V * reduce_angle(theta_b) / math.pi
    arc_a = _arc_intervals(ca if s_a > 0 else ca - V, V, period)
    arc_b = _arc_intervals(cb + V if s_b > 0 else cb, V, period)
    # slivers left by rounding carry at most (pi/4V) * 1e-12 V of probability
    return _intersect(arc_a, arc_b, min_width=1e-12 * V)


def quadrature_probability(outcome, theta_a, theta_b, sigma=Sigma.SIGMA1, V=1.0) -> float:
    """Integrate sigma_1 or sigma_2 over the region of x_A giving ``outcome``."""
    sigma = Sigma(sigma) if not isinstance(sigma, Sigma) else sigma
    ta, tb = reduce_angle(theta_a), reduce_angle(theta_b)
    if sigma is Sigma.SIGMA1:
        density, kink = (lambda x: sigma1_density(x, ta, V)), ta
    else:
        density, kink = (lambda x: sigma2_density(x, tb, V)), tb
    return sum(
        integrate_density(density, lo, hi, kink, V)
        for lo, hi in outcome_region(outcome, ta, tb, V)
    )


def max_quadrature_deviation(n_grid=20, V=1.0) -> float:
    """Largest |quadrature - closed form| over an n_grid x n_grid angle grid, both sigmas."""
    grid = np.linspace(0.0, 2 * math.pi, n_grid, endpoint=False)
    worst = 0.0
    for ta, tb in itertools.product(grid, grid):
        for outcome in OUTCOMES:
            exact = quantum_probability(outcome, ta, tb)
            for sigma in Sigma:
                worst = max(worst, abs(quadrature_probability(outcome, ta, tb, sigma, V) - exact))
    return worst


def _prepared_and_observed_totals(variant, V=1.0):
    """Integrals of the unnormalized prepared ensemble and of the observed-pair ensemble.

    The lambda integrals are measures of intervals and are taken exactly; the
    x_A integral is done by quadrature.  mu contributes a factor 1 per branch.
    """
    lam = math.pi / (4.0 * V)
    variant = Variant.parse(variant)
    if variant is Variant.ASYMMETRIC_A:
        branches = [(4.0 * V / math.pi, 1.0)]
    else:
        branches = [(2.0 * V / math.pi, 1.0), (2.0 * V / math.pi, 1.0)]
    prepared = observed = 0.0
    for weight, mu_measure in branches:
        prepared += integrate.quad(lambda x: weight * lam * lam * mu_measure, -V, V)[0]
        # lambda of the hiding particle integrates over [0, threshold]; the other over [0, lam]
        observed += integrate_density(
            lambda x: weight * mu_measure * lam * lam * abs(math.sin(math.pi * x / V)), -V, V, 0.0, V
        )
    return prepared, observed


def pair_fraction_analytic(variant=Variant.ASYMMETRIC_A, V=1.0) -> float:
    """Observed pairs per prepared pair (2/pi for both variants)."""
    prepared, observed = _prepared_and_observed_totals(variant, V)
    return observed / prepared


def singles_ratio_analytic(variant=Variant.ASYMMETRIC_A, V=1.0) -> float:
    """Singles per observed pair, (pi - 2)/2."""
    prepared, observed = _prepared_and_observed_totals(variant, V)
    return (prepared - observed) / observed


def sigma1_bin_probabilities(edges, theta_a, V=1.0) -> np.ndarray:
    """Probability mass of sigma_1 in each histogram bin [edges[i], edges[i+1]]."""
    ta = reduce_angle(theta_a)
    return np.array([
        integrate_density(lambda x: sigma1_density(x, ta, V), lo, hi, ta, V)
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
