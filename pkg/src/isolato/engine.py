"""Batch experiments: counting, correlations, CHSH, delayed choice and angle scans.

Trials run in fixed chunks of 2**16 emissions; chunk ``i`` draws from
substream ``i`` of the seed, so counts do not depend on how chunks are
distributed over workers.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import InvalidArgumentError, ModelParams, Settings, reduce_angle
from .sampler import (
    MM,
    MP,
    PM,
    PP,
    SINGLE_A_CODE,
    SINGLE_B_CODE,
    RngStream,
    classify_batch,
    is_isolato_a,
    sample_pairs,
)

CHUNK_SIZE = 2**16


class NoDataError(ZeroDivisionError):
    """A statistic was requested with an empty denominator."""


class Normalization(enum.Enum):
    COINCIDENCE_ONLY = "coinc"
    ALL_EMISSIONS = "all"

    @classmethod
    def parse(cls, value) -> "Normalization":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name, member.name.lower()):
                return member
        raise InvalidArgumentError(f"unknown normalization {value!r}; expected 'coinc' or 'all'")


@dataclass
class CountsTable:
    n_pp: int = 0
    n_pm: int = 0
    n_mp: int = 0
    n_mm: int = 0
    n_single_a: int = 0
    n_single_b: int = 0
    n_emitted: int = 0

    @property
    def n_coincidences(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    @property
    def n_singles(self) -> int:
        return self.n_single_a + self.n_single_b

    def cells(self) -> dict[str, int]:
        return {"pp": self.n_pp, "pm": self.n_pm, "mp": self.n_mp, "mm": self.n_mm}

    def __add__(self, other: "CountsTable") -> "CountsTable":
        return CountsTable(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self) -> tuple[int, ...]:
        return (self.n_pp, self.n_pm, self.n_mp, self.n_mm,
                self.n_single_a, self.n_single_b, self.n_emitted)

    def as_dict(self) -> dict[str, int]:
        return {
            "n_pp": self.n_pp, "n_pm": self.n_pm, "n_mp": self.n_mp, "n_mm": self.n_mm,
            "n_single_A": self.n_single_a, "n_single_B": self.n_single_b,
            "n_emitted": self.n_emitted,
        }

    @classmethod
    def from_codes(cls, codes: np.ndarray) -> "CountsTable":
        tally = np.bincount(codes, minlength=6)
        return cls(
            int(tally[PP]), int(tally[PM]), int(tally[MP]), int(tally[MM]),
            int(tally[SINGLE_A_CODE]), int(tally[SINGLE_B_CODE]), int(codes.size),
        )


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _run_chunks(params: ModelParams, n: int, chunk_fn, workers: int | None) -> CountsTable:
    if n < 1:
        raise InvalidArgumentError(f"number of trials must be >= 1, got {n}")
    sizes = _chunk_sizes(int(n))

    def one(i):
        batch = sample_pairs(RngStream(params.seed, i), params, sizes[i])
        return CountsTable.from_codes(chunk_fn(batch))

    if workers is None or workers <= 1 or len(sizes) == 1:
        parts = [one(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    total = CountsTable()
    for part in parts:
        total = total + part
    return total


def run_experiment(params: ModelParams, settings: Settings, n: int,
                   workers: int | None = None) -> CountsTable:
    """Emit ``n`` pairs at fixed settings and tally the outcomes."""
    return _run_chunks(params, n, lambda b: classify_batch(b, settings, params), workers)


def correlation(counts: CountsTable, normalization) -> float:
    """E = (n_pp + n_mm - n_pm - n_mp) / D with D coincidences or all emissions."""
    norm = Normalization.parse(normalization)
    d = counts.n_coincidences if norm is Normalization.COINCIDENCE_ONLY else counts.n_emitted
    if d == 0:
        raise NoDataError(f"no data for correlation ({norm.value} denominator is zero)")
    return (counts.n_pp + counts.n_mm - counts.n_pm - counts.n_mp) / d


@dataclass(frozen=True)
class ChshSpec:
    a: float = 0.0
    a_prime: float = math.pi / 2
    b: float = math.pi / 4
    b_prime: float = 3 * math.pi / 4
    normalization: Normalization = Normalization.COINCIDENCE_ONLY
    n_trials_per_setting: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "normalization", Normalization.parse(self.normalization))
        if self.n_trials_per_setting < 1:
            raise InvalidArgumentError("n_trials_per_setting must be >= 1")

    def setting_pairs(self) -> dict[str, Settings]:
        return {
            "ab": Settings(self.a, self.b),
            "ab'": Settings(self.a, self.b_prime),
            "a'b": Settings(self.a_prime, self.b),
            "a'b'": Settings(self.a_prime, self.b_prime),
        }


# sign of each term in S = E(a,b) - E(a,b') + E(a',b) + E(a',b')
CHSH_SIGNS = {"ab": 1, "ab'": -1, "a'b": 1, "a'b'": 1}


@dataclass
class ChshResult:
    S: float
    S_stderr: float
    correlations: dict[str, float]
    stderrs: dict[str, float]
    counts: dict[str, CountsTable]
    normalization: Normalization

    @property
    def violates_bound(self) -> bool:
        return abs(self.S) > 2.0


def run_chsh(params: ModelParams, spec: ChshSpec, workers: int | None = None) -> ChshResult:
    from .stats import correlation_stderr

    counts, es, ses = {}, {}, {}
    for key, settings in spec.setting_pairs().items():
        counts[key] = run_experiment(params, settings, spec.n_trials_per_setting, workers)
        es[key] = correlation(counts[key], spec.normalization)
        ses[key] = correlation_stderr(counts[key], spec.normalization)
    S = sum(CHSH_SIGNS[k] * es[k] for k in es)
    S_se = math.sqrt(sum(se * se for se in ses.values()))
    return ChshResult(S, S_se, es, ses, counts, spec.normalization)


@dataclass(frozen=True)
class DelayedChoiceSpec:
    """Timeline for a setting switched while A is in flight.

    ``knots`` is a piecewise-linear profile ``[(t, phi), ...]`` of the angle
    governing A's isolato rule.  When empty, phi rises linearly from
    ``theta_initial`` at t0 to ``theta_final`` (lifted by multiples of 2pi so
    the profile is nondecreasing) at t2.  A is measured after t2, when phi has
    frozen at ``theta_final``.
    """

    t0: float = 0.0
    t1: float = 1.0
    t2: float = 1.0
    theta_initial: float = 0.0
    theta_final: float = 0.0
    knots: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise InvalidArgumentError(f"timeline requires t0 < t1 (got t0={self.t0}, t1={self.t1})")
        if not self.t1 <= self.t2:
            raise InvalidArgumentError(f"timeline requires t1 <= t2 (got t1={self.t1}, t2={self.t2})")
        knots = tuple((float(t), float(p)) for t, p in self.knots) or self._default_knots()
        ts = np.array([k[0] for k in knots])
        ps = np.array([k[1] for k in knots])
        if np.any(np.diff(ts) <= 0):
            raise InvalidArgumentError("phi knots must have strictly increasing times")
        if np.any(np.diff(ps) < 0):
            raise InvalidArgumentError("phi profile must be nondecreasing")
        if ts[-1] > self.t2:
            raise InvalidArgumentError("phi must stop evolving by t2 (last knot after t2)")
        gap = (ps[-1] - float(self.theta_final)) % (2 * math.pi)
        if min(gap, 2 * math.pi - gap) > 1e-9:
            raise InvalidArgumentError("phi must equal theta_final (mod 2pi) from t2 on")
        object.__setattr__(self, "knots", knots)

    def _default_knots(self):
        start = float(self.theta_initial)
        end = float(self.theta_final)
        end += 2 * math.pi * max(0, math.ceil((start - end) / (2 * math.pi)))
        return ((self.t0, start), (self.t2, end))

    def phi(self, t):
        """Angle in A's isolato rule at time ``t``; constant outside the knot range."""
        ts, ps = zip(*self.knots)
        return np.interp(t, ts, ps)

    @property
    def measurement_time(self) -> float:
        return self.t2


def run_delayed_choice(params: ModelParams, spec: DelayedChoiceSpec, theta_b: float, n: int,
                       workers: int | None = None) -> CountsTable:
    """Counts when A's hidden rule follows phi(t) and detection happens after t2."""
    phi_meas = reduce_angle(float(spec.phi(spec.measurement_time)))
    settings = Settings(spec.theta_final, theta_b)
    return _run_chunks(
        params, n, lambda b: classify_batch(b, settings, params, theta_a_hidden=phi_meas), workers
    )


def isolato_fraction_trace(params: ModelParams, spec: DelayedChoiceSpec, times, n: int) -> list[float]:
    """Fraction of A particles that would be in isolato mode at each time along the timeline."""
    batch = sample_pairs(RngStream(params.seed, 0), params, n)
    return [float(np.mean(is_isolato_a(batch, float(spec.phi(t)), params))) for t in times]


@dataclass(frozen=True)
class ScanRow:
    delta: float
    E_coinc: float
    E_coinc_stderr: float
    E_all: float
    E_all_stderr: float
    pair_fraction: float
    pair_fraction_stderr: float
    n: int


def run_scan(params: ModelParams, deltas, n: int, workers: int | None = None) -> list[ScanRow]:
    """One row per angle difference with theta_A = delta, theta_B = 0."""
    from .stats import binomial_estimate, correlation_stderr

    deltas = list(deltas)
    if not deltas:
        raise InvalidArgumentError("scan grid must be nonempty")
    rows = []
    for delta in deltas:
        counts = run_experiment(params, Settings(delta, 0.0), n, workers)
        pf = binomial_estimate(counts.n_coincidences, counts.n_emitted)
        rows.append(ScanRow(
            float(delta),
            correlation(counts, Normalization.COINCIDENCE_ONLY),
            correlation_stderr(counts, Normalization.COINCIDENCE_ONLY),
            correlation(counts, Normalization.ALL_EMISSIONS),
            correlation_stderr(counts, Normalization.ALL_EMISSIONS),
            pf.p_hat, pf.stderr, counts.n_emitted,
        ))
    return rows


def coincidence_positions(params: ModelParams, settings: Settings, n: int) -> np.ndarray:
    """x_A of every emitted pair that ended as a coincidence (same chunking as run_experiment)."""
    out = []
    for i, size in enumerate(_chunk_sizes(int(n))):
        batch = sample_pairs(RngStream(params.seed, i), params, size)
        codes = classify_batch(batch, settings, params)
        out.append(batch.x_a[codes <= MM])
    return np.concatenate(out)
