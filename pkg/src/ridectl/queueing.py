"""Transient M_t/GI/∞ analysis and target supply search.

The number of busy servers of an infinite-server queue that starts empty at
the window start is Poisson with mean

    ρ(t) = ∫_{ws}^{t} λ(x) (1 − G(t − x)) dx

For piecewise-constant λ each piece reduces to a difference of the integrated
survival function H(u) = ∫_0^u (1 − G(y)) dy = E[min(D, u)], which is exact
for every supported service law, so no numerical integration is needed for ρ.

The blocking probability of a request arriving at ``t`` under admission
control is bounded by P(N(t) ≥ c − max_{t̂ ∈ (t, we]} [f^P + f^BA](t̂)); the
target is the smallest ``c`` whose time average of that bound is ``<= δ``.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional

import numpy as np
from scipy import special

from ridectl.errors import InvalidInputError
from ridectl.profile import StepProfile, future_max_segments, max_over, peak, sum_profiles, values_at

logger = logging.getLogger(__name__)

# Poisson means above this use the regularized incomplete gamma function.
LOG_SPACE_LIMIT = 50.0
DEFAULT_STEP = 0.1
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


# ─────────────────────────────────────────────────────────────────────────────
# Service time distributions
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ServiceDistribution:
    """Ride duration law G in minutes: empirical, exponential or deterministic."""

    kind: Literal["empirical", "exponential", "deterministic"]
    samples: tuple[float, ...] = ()
    rate: Optional[float] = None
    duration: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == "empirical":
            if not self.samples:
                raise InvalidInputError("empirical service distribution needs at least one duration")
            if any(s <= 0 for s in self.samples):
                raise InvalidInputError("ride durations must be strictly positive")
            if list(self.samples) != sorted(self.samples):
                raise InvalidInputError("empirical durations must be sorted")
        elif self.kind == "exponential":
            if self.rate is None or not self.rate > 0:
                raise InvalidInputError("exponential service needs a positive rate")
        elif self.kind == "deterministic":
            if self.duration is None or not self.duration > 0:
                raise InvalidInputError("deterministic service needs a positive duration")
        else:
            raise InvalidInputError(f"unknown service distribution kind: {self.kind}")

    @classmethod
    def empirical(cls, durations) -> "ServiceDistribution":
        return cls("empirical", samples=tuple(sorted(float(d) for d in durations)))

    @classmethod
    def exponential(cls, rate: float) -> "ServiceDistribution":
        return cls("exponential", rate=float(rate))

    @classmethod
    def deterministic(cls, duration: float) -> "ServiceDistribution":
        return cls("deterministic", duration=float(duration))

    @cached_property
    def _sorted(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)

    @cached_property
    def _prefix(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self._sorted)))

    @property
    def mean(self) -> float:
        if self.kind == "empirical":
            return float(self._sorted.mean())
        if self.kind == "exponential":
            return 1.0 / self.rate
        return float(self.duration)

    def cdf(self, x):
        """Right-continuous CDF G(x)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "empirical":
            return np.searchsorted(self._sorted, x, side="right") / self._sorted.size
        if self.kind == "exponential":
            return np.where(x < 0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))
        return np.where(x >= self.duration, 1.0, 0.0)

    def integrated_survival(self, u):
        """H(u) = ∫_0^u (1 − G(y)) dy = E[min(D, u)]; zero for u <= 0."""
        u = np.maximum(np.asarray(u, dtype=np.float64), 0.0)
        if self.kind == "empirical":
            below = np.searchsorted(self._sorted, u, side="left")
            return (self._prefix[below] + u * (self._sorted.size - below)) / self._sorted.size
        if self.kind == "exponential":
            return -np.expm1(-self.rate * u) / self.rate
        return np.minimum(u, self.duration)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "empirical":
            return rng.choice(self._sorted, size=size)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size=size)
        return np.full(size, float(self.duration))


# ─────────────────────────────────────────────────────────────────────────────
# Demand rates
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DemandRate:
    """Piecewise-constant request rate: ``rates[i]`` holds on ``[times[i], times[i+1])``.

    The rate is zero before ``times[0]``; the last rate extends forever.
    """

    times: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.times or len(self.times) != len(self.rates):
            raise InvalidInputError("demand rate needs matching, non-empty times and rates")
        if any(r < 0 or not math.isfinite(r) for r in self.rates):
            raise InvalidInputError("demand rates must be finite and nonnegative")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InvalidInputError("demand rate times must be strictly increasing")

    @classmethod
    def constant(cls, rate: float) -> "DemandRate":
        return cls((-math.inf,), (float(rate),))

    @classmethod
    def piecewise(cls, pieces) -> "DemandRate":
        ordered = sorted((float(t), float(r)) for t, r in pieces)
        return cls(tuple(t for t, _ in ordered), tuple(r for _, r in ordered))

    @property
    def is_constant(self) -> bool:
        return len(self.rates) == 1 and self.times[0] == -math.inf

    @property
    def max_rate(self) -> float:
        return max(self.rates)

    @property
    def is_zero(self) -> bool:
        return all(r == 0 for r in self.rates)

    def rate_at(self, t: float) -> float:
        index = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.rates[index] if index >= 0 else 0.0


def rho(t, window_start: float, demand: DemandRate, service: ServiceDistribution):
    """Mean number of busy servers at ``t`` for a queue empty at ``window_start``.

    Accepts a scalar or an array of times.
    """
    grid = np.asarray(t, dtype=np.float64)
    if np.any(grid < window_start):
        raise InvalidInputError(f"time precedes the window start {window_start}")
    if demand.is_constant:
        # λ [τ − ∫_0^τ G] = λ H(τ)
        result = demand.rates[0] * service.integrated_survival(grid - window_start)
    else:
        result = np.zeros_like(grid)
        edges = (*demand.times, math.inf)
        for i, rate in enumerate(demand.rates):
            if rate == 0:
                continue
            lo = max(edges[i], window_start)
            hi = np.minimum(edges[i + 1], grid)
            active = hi > lo
            piece = service.integrated_survival(grid - lo) - service.integrated_survival(grid - hi)
            result = result + np.where(active, rate * piece, 0.0)
    return float(result) if result.ndim == 0 else result


# ─────────────────────────────────────────────────────────────────────────────
# Poisson tail
# ─────────────────────────────────────────────────────────────────────────────


def _log_pmf(k: int, mean: float) -> float:
    return -mean + k * math.log(mean) - math.lgamma(k + 1)


def poisson_tail(mean: float, threshold: int) -> float:
    """P(X >= threshold) for X ~ Poisson(mean)."""
    if mean < 0 or not math.isfinite(mean):
        raise InvalidInputError(f"Poisson mean must be finite and nonnegative, got {mean}")
    if threshold <= 0:
        return 1.0
    if mean == 0:
        return 0.0
    if mean > LOG_SPACE_LIMIT:
        return float(special.gammainc(threshold, mean))
    if threshold - 1 < mean:
        lower = math.fsum(math.exp(_log_pmf(k, mean)) for k in range(threshold))
        return max(0.0, 1.0 - lower)
    # upper tail, summed relative to its first term
    head = _log_pmf(threshold, mean)
    total, term, k = 1.0, 1.0, threshold
    while True:
        k += 1
        term *= mean / k
        total += term
        if term < 1e-17 * total:
            break
    return math.exp(head + math.log(total))


def _tail_array(means: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    shape = np.broadcast(means, thresholds).shape
    means = np.broadcast_to(means, shape)
    thresholds = np.broadcast_to(thresholds, shape)
    safe = np.maximum(thresholds, 1)
    return np.where(thresholds <= 0, 1.0, special.gammainc(safe, means))


# ─────────────────────────────────────────────────────────────────────────────
# Blocking bound and target search
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TargetSpec:
    """Everything known at the start of a window for one region."""

    delta: float
    window: tuple[float, float]
    demand: DemandRate
    service: ServiceDistribution
    carryover: StepProfile
    bookahead: StepProfile
    reserved: StepProfile = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 < self.delta < 1:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.window[0] < self.window[1]:
            raise InvalidInputError(f"empty window {self.window}")
        for name, profile in (("carryover", self.carryover), ("bookahead", self.bookahead)):
            if profile.window != tuple(self.window):
                raise InvalidInputError(f"{name} profile window {profile.window} does not match {self.window}")
        object.__setattr__(self, "reserved", sum_profiles([self.carryover, self.bookahead]))

    @property
    def length(self) -> float:
        return self.window[1] - self.window[0]


def bound_at(t: float, c: int, spec: TargetSpec) -> float:
    """Upper bound on the blocking probability of a request arriving at ``t``."""
    window_start, window_end = spec.window
    if not window_start <= t <= window_end:
        raise InvalidInputError(f"time {t} is outside the window {spec.window}")
    if c < 0:
        raise InvalidInputError(f"supply must be nonnegative, got {c}")
    future = max_over(spec.reserved, t, window_end) if t < window_end else 0
    return poisson_tail(rho(t, window_start, spec.demand, spec.service), c - future)


class _BoundGrid:
    """Quadrature nodes for the time-averaged bound; ρ is computed once per spec."""

    def __init__(self, spec: TargetSpec, step: float = DEFAULT_STEP):
        if not step > 0:
            raise InvalidInputError(f"quadrature step must be positive, got {step}")
        window_start, window_end = spec.window
        count = max(1, math.ceil(spec.length / step))
        edges = [window_start + step * np.arange(count), [window_end], spec.reserved.times]
        if spec.service.kind == "deterministic" and window_start + spec.service.duration < window_end:
            edges.append([window_start + spec.service.duration])
        edges = np.unique(np.concatenate(edges))
        edges = edges[(edges >= window_start) & (edges <= window_end)]

        pieces = future_max_segments(spec.reserved)
        piece_starts = np.array([lo for lo, _, _ in pieces])
        piece_future = np.array([m for _, _, m in pieces], dtype=np.int64)

        lo, hi = edges[:-1], edges[1:]
        half = (hi - lo) / 2.0
        self.nodes = ((lo + hi) / 2.0)[:, None] + half[:, None] * _GAUSS_NODES[None, :]
        self.weights = half[:, None] * _GAUSS_WEIGHTS[None, :] / spec.length
        owner = np.searchsorted(piece_starts, lo, side="right") - 1
        self.future = np.repeat(piece_future[owner][:, None], _GAUSS_NODES.size, axis=1)
        self.means = rho(self.nodes, window_start, spec.demand, spec.service)

    def averaged(self, c: int) -> float:
        return float(np.sum(self.weights * _tail_array(self.means, c - self.future)))


def averaged_bound(c: int, spec: TargetSpec, step: float = DEFAULT_STEP) -> float:
    """Time average over the window of :func:`bound_at`."""
    if c < 0:
        raise InvalidInputError(f"supply must be nonnegative, got {c}")
    return min(1.0, _BoundGrid(spec, step).averaged(c))


def compute_target(spec: TargetSpec, step: float = DEFAULT_STEP) -> int:
    """Smallest nonnegative ``c`` with averaged_bound(c) <= δ.

    The averaged bound is nonincreasing in ``c``, so the search doubles until
    it brackets the target and then bisects.
    """
    if spec.demand.is_zero and peak(spec.reserved) == 0:
        # no request can arrive and nothing is reserved
        return 0
    grid = _BoundGrid(spec, step)

    def feasible(c: int) -> bool:
        return min(1.0, grid.averaged(c)) <= spec.delta

    if feasible(0):
        return 0
    low, high = 0, 1
    while not feasible(high):
        low, high = high, high * 2
        if high > 1 << 40:
            raise InvalidInputError("target search did not converge")
    while high - low > 1:
        middle = (low + high) // 2
        if feasible(middle):
            high = middle
        else:
            low = middle
    logger.debug("target %d for window %s (delta=%g)", high, spec.window, spec.delta)
    return high


def predict_active(spec: TargetSpec, times) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of active rides assuming every request is admitted."""
    grid = np.asarray(times, dtype=np.float64)
    means = rho(grid, spec.window[0], spec.demand, spec.service)
    known = values_at(spec.carryover, grid) + values_at(spec.bookahead, grid)
    return known + means, np.sqrt(means)
