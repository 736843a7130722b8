"""Piecewise-constant ride-count profiles over a time window.

A profile counts rides that are active at time ``t`` inside a window
``(window_start, window_end]``. A ride is active on ``[start, end)``. The
profile is stored as an initial value (valid just after ``window_start``) plus
breakpoints ``(time, count)`` inside ``(window_start, window_end]``; the value
at ``t`` is the count of the last breakpoint ``<= t``.

Profiles are immutable; every operation returns a new profile.
"""

from bisect import bisect_left, bisect_right
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ridectl.errors import InvalidInputError

Window = tuple[float, float]
Ride = tuple[float, float]


@dataclass(frozen=True, slots=True)
class StepProfile:
    """Right-continuous integer step function on ``(window_start, window_end]``."""

    window_start: float
    window_end: float
    initial: int = 0
    times: tuple[float, ...] = ()
    counts: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.window_start < self.window_end:
            raise InvalidInputError(f"empty window ({self.window_start}, {self.window_end}]")
        if len(self.times) != len(self.counts):
            raise InvalidInputError("profile times and counts differ in length")
        if self.initial < 0 or any(c < 0 for c in self.counts):
            raise InvalidInputError("profile counts must be nonnegative")
        previous = self.window_start
        for t in self.times:
            if not previous < t <= self.window_end:
                raise InvalidInputError(f"breakpoint {t} is out of order or outside the window")
            previous = t

    @property
    def window(self) -> Window:
        return (self.window_start, self.window_end)

    @property
    def breakpoints(self) -> list[tuple[float, int]]:
        return list(zip(self.times, self.counts))

    def __add__(self, other: "StepProfile") -> "StepProfile":
        return sum_profiles([self, other])


def zero(window: Window) -> StepProfile:
    """The identically-zero profile."""
    return StepProfile(float(window[0]), float(window[1]))


def _build(window: Window, initial: int, deltas: dict[float, int]) -> StepProfile:
    times: list[float] = []
    counts: list[int] = []
    running = initial
    for t in sorted(deltas):
        # simultaneous starts and ends net out before evaluation
        change = deltas[t]
        if change == 0:
            continue
        running += change
        times.append(float(t))
        counts.append(running)
    return StepProfile(float(window[0]), float(window[1]), initial, tuple(times), tuple(counts))


def _check_ride(start: float, end: float) -> None:
    if not end > start:
        raise InvalidInputError(f"ride ends at {end} but starts at {start}")


def from_rides(rides: Iterable[Ride], window: Window) -> StepProfile:
    """Count rides active on ``[start, end)`` at every ``t`` in the window.

    Rides may start before the window (carryover) or end after it; rides
    entirely outside the window contribute nothing.
    """
    window_start, window_end = float(window[0]), float(window[1])
    initial = 0
    deltas: dict[float, int] = defaultdict(int)
    for start, end in rides:
        _check_ride(start, end)
        if end <= window_start or start > window_end:
            continue
        if start <= window_start:
            initial += 1
        else:
            deltas[start] += 1
        if end <= window_end:
            deltas[end] -= 1
    return _build((window_start, window_end), initial, deltas)


def add_ride(profile: StepProfile, start: float, end: float) -> StepProfile:
    """Return ``profile`` plus one ride on ``[start, end)`` clipped to the window."""
    _check_ride(start, end)
    return sum_profiles([profile, from_rides([(start, end)], profile.window)])


def sum_profiles(profiles: Sequence[StepProfile]) -> StepProfile:
    """Pointwise sum of profiles sharing one window."""
    if not profiles:
        raise InvalidInputError("cannot sum an empty list of profiles")
    window = profiles[0].window
    initial = 0
    deltas: dict[float, int] = defaultdict(int)
    for profile in profiles:
        if profile.window != window:
            raise InvalidInputError(f"profile window {profile.window} does not match {window}")
        initial += profile.initial
        previous = profile.initial
        for t, count in zip(profile.times, profile.counts):
            deltas[t] += count - previous
            previous = count
    return _build(window, initial, deltas)


def value_at(profile: StepProfile, t: float) -> int:
    """Value at ``t``; times at or before the window start read the initial value."""
    index = bisect_right(profile.times, t) - 1
    return profile.counts[index] if index >= 0 else profile.initial


def values_at(profile: StepProfile, times: np.ndarray) -> np.ndarray:
    """Vectorized :func:`value_at`."""
    grid = np.asarray(times, dtype=np.float64)
    lookup = np.concatenate(([profile.initial], np.asarray(profile.counts, dtype=np.int64)))
    index = np.searchsorted(np.asarray(profile.times, dtype=np.float64), grid, side="right")
    return lookup[index]


def peak(profile: StepProfile) -> int:
    """Maximum over the whole window."""
    return max((profile.initial, *profile.counts))


def max_over(profile: StepProfile, start: float, end: float) -> int:
    """Exact maximum of the profile on ``(start, end]``."""
    if not start < end:
        raise InvalidInputError(f"empty interval ({start}, {end}]")
    if start < profile.window_start or end > profile.window_end:
        raise InvalidInputError(f"interval ({start}, {end}] leaves the window {profile.window}")
    lo = bisect_right(profile.times, start)
    hi = bisect_right(profile.times, end)
    return max((value_at(profile, start), *profile.counts[lo:hi]))


def max_during(profile: StepProfile, start: float, end: float) -> int:
    """Maximum over the in-window span of a ride active on ``[start, end)``.

    A ride running past the window end is still active at the window end, so
    the end point is included in that case.
    """
    _check_ride(start, end)
    lo_time = max(start, profile.window_start)
    if end > profile.window_end:
        hi = bisect_right(profile.times, profile.window_end)
    else:
        hi = bisect_left(profile.times, end)
    lo = bisect_right(profile.times, lo_time)
    return max((value_at(profile, lo_time), *profile.counts[lo:hi]))


def segments(profile: StepProfile) -> list[tuple[float, float, int]]:
    """Constant pieces ``(lo, hi, value)``; the value holds on ``[lo, hi)``."""
    edges = (profile.window_start, *profile.times, profile.window_end)
    values = (profile.initial, *profile.counts)
    return [(edges[i], edges[i + 1], values[i]) for i in range(len(values))]


def future_max_segments(profile: StepProfile) -> list[tuple[float, float, int]]:
    """For ``t`` in each piece ``[lo, hi)``, the maximum of the profile on ``(t, window_end]``."""
    pieces = segments(profile)
    result: list[tuple[float, float, int]] = []
    running = 0
    for lo, hi, value in reversed(pieces):
        running = max(running, value)
        result.append((lo, hi, running))
    result.reverse()
    return result
