"""Admission control for non-reserved requests.

A request at ``τ`` with duration ``D`` is admitted only when one more active
ride fits under the region target over the whole in-window span of the ride:

    1 + f^P(t) + f^BA(t) + f^A(t) <= c   for all t in [τ, min(τ + D, we))

Evaluation goes through the profile breakpoints, so the check is exact.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

from ridectl.errors import InvalidInputError, StateError
from ridectl.profile import StepProfile, Window, add_ride, max_during, peak, sum_profiles, value_at, zero

logger = logging.getLogger(__name__)

Reason = Literal["ok", "capacity_now", "bookahead_conflict"]


@dataclass(frozen=True)
class RegionWindowState:
    """Admission state of one region during one window."""

    target: int
    carryover: StepProfile
    bookahead: StepProfile
    admitted: StepProfile
    spillover: tuple[tuple[float, float], ...] = ()
    load: StepProfile = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.target < 0:
            raise InvalidInputError(f"target must be nonnegative, got {self.target}")
        object.__setattr__(self, "load", sum_profiles([self.carryover, self.bookahead, self.admitted]))

    @property
    def window(self) -> Window:
        return self.carryover.window

    @property
    def safe(self) -> bool:
        """True while the committed load never exceeds the target."""
        return peak(self.load) <= self.target


def open_window(target: int, carryover: StepProfile, bookahead: StepProfile) -> RegionWindowState:
    """Fresh state with nothing admitted yet."""
    return RegionWindowState(target, carryover, bookahead, zero(carryover.window))


@dataclass(frozen=True)
class AdmissionDecision:
    admitted: bool
    request_time: float
    duration: float
    reason: Reason

    def __post_init__(self) -> None:
        if self.admitted != (self.reason == "ok"):
            raise InvalidInputError(f"reason {self.reason!r} does not match admitted={self.admitted}")

    @property
    def end(self) -> float:
        return self.request_time + self.duration


def decide(state: RegionWindowState, request_time: float, duration: float) -> AdmissionDecision:
    """Decide one request against a snapshot of the region state."""
    window_start, window_end = state.window
    if not window_start < request_time <= window_end:
        raise InvalidInputError(f"request at {request_time} is outside the window {state.window}")
    if not duration > 0:
        raise InvalidInputError(f"ride duration must be positive, got {duration}")

    if 1 + value_at(state.load, request_time) > state.target:
        return AdmissionDecision(False, request_time, duration, "capacity_now")
    if 1 + max_during(state.load, request_time, request_time + duration) > state.target:
        return AdmissionDecision(False, request_time, duration, "bookahead_conflict")
    return AdmissionDecision(True, request_time, duration, "ok")


def commit(state: RegionWindowState, decision: AdmissionDecision) -> RegionWindowState:
    """Record an admitted ride; the part past the window end goes to ``spillover``."""
    if not decision.admitted:
        raise StateError(f"cannot commit a blocked request ({decision.reason})")
    window_start, window_end = state.window
    if not window_start < decision.request_time <= window_end:
        raise StateError(f"decision at {decision.request_time} does not belong to window {state.window}")

    admitted = add_ride(state.admitted, decision.request_time, decision.end)
    spillover = state.spillover
    if decision.end > window_end:
        spillover = (*spillover, (window_end, decision.end))
    return replace(state, admitted=admitted, spillover=spillover)
