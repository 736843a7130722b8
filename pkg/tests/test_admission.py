import numpy as np
import pytest

from ridectl.admission import AdmissionDecision, commit, decide, open_window
from ridectl.errors import InvalidInputError, StateError
from ridectl.profile import from_rides, peak, value_at, zero

WINDOW = (0.0, 20.0)


@pytest.fixture
def state():
    # one carried-over ride until 8, one book-ahead ride on [10, 15)
    return open_window(2, from_rides([(-5.0, 8.0)], WINDOW), from_rides([(10.0, 15.0)], WINDOW))


class TestDecide:
    def test_admits_when_capacity_remains(self, state):
        decision = decide(state, 1.0, 3.0)
        assert decision.admitted
        assert decision.reason == "ok"
        assert decision.end == 4.0

    def test_capacity_now(self, state):
        state = commit(state, decide(state, 1.0, 3.0))
        decision = decide(state, 2.0, 1.0)
        assert not decision.admitted
        assert decision.reason == "capacity_now"

    def test_span_over_dip_and_reservation(self, state):
        state = commit(state, decide(state, 1.0, 3.0))
        assert decide(state, 5.0, 10.0).admitted

    def test_bookahead_conflict(self):
        state = open_window(1, zero(WINDOW), from_rides([(10.0, 15.0)], WINDOW))
        assert decide(state, 5.0, 6.0).reason == "bookahead_conflict"
        # ending exactly when the reserved ride starts does not overlap it
        assert decide(state, 5.0, 5.0).admitted

    def test_zero_target_blocks_everything(self):
        state = open_window(0, zero(WINDOW), zero(WINDOW))
        assert decide(state, 3.0, 1.0).reason == "capacity_now"

    def test_window_bounds(self, state):
        assert decide(state, 20.0, 5.0).admitted
        with pytest.raises(InvalidInputError):
            decide(state, 0.0, 5.0)
        with pytest.raises(InvalidInputError):
            decide(state, 20.5, 5.0)
        with pytest.raises(InvalidInputError):
            decide(state, 3.0, 0.0)


class TestCommit:
    def test_updates_load(self, state):
        after = commit(state, decide(state, 1.0, 3.0))
        assert value_at(after.load, 2.0) == 2
        assert value_at(after.load, 4.0) == 1
        assert value_at(state.load, 2.0) == 1

    def test_spillover(self, state):
        after = commit(state, decide(state, 18.0, 7.0))
        assert after.spillover == ((20.0, 25.0),)
        assert value_at(after.load, 20.0) == 1

    def test_rejects_blocked_decision(self, state):
        blocked = AdmissionDecision(False, 2.0, 1.0, "capacity_now")
        with pytest.raises(StateError):
            commit(state, blocked)

    def test_rejects_foreign_window(self, state):
        with pytest.raises(StateError):
            commit(state, AdmissionDecision(True, 25.0, 1.0, "ok"))

    def test_reason_must_match(self):
        with pytest.raises(InvalidInputError):
            AdmissionDecision(True, 1.0, 1.0, "capacity_now")


def test_admitted_load_never_exceeds_target():
    rng = np.random.default_rng(11)
    for _ in range(20):
        bookahead = from_rides([(float(s), float(s + d)) for s, d in rng.uniform(0, 20, (4, 2))], WINDOW)
        carryover = from_rides([(-1.0, float(e)) for e in rng.uniform(0.5, 25, 3)], WINDOW)
        target = max(int(rng.integers(0, 6)), peak(carryover + bookahead))
        state = open_window(target, carryover, bookahead)
        for t in np.sort(rng.uniform(0.01, 20.0, 60)):
            decision = decide(state, float(t), float(rng.exponential(6.0)) + 0.01)
            if decision.admitted:
                state = commit(state, decision)
            assert state.safe


def active_counts(rides, times):
    starts, ends = np.array(rides, dtype=float).reshape(-1, 2).T
    return ((starts[:, None] <= times) & (times < ends[:, None])).sum(axis=0)


def test_matches_grid_enumeration():
    # every time is a multiple of 0.01, so the hundredths grid holds every breakpoint
    rng = np.random.default_rng(29)
    for _ in range(200):
        carried = [(-1.0, int(e) / 100) for e in rng.integers(1, 2001, int(rng.integers(0, 4)))]
        reserved = []
        for _ in range(int(rng.integers(0, 4))):
            start = int(rng.integers(1, 2000))
            reserved.append((start / 100, (start + int(rng.integers(1, 801))) / 100))
        target = int(rng.integers(0, 5))
        state = open_window(target, from_rides(carried, WINDOW), from_rides(reserved, WINDOW))
        rides = carried + reserved

        for start in np.sort(rng.integers(1, 2000, int(rng.integers(1, 21)))):
            request_time = int(start) / 100
            duration = int(rng.integers(1, 801)) / 100
            end = request_time + duration
            grid = np.arange(int(start), 2001) / 100
            grid = grid[grid < end]
            expected = bool((1 + active_counts(rides, grid) <= target).all())
            decision = decide(state, request_time, duration)
            assert decision.admitted == expected, (rides, request_time, duration)
            if decision.admitted:
                state = commit(state, decision)
                rides.append((request_time, end))
