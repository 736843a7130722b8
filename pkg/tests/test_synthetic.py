import numpy as np
import pytest
from pydantic import ValidationError

from ridectl.errors import InvalidInputError
from ridectl.ingest import window_of
from ridectl.synthetic import DEFAULT_EPOCH, DurationLaw, Workload, generate_trips


@pytest.fixture
def workload() -> Workload:
    return Workload(regions=2, windows=3, window_minutes=20.0, rates=[[2.0], [0.5, 1.0, 1.5]])


def test_same_seed_same_trips(workload):
    assert generate_trips(workload, 3) == generate_trips(workload, 3)
    assert generate_trips(workload, 3) != generate_trips(workload, 4)


def test_counts_follow_rates(workload):
    counts = np.zeros(2)
    for seed in range(20):
        for t in generate_trips(workload, seed):
            counts[t.origin_region - 1] += 1
    # expected 2 * 60 and 0.5 * 20 + 1 * 20 + 1.5 * 20 per seed
    assert counts[0] / 20 == pytest.approx(120, rel=0.1)
    assert counts[1] / 20 == pytest.approx(60, rel=0.15)


def test_trips_lie_in_the_horizon(workload):
    trips = generate_trips(workload, 8)
    minutes = [t.start_minute(DEFAULT_EPOCH) for t in trips]
    assert minutes == sorted(minutes)
    assert all(0 <= window_of(m, 20.0) < 3 for m in minutes)
    assert all(t.duration >= 1 / 60 for t in trips)
    assert all(t.request_time.microsecond == 0 for t in trips)


def test_destinations(workload):
    assert all(t.destination_region == t.origin_region for t in generate_trips(workload, 1))
    mixed = workload.model_copy(update={"od": [[0.0, 1.0], [1.0, 0.0]]})
    assert all(t.destination_region != t.origin_region for t in generate_trips(mixed, 1))


def test_duration_laws():
    rng = np.random.default_rng(0)
    assert DurationLaw(kind="deterministic", mean=7.0).sample(rng, 3).tolist() == [7.0, 7.0, 7.0]
    assert DurationLaw(mean=12.0, sigma=0.5).sample(rng, 20000).mean() == pytest.approx(12.0, rel=0.03)
    assert DurationLaw(kind="exponential", mean=4.0).sample(rng, 20000).mean() == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"regions": 2, "windows": 3, "rates": [[1.0]]},
        {"regions": 1, "windows": 3, "rates": [[1.0, 2.0]]},
        {"regions": 1, "windows": 1, "rates": [[-1.0]]},
        {"regions": 2, "windows": 1, "rates": [[1.0], [1.0]], "od": [[0.5, 0.4], [0.0, 1.0]]},
    ],
)
def test_invalid_workloads(kwargs):
    with pytest.raises(ValidationError):
        Workload(**kwargs)


def test_negative_seed(workload):
    with pytest.raises(InvalidInputError):
        generate_trips(workload, -1)
