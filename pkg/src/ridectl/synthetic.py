"""Synthetic trip workloads for tests, Monte-Carlo runs and ``ridectl synth``."""

import logging
from datetime import datetime, timedelta
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ridectl.errors import InvalidInputError
from ridectl.ingest import TripRecord

logger = logging.getLogger(__name__)

DEFAULT_EPOCH = datetime(2016, 4, 4, 8, 0, 0)


class DurationLaw(BaseModel):
    """Ride duration law in minutes."""

    kind: Literal["lognormal", "exponential", "deterministic"] = "lognormal"
    mean: float = Field(default=12.0, gt=0)
    sigma: float = Field(default=0.5, ge=0, description="Log-scale spread (lognormal only)")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, self.mean)
        if self.kind == "exponential":
            return rng.exponential(self.mean, size=size)
        # parametrized by the mean of the lognormal itself
        mu = np.log(self.mean) - self.sigma**2 / 2.0
        return rng.lognormal(mu, self.sigma, size=size)


class Workload(BaseModel):
    """Piecewise-constant Poisson request streams per region.

    ``rates`` holds one row per region; a row with a single value is constant
    over the horizon, otherwise it has one value per window. ``od`` is a
    row-stochastic origin-destination matrix; without it every ride ends in
    its origin region.
    """

    regions: int = Field(ge=1)
    windows: int = Field(ge=1)
    window_minutes: float = Field(default=20.0, gt=0)
    rates: list[list[float]]
    od: Optional[list[list[float]]] = None
    durations: DurationLaw = Field(default_factory=DurationLaw)
    epoch: datetime = DEFAULT_EPOCH

    @model_validator(mode="after")
    def _check_shapes(self) -> "Workload":
        if len(self.rates) != self.regions:
            raise ValueError(f"expected {self.regions} rate rows, got {len(self.rates)}")
        for row in self.rates:
            if len(row) not in (1, self.windows) or any(r < 0 for r in row):
                raise ValueError("each rate row needs 1 or `windows` nonnegative values")
        if self.od is not None:
            matrix = np.asarray(self.od, dtype=np.float64)
            if matrix.shape != (self.regions, self.regions) or (matrix < 0).any():
                raise ValueError("od must be a nonnegative regions x regions matrix")
            if not np.allclose(matrix.sum(axis=1), 1.0):
                raise ValueError("od rows must sum to 1")
        return self

    @property
    def horizon(self) -> tuple[datetime, datetime]:
        return (self.epoch, self.epoch + timedelta(minutes=self.windows * self.window_minutes))

    def rate(self, region: int, window: int) -> float:
        row = self.rates[region - 1]
        return row[0] if len(row) == 1 else row[window]


def generate_trips(workload: Workload, seed: int) -> list[TripRecord]:
    """Draw one realization of the workload.

    Each (region, window) cell gets a Poisson number of requests spread
    uniformly over the window. Timestamps are whole seconds and every ride
    lasts at least one second.
    """
    if seed < 0:
        raise InvalidInputError(f"seed must be nonnegative, got {seed}")
    rng = np.random.default_rng(seed)
    w = workload.window_minutes
    od = None if workload.od is None else np.asarray(workload.od, dtype=np.float64)

    starts: list[np.ndarray] = []
    origins: list[np.ndarray] = []
    for region in range(1, workload.regions + 1):
        for k in range(workload.windows):
            n = rng.poisson(workload.rate(region, k) * w)
            # (k w, (k + 1) w]
            starts.append((k + 1) * w - rng.random(n) * w)
            origins.append(np.full(n, region))
    start = np.concatenate(starts) if starts else np.empty(0)
    origin = np.concatenate(origins).astype(int) if origins else np.empty(0, dtype=int)
    duration = workload.durations.sample(rng, start.size)
    if od is None:
        destination = origin.copy()
    else:
        destination = np.array([rng.choice(workload.regions, p=od[o - 1]) + 1 for o in origin], dtype=int)

    start_s = np.maximum(np.round(start * 60.0), 1).astype(np.int64)
    end_s = np.maximum(np.round((start + duration) * 60.0).astype(np.int64), start_s + 1)
    order = np.lexsort((origin, start_s))
    trips = [
        TripRecord(
            workload.epoch + timedelta(seconds=int(start_s[i])),
            workload.epoch + timedelta(seconds=int(end_s[i])),
            int(origin[i]),
            int(destination[i]),
        )
        for i in order
    ]
    logger.debug("generated %d trips over %d windows (seed %d)", len(trips), workload.windows, seed)
    return trips
