"""Discrete-event simulation of regions, windows, admission and rebalancing.

Per window, every region gets a target from the transient queue bound, idle
drivers are rebalanced at the window start (external adjustments allowed) and
at the configured mid-window instants (internal moves only), and the observed
requests go through admission control. Drivers serving a ride count as active
in the ride's origin region and become idle in its destination region.

Events at the same instant run in this order: completions, rebalances,
book-ahead starts, arrivals, window boundary. A request stamped exactly at a
window boundary belongs to the window that is closing, so the boundary comes
last.
"""

import heapq
import logging
from collections import defaultdict
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum
from pathlib import Path
from typing import Optional, Union

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from ruamel.yaml import YAML, YAMLError

from ridectl.admission import RegionWindowState, commit, decide, open_window
from ridectl.errors import InvalidInputError, StateError
from ridectl.ingest import CalibratedModel, TripRecord, calibrate_model, sample_bookahead, window_of
from ridectl.profile import from_rides, peak
from ridectl.queueing import DemandRate, TargetSpec, compute_target
from ridectl.rebalance import RegionSnapshot, apply_plan, rebalance
from ridectl.synthetic import Workload, generate_trips

logger = logging.getLogger(__name__)


class SimConfig(BaseModel):
    """One simulation scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window_minutes: float = Field(default=20.0, gt=0)
    delta: float = Field(default=0.01, gt=0, lt=1)
    p_ba: float = Field(default=0.0, ge=0, le=1)
    seed: int = Field(default=0, ge=0)
    regions: int = Field(default=1, ge=1)
    adjacency: list[tuple[int, int]] = Field(default_factory=list)
    rebalance_points: list[float] = Field(default_factory=lambda: [0.0, 0.5])
    compliance: bool = True
    replications: int = Field(default=1, ge=1)
    quadrature_step: float = Field(default=0.1, gt=0)
    min_window_trips: int = Field(default=5, ge=1)
    target_override: Optional[int] = Field(default=None, ge=0, description="Hold every target at this value")

    @field_validator("rebalance_points")
    @classmethod
    def _check_points(cls, points: list[float]) -> list[float]:
        if any(not 0.0 <= p < 1.0 for p in points):
            raise ValueError("rebalance points must lie in [0, 1)")
        return sorted(set(points))

    @model_validator(mode="after")
    def _check_adjacency(self) -> "SimConfig":
        pairs = set(self.adjacency)
        for i, j in pairs:
            if not (1 <= i <= self.regions and 1 <= j <= self.regions) or i == j:
                raise ValueError(f"adjacency ({i}, {j}) is not a pair of distinct regions in 1..{self.regions}")
            if (j, i) not in pairs:
                raise ValueError(f"adjacency is not symmetric: ({i}, {j}) has no ({j}, {i})")
        return self


_yaml = YAML(typ="safe")


def load_sim_config(path: Path, defaults: Optional[dict] = None, **overrides) -> SimConfig:
    """Read a YAML run configuration.

    The file wins over ``defaults``; non-None ``overrides`` win over the file.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    try:
        data = _yaml.load(path.read_text(encoding="utf-8")) or {}
    except YAMLError as e:
        raise InvalidInputError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: expected a mapping at the top level")
    data = {**(defaults or {}), **data, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return SimConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(f"{path}: {e}") from e


def with_updates(config: SimConfig, **updates) -> SimConfig:
    """Validated copy of ``config`` with some fields replaced."""
    try:
        return SimConfig.model_validate({**config.model_dump(), **updates})
    except ValidationError as e:
        raise InvalidInputError(str(e)) from e


def replication_seeds(seed: int, replication: int) -> tuple[int, int]:
    """(workload seed, book-ahead seed) for a replication; independent of p_BA."""
    state = np.random.SeedSequence([seed, replication]).generate_state(2)
    return int(state[0]), int(state[1])


# ─────────────────────────────────────────────────────────────────────────────
# Metrics
# ─────────────────────────────────────────────────────────────────────────────


@dataclass
class WindowMetrics:
    region: int
    window: int
    target: int = 0
    admitted: int = 0
    blocked: int = 0
    capacity_now: int = 0
    bookahead_conflict: int = 0
    blocked_no_driver: int = 0
    bookahead_served: int = 0
    bookahead_failures: int = 0
    spillover: int = 0
    idle_avg: float = 0.0
    active_avg: float = 0.0
    fleet_start: int = 0
    fleet_end: int = 0
    moves_in: int = 0
    moves_out: int = 0
    added: int = 0
    removed: int = 0

    @property
    def requests(self) -> int:
        return self.admitted + self.blocked

    @property
    def blocked_fraction(self) -> float:
        return self.blocked / self.requests if self.requests else 0.0

    @property
    def utilization(self) -> float:
        busy = self.active_avg + self.idle_avg
        return 100.0 * self.active_avg / busy if busy > 0 else 0.0


@dataclass
class SimMetrics:
    windows: list[WindowMetrics] = field(default_factory=list)
    total_internal: int = 0
    total_external: int = 0

    @property
    def internal_ratio(self) -> float:
        moved = self.total_internal + self.total_external
        return self.total_internal / moved if moved else 0.0

    @property
    def admitted(self) -> int:
        return sum(w.admitted for w in self.windows)

    @property
    def blocked(self) -> int:
        return sum(w.blocked for w in self.windows)

    @property
    def bookahead_failures(self) -> int:
        return sum(w.bookahead_failures for w in self.windows)

    def frame(self) -> pd.DataFrame:
        """One row per (region, window)."""
        rows = []
        for w in self.windows:
            row = asdict(w)
            row["blocked_fraction"] = w.blocked_fraction
            row["utilization"] = w.utilization
            rows.append(row)
        columns = [f.name for f in fields(WindowMetrics)] + ["blocked_fraction", "utilization"]
        return pd.DataFrame(rows, columns=columns)

    def summary(self) -> dict:
        """Run-level averages over region-windows."""
        count = len(self.windows)

        def mean(values) -> float:
            return float(sum(values) / count) if count else 0.0

        requests = self.admitted + self.blocked
        with_requests = [w.blocked_fraction for w in self.windows if w.requests]
        return {
            "mean_target": mean(w.target for w in self.windows),
            "mean_idle": mean(w.idle_avg for w in self.windows),
            "mean_active": mean(w.active_avg for w in self.windows),
            "mean_utilization": mean(w.utilization for w in self.windows),
            "admitted": self.admitted,
            "blocked": self.blocked,
            "blocked_fraction": self.blocked / requests if requests else 0.0,
            "mean_window_blocked_fraction": float(np.mean(with_requests)) if with_requests else 0.0,
            "blocked_no_driver": sum(w.blocked_no_driver for w in self.windows),
            "bookahead_failures": self.bookahead_failures,
            "total_internal": self.total_internal,
            "total_external": self.total_external,
            "internal_ratio": self.internal_ratio,
        }


# ─────────────────────────────────────────────────────────────────────────────
# Event loop
# ─────────────────────────────────────────────────────────────────────────────


class EventKind(IntEnum):
    """Kinds double as same-instant priorities."""

    COMPLETION = 0
    REBALANCE = 1
    BOOKAHEAD = 2
    ARRIVAL = 3
    WINDOW = 4


@dataclass
class SimState:
    active: dict[int, int]
    idle: dict[int, int]
    admission: dict[int, RegionWindowState] = field(default_factory=dict)
    in_progress: dict[int, dict[int, tuple[float, float]]] = field(default_factory=lambda: defaultdict(dict))
    calendar: list[tuple[float, EventKind, int, int]] = field(default_factory=list)

    def fleet(self, region: int) -> int:
        return self.active[region] + self.idle[region]


class Simulation:
    def __init__(self, config: SimConfig, model: CalibratedModel, trips: Sequence[TripRecord]):
        if model.regions != config.regions:
            raise InvalidInputError(f"model has {model.regions} regions, config has {config.regions}")
        if abs(model.window_minutes - config.window_minutes) > 1e-9:
            raise InvalidInputError(f"model windows are {model.window_minutes:g} min, config says {config.window_minutes:g}")
        self.config = config
        self.model = model
        self.regions = list(range(1, config.regions + 1))
        self.horizon_end = model.windows_per_region * model.window_minutes

        self.start = np.array([t.start_minute(model.epoch) for t in trips], dtype=np.float64)
        self.end = np.array([t.end_minute(model.epoch) for t in trips], dtype=np.float64)
        self.origin = [t.origin_region for t in trips]
        self.destination = [t.destination_region for t in trips]
        self.book_ahead = [t.book_ahead for t in trips]
        self._bookahead_spans: dict[tuple[int, int], list[tuple[float, float]]] = defaultdict(list)
        for i, trip in enumerate(trips):
            k = window_of(self.start[i], model.window_minutes)
            if not 0 <= k < model.windows_per_region:
                raise InvalidInputError(f"trip at {trip.request_time} lies outside the calibrated horizon")
            if not (1 <= trip.origin_region <= config.regions and 1 <= trip.destination_region <= config.regions):
                raise InvalidInputError(f"trip at {trip.request_time} names a region outside 1..{config.regions}")
            if trip.book_ahead:
                self._bookahead_spans[trip.origin_region, k].append((self.start[i], self.end[i]))

        self.graph = nx.Graph()
        self.graph.add_nodes_from(self.regions)
        self.graph.add_edges_from(config.adjacency)

        self.state = SimState(active={r: 0 for r in self.regions}, idle={r: 0 for r in self.regions})
        self.metrics = SimMetrics()
        self._tally: dict[int, WindowMetrics] = {}
        self._idle_area: dict[int, float] = {}
        self._active_area: dict[int, float] = {}
        self._clock = 0.0
        self._seq = 0
        self._window = -1

    # calendar

    def _push(self, time: float, kind: EventKind, payload: int) -> None:
        heapq.heappush(self.state.calendar, (time, kind, self._seq, payload))
        self._seq += 1

    def _advance(self, time: float) -> None:
        elapsed = time - self._clock
        if elapsed > 0 and self._tally:
            for r in self.regions:
                self._idle_area[r] += self.state.idle[r] * elapsed
                self._active_area[r] += self.state.active[r] * elapsed
        self._clock = time

    def run(self) -> SimMetrics:
        w = self.model.window_minutes
        for k in range(self.model.windows_per_region + 1):
            self._push(k * w, EventKind.WINDOW, k)
        for i in range(len(self.start)):
            self._push(self.start[i], EventKind.BOOKAHEAD if self.book_ahead[i] else EventKind.ARRIVAL, i)

        while self.state.calendar:
            time, kind, _, payload = heapq.heappop(self.state.calendar)
            self._advance(time)
            if kind == EventKind.COMPLETION:
                self._complete(payload)
            elif kind == EventKind.REBALANCE:
                self._rebalance(external=False)
            elif kind == EventKind.BOOKAHEAD:
                self._start_bookahead(payload)
            elif kind == EventKind.ARRIVAL:
                self._arrive(payload)
            else:
                self._close_window()
                if payload == self.model.windows_per_region:
                    break
                self._open_window(payload)
        return self.metrics

    # windows

    def _target(self, spec: TargetSpec) -> int:
        if self.config.target_override is not None:
            target = self.config.target_override
        else:
            target = compute_target(spec, self.config.quadrature_step)
        # the admission policy can only protect a target above the reserved load
        return max(target, peak(spec.reserved))

    def _open_window(self, k: int) -> None:
        self._window = k
        window = self.model.window(k)
        targets: dict[int, int] = {}
        for r in self.regions:
            carryover = from_rides(self.state.in_progress[r].values(), window)
            bookahead = from_rides(self._bookahead_spans.get((r, k), []), window)
            cell = self.model.cell(r, k)
            rate = (1.0 - self.config.p_ba) * cell.total_rate
            spec = TargetSpec(self.config.delta, window, DemandRate.constant(rate), cell.service, carryover, bookahead)
            targets[r] = self._target(spec)
            self.state.admission[r] = open_window(targets[r], carryover, bookahead)
            self._tally[r] = WindowMetrics(region=r, window=k, target=targets[r])
            self._idle_area[r] = 0.0
            self._active_area[r] = 0.0

        if k == 0 or 0.0 in self.config.rebalance_points:
            self._rebalance(external=True)
        for r in self.regions:
            self._tally[r].fleet_start = self.state.fleet(r)
        for point in self.config.rebalance_points:
            if point > 0:
                self._push(window[0] + point * self.model.window_minutes, EventKind.REBALANCE, k)
        logger.debug("window %d targets %s", k, targets)

    def _close_window(self) -> None:
        if not self._tally:
            return
        w = self.model.window_minutes
        for r in self.regions:
            state = self.state.admission[r]
            if not state.safe:
                raise StateError(f"region {r} window {self._window}: committed load exceeds target {state.target}")
            tally = self._tally[r]
            tally.idle_avg = self._idle_area[r] / w
            tally.active_avg = self._active_area[r] / w
            tally.fleet_end = self.state.fleet(r)
            tally.spillover = len(state.spillover)
            self.metrics.windows.append(tally)
        self._tally = {}

    # rebalancing

    def _rebalance(self, external: bool) -> None:
        snapshots = [
            RegionSnapshot(r, self.state.active[r], self.state.idle[r], self.state.admission[r].target) for r in self.regions
        ]
        plan = rebalance(snapshots, self.config.adjacency, external=external)
        self.state.idle = apply_plan(snapshots, plan, apply_moves=self.config.compliance)
        if self.config.compliance:
            for (i, j), n in plan.moves.items():
                self._tally[i].moves_out += n
                self._tally[j].moves_in += n
            self.metrics.total_internal += plan.total_internal
        for r, n in plan.add.items():
            self._tally[r].added += n
        for r, n in plan.remove.items():
            removed = n if self.config.compliance else min(n, snapshots[r - 1].idle)
            self._tally[r].removed += removed
            self.metrics.total_external += removed
        self.metrics.total_external += sum(plan.add.values())

    # rides

    def _begin_ride(self, i: int) -> None:
        r = self.origin[i]
        self.state.active[r] += 1
        self.state.in_progress[r][i] = (float(self.start[i]), float(self.end[i]))
        self._push(self.end[i], EventKind.COMPLETION, i)

    def _complete(self, i: int) -> None:
        r = self.origin[i]
        self.state.active[r] -= 1
        del self.state.in_progress[r][i]
        self.state.idle[self.destination[i]] += 1

    def _nearest_idle(self, region: int) -> Optional[tuple[int, int]]:
        distances = nx.single_source_shortest_path_length(self.graph, region)
        candidates = sorted((d, r) for r, d in distances.items() if r != region and self.state.idle[r] > 0)
        if not candidates:
            return None
        hops, donor = candidates[0]
        return donor, hops

    def _start_bookahead(self, i: int) -> None:
        r = self.origin[i]
        tally = self._tally[r]
        if self.state.idle[r] > 0:
            self.state.idle[r] -= 1
        elif self.config.compliance and (nearest := self._nearest_idle(r)) is not None:
            donor, hops = nearest
            self.state.idle[donor] -= 1
            self._tally[donor].moves_out += 1
            tally.moves_in += 1
            self.metrics.total_internal += hops
        else:
            tally.bookahead_failures += 1
            logger.debug("book-ahead ride %d in region %d found no driver", i, r)
            return
        tally.bookahead_served += 1
        self._begin_ride(i)

    def _arrive(self, i: int) -> None:
        r = self.origin[i]
        tally = self._tally[r]
        state = self.state.admission[r]
        decision = decide(state, float(self.start[i]), float(self.end[i] - self.start[i]))
        if not decision.admitted:
            tally.blocked += 1
            if decision.reason == "capacity_now":
                tally.capacity_now += 1
            else:
                tally.bookahead_conflict += 1
            return
        if self.state.idle[r] == 0:
            tally.blocked += 1
            tally.blocked_no_driver += 1
            return
        self.state.admission[r] = commit(state, decision)
        self.state.idle[r] -= 1
        tally.admitted += 1
        self._begin_ride(i)


# ─────────────────────────────────────────────────────────────────────────────
# Entry points
# ─────────────────────────────────────────────────────────────────────────────


def run(config: SimConfig, model: CalibratedModel, trips: Sequence[TripRecord]) -> SimMetrics:
    """Simulate one replication; trips carry their book-ahead marks."""
    return Simulation(config, model, trips).run()


def run_noncompliant(config: SimConfig, model: CalibratedModel, trips: Sequence[TripRecord]) -> SimMetrics:
    """Same pipeline, but drivers ignore recommended inter-regional moves."""
    return run(with_updates(config, compliance=False), model, trips)


TripSource = Union[Sequence[TripRecord], Workload]


def _replicate(
    config: SimConfig, source: TripSource, model: Optional[CalibratedModel], replication: int
) -> tuple[CalibratedModel, list[TripRecord]]:
    workload_seed, mark_seed = replication_seeds(config.seed, replication)
    if isinstance(source, Workload):
        trips = generate_trips(source, workload_seed)
        model = calibrate_model(
            trips,
            config.regions,
            source.window_minutes,
            source.horizon,
            adjacency=config.adjacency,
            min_window_trips=config.min_window_trips,
        )
    else:
        trips = list(source)
    if model is None:
        raise InvalidInputError("a calibrated model is required for recorded trips")
    return model, sample_bookahead(trips, config.p_ba, mark_seed)


def run_replication(
    config: SimConfig, source: TripSource, model: Optional[CalibratedModel] = None, replication: int = 0
) -> SimMetrics:
    """Run replication ``replication``: draw or copy the trips, mark book-ahead rides, simulate."""
    model, trips = _replicate(config, source, model, replication)
    return run(config, model, trips)


def _replication_task(args: tuple[SimConfig, TripSource, Optional[CalibratedModel], int]) -> dict:
    config, source, model, replication = args
    metrics = run_replication(config, source, model, replication)
    return {"p_ba": config.p_ba, "delta": config.delta, "replication": replication, **metrics.summary()}


def _map(tasks: list, jobs: int, on_result: Optional[Callable[[], None]]) -> list[dict]:
    results: list[dict] = []
    if jobs <= 1:
        for task in tasks:
            results.append(_replication_task(task))
            if on_result:
                on_result()
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for result in pool.map(_replication_task, tasks):
            results.append(result)
            if on_result:
                on_result()
    return results


@dataclass
class SweepResult:
    table: pd.DataFrame
    runs: pd.DataFrame


def run_sweep(
    config: SimConfig,
    source: TripSource,
    p_values: Sequence[float],
    model: Optional[CalibratedModel] = None,
    replications: Optional[int] = None,
    jobs: int = 1,
    on_result: Optional[Callable[[], None]] = None,
) -> SweepResult:
    """Average run summaries over replications for every p_BA.

    Replication ``r`` draws the same workload and the same uniform marks for
    every p_BA, so sweep points are compared on matched seeds.
    """
    if not p_values:
        raise InvalidInputError("sweep needs at least one p_BA value")
    count = replications or config.replications
    tasks = [
        (with_updates(config, p_ba=float(p)), source, model, rep)
        for p in sorted(set(p_values))
        for rep in range(count)
    ]
    runs = pd.DataFrame(_map(tasks, jobs, on_result))
    grouped = runs.drop(columns=["replication", "delta"]).groupby("p_ba", sort=True)
    table = grouped.mean()
    table["target_std"] = grouped["mean_target"].std(ddof=1).fillna(0.0)
    table["blocked_fraction_std"] = grouped["blocked_fraction"].std(ddof=1).fillna(0.0)
    table.insert(0, "replications", count)
    return SweepResult(table=table.reset_index(), runs=runs)


def run_bound_check(
    config: SimConfig,
    source: TripSource,
    deltas: Sequence[float],
    model: Optional[CalibratedModel] = None,
    replications: Optional[int] = None,
    jobs: int = 1,
    on_result: Optional[Callable[[], None]] = None,
) -> pd.DataFrame:
    """Observed blocked fraction against the threshold in a single region.

    With one region every driver stays in it, so the fleet only moves between
    active and idle. One row per threshold with the mean over replications of
    the time-averaged blocked fraction, its standard error and the ratio to δ.
    """
    if config.regions != 1:
        raise InvalidInputError("the bound check runs on a single region")
    count = replications or config.replications
    tasks = [
        (with_updates(config, delta=float(d)), source, model, rep) for d in sorted(set(deltas)) for rep in range(count)
    ]
    runs = pd.DataFrame(_map(tasks, jobs, on_result))
    rows = []
    for delta, group in runs.groupby("delta", sort=True):
        observed = group["mean_window_blocked_fraction"].to_numpy()
        stderr = float(observed.std(ddof=1) / np.sqrt(observed.size)) if observed.size > 1 else 0.0
        mean = float(observed.mean())
        rows.append(
            {
                "delta": float(delta),
                "replications": int(observed.size),
                "blocked_fraction": mean,
                "stderr": stderr,
                "ratio": mean / float(delta),
                "mean_target": float(group["mean_target"].mean()),
            }
        )
    return pd.DataFrame(rows)
