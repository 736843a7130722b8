"""Trip records, book-ahead sampling and per-window calibration.

Trip CSV schema (optionally gzip-compressed)::

    request_time,completion_time,origin_region,destination_region
    2016-04-04T08:01:12,2016-04-04T08:14:40,1,3

Timestamps are ISO-8601 with seconds; region ids are 1-based integers.
Inside the engine time is measured in minutes from the model epoch (the start
of the calibration horizon) and a request belongs to window ``k`` when its
start lies in ``(k w, (k + 1) w]``.
"""

import gzip
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from ridectl.errors import InvalidInputError
from ridectl.profile import StepProfile, Window, from_rides
from ridectl.queueing import DemandRate, ServiceDistribution, TargetSpec

logger = logging.getLogger(__name__)

COLUMNS = ("request_time", "completion_time", "origin_region", "destination_region")
MODEL_SCHEMA_VERSION = 1
_EXTRA_FIELDS = "<extra fields>"


@dataclass(frozen=True, slots=True)
class TripRecord:
    request_time: datetime
    completion_time: datetime
    origin_region: int
    destination_region: int
    book_ahead: bool = False

    def start_minute(self, epoch: datetime) -> float:
        return (self.request_time - epoch).total_seconds() / 60.0

    def end_minute(self, epoch: datetime) -> float:
        return (self.completion_time - epoch).total_seconds() / 60.0

    @property
    def duration(self) -> float:
        return (self.completion_time - self.request_time).total_seconds() / 60.0


def window_of(t: float, window_minutes: float) -> int:
    """Index ``k`` with ``t`` in ``(k w, (k + 1) w]``."""
    return math.ceil(t / window_minutes) - 1


# ─────────────────────────────────────────────────────────────────────────────
# Loading
# ─────────────────────────────────────────────────────────────────────────────


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", newline="")
    return path.open("r", encoding="utf-8", newline="")


def _naive(series: pd.Series) -> pd.Series:
    if getattr(series.dt, "tz", None) is not None:
        return series.dt.tz_convert("UTC").dt.tz_localize(None)
    return series


def load_trips(path: Path, region_count: int, pickup_minutes: float = 0.0, strict: bool = False) -> list[TripRecord]:
    """Read and validate a trip CSV.

    Malformed rows are logged with their line number and skipped; with
    ``strict`` the first one raises instead. ``pickup_minutes`` is added to
    every completion time. Records come back sorted by request time, ties in
    file order.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"trip file not found: {path}")
    if region_count < 1:
        raise InvalidInputError(f"region count must be positive, got {region_count}")
    if pickup_minutes < 0:
        raise InvalidInputError(f"pickup minutes must be nonnegative, got {pickup_minutes}")

    try:
        with _open_text(path) as handle:
            header = handle.readline().strip().lstrip("\ufeff")
        if tuple(c.strip() for c in header.split(",")) != COLUMNS:
            raise InvalidInputError(f"{path}: bad header {header!r}; expected columns: {','.join(COLUMNS)}")
        # blank lines stay in as empty rows and rows with extra fields come
        # back as a marker, so row i is always physical line i + 2
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            compression="infer",
            skip_blank_lines=False,
            engine="python",
            on_bad_lines=lambda fields: [_EXTRA_FIELDS, str(len(fields)), "", ""],
        ).fillna("")
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as e:
        raise InvalidInputError(f"{path}: cannot read trip file: {e}") from e
    if frame.empty:
        return []

    request = _naive(pd.to_datetime(frame["request_time"].str.strip(), format="ISO8601", errors="coerce"))
    completion = _naive(pd.to_datetime(frame["completion_time"].str.strip(), format="ISO8601", errors="coerce"))
    origin = pd.to_numeric(frame["origin_region"].str.strip(), errors="coerce")
    destination = pd.to_numeric(frame["destination_region"].str.strip(), errors="coerce")

    blank = (frame[list(COLUMNS)].apply(lambda column: column.str.strip()) == "").all(axis=1)
    problems: list[str] = []
    keep = np.ones(len(frame), dtype=bool)
    for row in range(len(frame)):
        line = row + 2
        issue = None
        if blank.iat[row]:
            keep[row] = False
            continue
        if frame["request_time"].iat[row] == _EXTRA_FIELDS:
            issue = f"expected {len(COLUMNS)} fields, found {frame['completion_time'].iat[row]}"
        elif pd.isna(request.iat[row]) or pd.isna(completion.iat[row]):
            issue = "unparseable timestamp"
        elif not completion.iat[row] > request.iat[row]:
            issue = "completion_time is not after request_time"
        else:
            for name, value in (("origin_region", origin.iat[row]), ("destination_region", destination.iat[row])):
                if pd.isna(value) or value != int(value) or not 1 <= value <= region_count:
                    issue = f"{name} must be an integer in 1..{region_count}"
                    break
        if issue is not None:
            message = f"{path}:{line}: {issue}"
            if strict:
                raise InvalidInputError(message)
            problems.append(message)
            keep[row] = False

    for message in problems:
        logger.warning("skipped row %s", message)

    pickup = timedelta(minutes=pickup_minutes)
    frame = pd.DataFrame(
        {
            "request": request[keep],
            "completion": completion[keep] + pickup,
            "origin": origin[keep].astype(int),
            "destination": destination[keep].astype(int),
        }
    ).sort_values("request", kind="mergesort")
    logger.debug("loaded %d trips from %s (%d rejected)", len(frame), path, len(problems))
    return [
        TripRecord(r.to_pydatetime(), c.to_pydatetime(), int(o), int(d))
        for r, c, o, d in zip(frame["request"], frame["completion"], frame["origin"], frame["destination"])
    ]


def write_trips(trips: Iterable[TripRecord], path: Path) -> None:
    """Write trips in the CSV schema above."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [
            (
                t.request_time.isoformat(timespec="seconds"),
                t.completion_time.isoformat(timespec="seconds"),
                t.origin_region,
                t.destination_region,
            )
            for t in trips
        ],
        columns=list(COLUMNS),
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def sample_bookahead(trips: Sequence[TripRecord], p_ba: float, seed: int) -> list[TripRecord]:
    """Mark each trip as booked ahead with probability ``p_ba``.

    One uniform draw per trip, so for a fixed seed the booked-ahead set only
    grows with ``p_ba``.
    """
    if not 0.0 <= p_ba <= 1.0:
        raise InvalidInputError(f"p_BA must lie in [0, 1], got {p_ba}")
    draws = np.random.default_rng(seed).random(len(trips))
    return [replace(trip, book_ahead=bool(u < p_ba)) for trip, u in zip(trips, draws)]


# ─────────────────────────────────────────────────────────────────────────────
# Calibration
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CalibratedWindow:
    region: int
    index: int
    window: Window
    rate: float
    total_rate: float
    service: ServiceDistribution
    bookahead: StepProfile
    carryover: StepProfile
    trips: int = 0

    def target_spec(self, delta: float, rate: Optional[float] = None) -> TargetSpec:
        """TargetSpec for this cell; ``rate`` overrides the calibrated one."""
        demand = DemandRate.constant(self.rate if rate is None else rate)
        return TargetSpec(delta, self.window, demand, self.service, self.carryover, self.bookahead)


@dataclass(frozen=True)
class CalibratedModel:
    regions: int
    window_minutes: float
    epoch: datetime
    windows_per_region: int
    windows: tuple[CalibratedWindow, ...]
    adjacency: tuple[tuple[int, int], ...] = ()
    p_ba: float = 0.0
    seed: int = 0
    pickup_minutes: float = 0.0

    @property
    def horizon_end(self) -> datetime:
        return self.epoch + timedelta(minutes=self.window_minutes * self.windows_per_region)

    def window(self, index: int) -> Window:
        return (index * self.window_minutes, (index + 1) * self.window_minutes)

    def cell(self, region: int, index: int) -> CalibratedWindow:
        return self.windows[(region - 1) * self.windows_per_region + index]


def _window_count(horizon: tuple[datetime, datetime], window_minutes: float) -> int:
    if not window_minutes > 0:
        raise InvalidInputError(f"window length must be positive, got {window_minutes}")
    span = (horizon[1] - horizon[0]).total_seconds() / 60.0
    if not span > 0:
        raise InvalidInputError(f"horizon {horizon[0]} .. {horizon[1]} is empty")
    count = span / window_minutes
    if abs(count - round(count)) > 1e-9:
        raise InvalidInputError(f"horizon of {span:g} min is not a whole number of {window_minutes:g}-min windows")
    return round(count)


def calibrate(
    trips: Sequence[TripRecord],
    regions: int,
    window_minutes: float,
    horizon: tuple[datetime, datetime],
    min_window_trips: int = 5,
) -> list[CalibratedWindow]:
    """Per (region, window) rates, service laws and deterministic profiles.

    Windows with fewer than ``min_window_trips`` trips borrow the region's
    whole-horizon duration distribution.
    """
    count = _window_count(horizon, window_minutes)
    epoch = horizon[0]
    windows = [(k * window_minutes, (k + 1) * window_minutes) for k in range(count)]

    total: dict[tuple[int, int], int] = defaultdict(int)
    reserved_free: dict[tuple[int, int], int] = defaultdict(int)
    durations: dict[tuple[int, int], list[float]] = defaultdict(list)
    region_durations: dict[int, list[float]] = defaultdict(list)
    bookahead: dict[tuple[int, int], list[tuple[float, float]]] = defaultdict(list)
    carryover: dict[tuple[int, int], list[tuple[float, float]]] = defaultdict(list)

    for trip in trips:
        region = trip.origin_region
        if not 1 <= region <= regions or not 1 <= trip.destination_region <= regions:
            raise InvalidInputError(f"trip at {trip.request_time} names a region outside 1..{regions}")
        start, end = trip.start_minute(epoch), trip.end_minute(epoch)
        k = window_of(start, window_minutes)
        if 0 <= k < count:
            total[region, k] += 1
            durations[region, k].append(end - start)
            region_durations[region].append(end - start)
            if trip.book_ahead:
                bookahead[region, k].append((start, end))
            else:
                reserved_free[region, k] += 1
        # every later window the ride is still active in sees it as carryover
        for later in range(max(k + 1, 0), min(window_of(end, window_minutes) + 1, count)):
            if end > windows[later][0]:
                carryover[region, later].append((start, end))

    pooled = [d for values in region_durations.values() for d in values]
    cells: list[CalibratedWindow] = []
    for region in range(1, regions + 1):
        fallback = (
            ServiceDistribution.empirical(region_durations[region])
            if region_durations[region]
            else ServiceDistribution.empirical(pooled)
            if pooled
            else ServiceDistribution.deterministic(window_minutes)
        )
        for k, window in enumerate(windows):
            observed = durations.get((region, k), [])
            service = ServiceDistribution.empirical(observed) if len(observed) >= min_window_trips else fallback
            cells.append(
                CalibratedWindow(
                    region=region,
                    index=k,
                    window=window,
                    rate=reserved_free[region, k] / window_minutes,
                    total_rate=total[region, k] / window_minutes,
                    service=service,
                    bookahead=from_rides(bookahead[region, k], window),
                    carryover=from_rides(carryover[region, k], window),
                    trips=total[region, k],
                )
            )
    logger.debug("calibrated %d regions x %d windows", regions, count)
    return cells


def calibrate_model(
    trips: Sequence[TripRecord],
    regions: int,
    window_minutes: float,
    horizon: tuple[datetime, datetime],
    adjacency: Iterable[tuple[int, int]] = (),
    p_ba: float = 0.0,
    seed: int = 0,
    pickup_minutes: float = 0.0,
    min_window_trips: int = 5,
) -> CalibratedModel:
    cells = calibrate(trips, regions, window_minutes, horizon, min_window_trips)
    return CalibratedModel(
        regions=regions,
        window_minutes=window_minutes,
        epoch=horizon[0],
        windows_per_region=_window_count(horizon, window_minutes),
        windows=tuple(cells),
        adjacency=tuple(sorted(set(adjacency))),
        p_ba=p_ba,
        seed=seed,
        pickup_minutes=pickup_minutes,
    )


def observed_active(trips: Iterable[TripRecord], region: int, times, epoch: datetime) -> np.ndarray:
    """Rides originating in ``region`` active at each time (minutes from ``epoch``)."""
    spans = [(t.start_minute(epoch), t.end_minute(epoch)) for t in trips if t.origin_region == region]
    starts = np.sort(np.array([s for s, _ in spans], dtype=np.float64))
    ends = np.sort(np.array([e for _, e in spans], dtype=np.float64))
    grid = np.asarray(times, dtype=np.float64)
    return np.searchsorted(starts, grid, side="right") - np.searchsorted(ends, grid, side="right")


# ─────────────────────────────────────────────────────────────────────────────
# Model documents
# ─────────────────────────────────────────────────────────────────────────────


class ProfileDocument(BaseModel):
    initial: int = Field(ge=0)
    breakpoints: list[tuple[float, int]] = Field(default_factory=list)


class ServiceDocument(BaseModel):
    kind: Literal["empirical", "exponential", "deterministic"]
    samples: list[float] = Field(default_factory=list)
    rate: Optional[float] = None
    duration: Optional[float] = None


class WindowDocument(BaseModel):
    region: int = Field(ge=1)
    index: int = Field(ge=0)
    start: float
    end: float
    rate: float = Field(ge=0, description="Non-reserved requests per minute")
    total_rate: float = Field(ge=0, description="All requests per minute")
    trips: int = Field(ge=0)
    service: ServiceDocument
    bookahead: ProfileDocument
    carryover: ProfileDocument


class ModelDocument(BaseModel):
    """Calibrated model as stored in ``model.json``."""

    schema_version: int = MODEL_SCHEMA_VERSION
    regions: int = Field(ge=1)
    window_minutes: float = Field(gt=0)
    epoch: datetime
    horizon_end: datetime
    windows_per_region: int = Field(ge=1)
    adjacency: list[tuple[int, int]] = Field(default_factory=list)
    p_ba: float = Field(default=0.0, ge=0, le=1)
    seed: int = 0
    pickup_minutes: float = Field(default=0.0, ge=0)
    windows: list[WindowDocument]


def _profile_document(profile: StepProfile) -> ProfileDocument:
    return ProfileDocument(initial=profile.initial, breakpoints=profile.breakpoints)


def _profile(document: ProfileDocument, window: Window) -> StepProfile:
    times = tuple(t for t, _ in document.breakpoints)
    counts = tuple(c for _, c in document.breakpoints)
    return StepProfile(window[0], window[1], document.initial, times, counts)


def to_document(model: CalibratedModel) -> ModelDocument:
    return ModelDocument(
        regions=model.regions,
        window_minutes=model.window_minutes,
        epoch=model.epoch,
        horizon_end=model.horizon_end,
        windows_per_region=model.windows_per_region,
        adjacency=list(model.adjacency),
        p_ba=model.p_ba,
        seed=model.seed,
        pickup_minutes=model.pickup_minutes,
        windows=[
            WindowDocument(
                region=cell.region,
                index=cell.index,
                start=cell.window[0],
                end=cell.window[1],
                rate=cell.rate,
                total_rate=cell.total_rate,
                trips=cell.trips,
                service=ServiceDocument(
                    kind=cell.service.kind,
                    samples=list(cell.service.samples),
                    rate=cell.service.rate,
                    duration=cell.service.duration,
                ),
                bookahead=_profile_document(cell.bookahead),
                carryover=_profile_document(cell.carryover),
            )
            for cell in model.windows
        ],
    )


def from_document(document: ModelDocument) -> CalibratedModel:
    if document.schema_version != MODEL_SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported model schema version {document.schema_version}")
    expected = [(r, k) for r in range(1, document.regions + 1) for k in range(document.windows_per_region)]
    if [(w.region, w.index) for w in document.windows] != expected:
        raise InvalidInputError("model windows must list every (region, window) pair in order")
    cells = []
    for w in document.windows:
        window = (w.start, w.end)
        cells.append(
            CalibratedWindow(
                region=w.region,
                index=w.index,
                window=window,
                rate=w.rate,
                total_rate=w.total_rate,
                service=ServiceDistribution(
                    w.service.kind, tuple(w.service.samples), w.service.rate, w.service.duration
                ),
                bookahead=_profile(w.bookahead, window),
                carryover=_profile(w.carryover, window),
                trips=w.trips,
            )
        )
    return CalibratedModel(
        regions=document.regions,
        window_minutes=document.window_minutes,
        epoch=document.epoch,
        windows_per_region=document.windows_per_region,
        windows=tuple(cells),
        adjacency=tuple(document.adjacency),
        p_ba=document.p_ba,
        seed=document.seed,
        pickup_minutes=document.pickup_minutes,
    )


def dump_model(model: CalibratedModel, path: Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(to_document(model).model_dump_json(indent=2) + "\n", encoding="utf-8")


def load_model(path: Path) -> CalibratedModel:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"model file not found: {path}")
    try:
        document = ModelDocument.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InvalidInputError(f"{path}: invalid model document: {e.error_count()} error(s)\n{e}") from e
    return from_document(document)
