"""Generate a synthetic trip file.
합성 트립 파일 생성.
"""
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from pydantic import ValidationError

from ridectl.config import settings
from ridectl.errors import InvalidInputError, RidectlError
from ridectl.ingest import write_trips
from ridectl.synthetic import DEFAULT_EPOCH, DurationLaw, Workload, generate_trips
from ridectl.utils import RunManifest, console, fail, manifest_path, parse_float_list


def _od_matrix(regions: int, mixing: float) -> Optional[list[list[float]]]:
    """Stay in the origin with probability ``1 - mixing``, else pick another region uniformly."""
    if mixing == 0 or regions == 1:
        return None
    matrix = np.full((regions, regions), mixing / (regions - 1))
    np.fill_diagonal(matrix, 1.0 - mixing)
    return matrix.tolist()


def build_workload(
    regions: int,
    hours: float,
    rates: list[float],
    window_minutes: float,
    mixing: float = 0.0,
    durations: Optional[DurationLaw] = None,
    epoch: datetime = DEFAULT_EPOCH,
) -> Workload:
    windows = hours * 60.0 / window_minutes
    if abs(windows - round(windows)) > 1e-9 or round(windows) < 1:
        raise InvalidInputError(f"{hours:g} h is not a whole number of {window_minutes:g}-min windows")
    if len(rates) not in (1, regions):
        raise InvalidInputError(f"give one rate or one per region, got {len(rates)} for {regions} regions")
    if not 0.0 <= mixing <= 1.0:
        raise InvalidInputError(f"mixing must lie in [0, 1], got {mixing}")
    per_region = rates * regions if len(rates) == 1 else rates
    try:
        return Workload(
            regions=regions,
            windows=round(windows),
            window_minutes=window_minutes,
            rates=[[r] for r in per_region],
            od=_od_matrix(regions, mixing),
            durations=durations or DurationLaw(),
            epoch=epoch,
        )
    except ValidationError as e:
        raise InvalidInputError(str(e)) from e


def synth_command(
    regions: int = typer.Option(1, "--regions", "-r", min=1, help="Number of regions"),
    hours: float = typer.Option(3.0, "--hours", help="Horizon length in hours"),
    rate: str = typer.Option("1.0", "--rate", help="Requests per minute, one value or one per region"),
    window_minutes: Optional[float] = typer.Option(None, "--window-minutes", "-w", help="Window length w (min)"),
    mixing: float = typer.Option(0.0, "--mixing", help="Probability a ride ends in another region"),
    duration_kind: str = typer.Option("lognormal", "--duration", help="lognormal, exponential or deterministic"),
    duration_mean: float = typer.Option(12.0, "--duration-mean", help="Mean ride duration (min)"),
    duration_sigma: float = typer.Option(0.5, "--duration-sigma", help="Lognormal log-scale spread"),
    start: Optional[str] = typer.Option(None, "--start", help="Horizon start, ISO-8601"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Trip CSV path"),
):
    """Draw Poisson requests per region and window and write them as a trip CSV."""
    out = settings.output_path(out, "trips.csv")
    try:
        try:
            epoch = datetime.fromisoformat(start) if start else DEFAULT_EPOCH
            law = DurationLaw(kind=duration_kind, mean=duration_mean, sigma=duration_sigma)
        except (ValueError, ValidationError) as e:
            raise InvalidInputError(str(e)) from e
        workload = build_workload(
            regions,
            hours,
            parse_float_list(rate),
            window_minutes or settings.window_minutes,
            mixing,
            law,
            epoch,
        )
        trips = generate_trips(workload, seed)
        write_trips(trips, out)
        manifest = RunManifest(command="synth", seed=seed, config=workload.model_dump(mode="json"))
        manifest.add_output(out)
        manifest.write(manifest_path(out))
    except RidectlError as e:
        fail(e)

    begin, end = workload.horizon
    console.print(f"[green]✓[/green] {len(trips)} trips written: {out}")
    console.print(f"  Horizon: {begin.isoformat()}..{end.isoformat()}")
