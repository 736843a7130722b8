"""Calibrate a region-window model from a trip file.
트립 파일로 지역-윈도우 모델 보정.
"""
from pathlib import Path
from typing import Optional

import pandas as pd
import typer

from ridectl.config import settings
from ridectl.errors import RidectlError
from ridectl.ingest import calibrate_model, dump_model, load_trips, sample_bookahead
from ridectl.utils import (
    RunManifest,
    console,
    create_frame_table,
    fail,
    manifest_path,
    parse_adjacency,
    parse_horizon,
)


def calibrate_command(
    trips: Path = typer.Argument(..., help="Trip CSV (.csv or .csv.gz)"),
    regions: int = typer.Option(..., "--regions", "-r", min=1, help="Number of regions"),
    horizon: str = typer.Option(..., "--horizon", help="START..END in ISO-8601"),
    window_minutes: Optional[float] = typer.Option(None, "--window-minutes", "-w", help="Window length w (min)"),
    pba: float = typer.Option(0.0, "--pba", help="Book-ahead fraction used to mark trips"),
    seed: int = typer.Option(0, "--seed", help="Seed for book-ahead marks"),
    adjacency: Optional[str] = typer.Option(None, "--adjacency", "-a", help="Adjacent region pairs, e.g. 1-2,2-3"),
    strict: bool = typer.Option(False, "--strict", help="Fail on the first malformed row"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Model JSON path"),
):
    """Estimate rates, service laws and reserved profiles per region and window."""
    w = window_minutes or settings.window_minutes
    out = settings.output_path(out, "model.json")
    try:
        records = load_trips(trips, regions, settings.pickup_minutes, strict=strict)
        marked = sample_bookahead(records, pba, seed)
        model = calibrate_model(
            marked,
            regions,
            w,
            parse_horizon(horizon),
            adjacency=parse_adjacency(adjacency),
            p_ba=pba,
            seed=seed,
            pickup_minutes=settings.pickup_minutes,
            min_window_trips=settings.min_window_trips,
        )
        dump_model(model, out)
        manifest = RunManifest.for_inputs(
            "calibrate",
            [trips],
            seed=seed,
            config={"regions": regions, "window_minutes": w, "horizon": horizon, "p_ba": pba},
        )
        manifest.add_output(out)
        manifest.write(manifest_path(out))
    except RidectlError as e:
        fail(e)

    frame = pd.DataFrame(
        [
            {"region": c.region, "window": c.index, "trips": c.trips, "rate": c.rate, "mean_service": c.service.mean}
            for c in model.windows
        ]
    )
    console.print(create_frame_table(frame, "Calibrated windows"))
    console.print(f"[green]✓[/green] Model written: {out} ({len(records)} trips, {model.windows_per_region} windows)")
