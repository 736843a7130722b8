"""Compare predicted and observed active drivers.
예측 활성 기사 수와 관측값 비교.
"""
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import typer

from ridectl.config import settings
from ridectl.errors import InvalidInputError, RidectlError
from ridectl.ingest import CalibratedModel, TripRecord, load_model, load_trips, observed_active
from ridectl.queueing import predict_active
from ridectl.utils import RunManifest, console, create_summary_table, fail, manifest_path, write_csv

COLUMNS = ["region", "window", "minute", "predicted_mean", "predicted_std", "observed"]


def compare_active(model: CalibratedModel, trips: list[TripRecord], step: float = 1.0) -> pd.DataFrame:
    """Predicted mean and spread of active rides against the observed count on a grid."""
    if not step > 0:
        raise InvalidInputError(f"grid step must be positive, got {step}")
    frames = []
    for cell in model.windows:
        ws, we = cell.window
        grid = np.arange(ws + step, we + step / 2, step)
        # the threshold plays no part in the prediction
        mean, std = predict_active(cell.target_spec(settings.delta), grid)
        observed = observed_active(trips, cell.region, grid, model.epoch)
        frames.append(
            pd.DataFrame(
                {
                    "region": cell.region,
                    "window": cell.index,
                    "minute": grid,
                    "predicted_mean": mean,
                    "predicted_std": std,
                    "observed": observed,
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=COLUMNS)
    return pd.concat(frames, ignore_index=True)[COLUMNS]


def verify_command(
    model_path: Path = typer.Argument(..., metavar="MODEL", help="Calibrated model JSON"),
    trips: Path = typer.Argument(..., help="Trip CSV the model was calibrated on"),
    step: float = typer.Option(1.0, "--step", help="Grid spacing in minutes"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Comparison CSV path"),
):
    """Check the transient queue prediction against the recorded rides."""
    out = settings.output_path(out, "verify.csv")
    try:
        model = load_model(model_path)
        records = load_trips(trips, model.regions, model.pickup_minutes)
        frame = compare_active(model, records, step)
        write_csv(frame, out, settings.float_format)
        manifest = RunManifest.for_inputs("verify", [model_path, trips], config={"step": step})
        manifest.add_output(out)
        manifest.write(manifest_path(out))
    except RidectlError as e:
        fail(e)

    error = frame["observed"] - frame["predicted_mean"]
    inside = (error.abs() <= 2 * frame["predicted_std"].clip(lower=1.0)).mean() if len(frame) else 1.0
    console.print(
        create_summary_table(
            {
                "points": len(frame),
                "mean_error": float(error.mean()) if len(frame) else 0.0,
                "mean_abs_error": float(error.abs().mean()) if len(frame) else 0.0,
                "within_2_sigma": float(inside),
            },
            title="Predicted vs observed",
        )
    )
    console.print(f"[green]✓[/green] Comparison written: {out}")
