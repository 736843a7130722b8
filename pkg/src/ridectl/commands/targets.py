"""Supply targets per region and window.
지역-윈도우별 공급 목표 계산.
"""
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import pandas as pd
import typer

from ridectl.config import settings
from ridectl.errors import InvalidInputError, RidectlError
from ridectl.ingest import CalibratedWindow, load_model
from ridectl.profile import peak
from ridectl.queueing import averaged_bound, compute_target
from ridectl.utils import RunManifest, console, create_frame_table, fail, manifest_path, write_csv

COLUMNS = ["region", "window", "window_start", "window_end", "rate", "target", "reserved_peak", "bound"]


def _target_row(args: tuple[CalibratedWindow, float, Optional[float], float]) -> dict:
    cell, delta, rate, step = args
    spec = cell.target_spec(delta, rate)
    target = compute_target(spec, step)
    return {
        "region": cell.region,
        "window": cell.index,
        "window_start": cell.window[0],
        "window_end": cell.window[1],
        "rate": spec.demand.max_rate,
        "target": target,
        "reserved_peak": peak(spec.reserved),
        "bound": averaged_bound(target, spec, step),
    }


def compute_targets(
    cells: list[CalibratedWindow],
    delta: float,
    pba: Optional[float] = None,
    step: float = 0.1,
    jobs: int = 1,
) -> pd.DataFrame:
    """One row per cell; with ``pba`` the rate becomes ``(1 - pba)`` times the total rate."""
    tasks = [(c, delta, None if pba is None else (1.0 - pba) * c.total_rate, step) for c in cells]
    if jobs <= 1:
        rows = [_target_row(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_target_row, tasks))
    return pd.DataFrame(rows, columns=COLUMNS)


def targets_command(
    model_path: Path = typer.Argument(..., metavar="MODEL", help="Calibrated model JSON"),
    delta: Optional[float] = typer.Option(None, "--delta", "-d", help="Quality of service threshold δ in (0, 1)"),
    pba: Optional[float] = typer.Option(None, "--pba", help="Recompute rates for this book-ahead fraction"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Targets CSV path"),
):
    """Compute the smallest supply meeting δ for every region and window."""
    delta = settings.delta if delta is None else delta
    if not 0 < delta < 1:
        console.print(f"[red]✗[/red] delta must lie in (0, 1), got {delta}")
        raise typer.Exit(1)
    out = settings.output_path(out, "targets.csv")
    try:
        if pba is not None and not 0.0 <= pba <= 1.0:
            raise InvalidInputError(f"p_BA must lie in [0, 1], got {pba}")
        model = load_model(model_path)
        if pba is not None and abs(pba - model.p_ba) > 1e-12:
            console.print(
                f"[yellow]![/yellow] Book-ahead profiles were marked with p_BA={model.p_ba:g}; only rates are rescaled"
            )
        frame = compute_targets(list(model.windows), delta, pba, settings.quadrature_step, jobs or settings.jobs)
        write_csv(frame, out, settings.float_format)
        manifest = RunManifest.for_inputs(
            "targets",
            [model_path],
            seed=model.seed,
            config={"delta": delta, "p_ba": pba, "quadrature_step": settings.quadrature_step},
        )
        manifest.add_output(out)
        manifest.write(manifest_path(out))
    except RidectlError as e:
        fail(e)

    console.print(create_frame_table(frame, f"Targets (δ={delta:g})"))
    console.print(f"[green]✓[/green] Targets written: {out}")
