"""Simulate admission control and rebalancing over recorded trips.
기록된 트립으로 승인 제어와 재배치 시뮬레이션.
"""
from pathlib import Path
from typing import Optional

import typer
from pydantic import ValidationError
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn

from ridectl.config import settings
from ridectl.errors import InvalidInputError, RidectlError
from ridectl.ingest import load_model, load_trips
from ridectl.simulator import SimConfig, load_sim_config, run_bound_check, run_replication, run_sweep
from ridectl.utils import (
    RunManifest,
    console,
    create_frame_table,
    create_summary_table,
    fail,
    parse_float_list,
    write_csv,
    write_json,
)


def _progress() -> Progress:
    return Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )


def _build_config(model, config_file: Optional[Path], overrides: dict) -> SimConfig:
    defaults = {
        "delta": settings.delta,
        "quadrature_step": settings.quadrature_step,
        "min_window_trips": settings.min_window_trips,
        "adjacency": [list(pair) for pair in model.adjacency],
    }
    geometry = {"regions": model.regions, "window_minutes": model.window_minutes}
    if config_file is not None:
        return load_sim_config(config_file, defaults=defaults, **geometry, **overrides)
    data = {**defaults, **geometry, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return SimConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(str(e)) from e


def simulate_command(
    model_path: Path = typer.Argument(..., metavar="MODEL", help="Calibrated model JSON"),
    trips: Path = typer.Argument(..., help="Trip CSV to replay"),
    delta: Optional[float] = typer.Option(None, "--delta", "-d", help="Quality of service threshold δ in (0, 1)"),
    pba: Optional[float] = typer.Option(None, "--pba", help="Book-ahead fraction"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed for book-ahead marks"),
    sweep: Optional[str] = typer.Option(None, "--sweep", help="Comma-separated p_BA values, e.g. 0,0.3,0.6"),
    bound_check: Optional[str] = typer.Option(
        None, "--bound-check", help="Comma-separated δ values; single-region blocked fraction vs δ"
    ),
    replications: Optional[int] = typer.Option(None, "--replications", "-n", min=1, help="Replications per point"),
    no_compliance: bool = typer.Option(False, "--no-compliance", help="Drivers ignore recommended moves"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML run configuration"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Replay trips through targets, admission control and rebalancing.

    \b
    Outputs (in --out):
        metrics.csv      per region-window metrics of a single run
        summary.json     run summary
        sweep.csv        per p_BA averages (--sweep or --replications > 1)
        bound_check.csv  blocked fraction against δ (--bound-check)
        manifest.json    inputs, configuration and outputs
    """
    if delta is not None and not 0 < delta < 1:
        console.print(f"[red]✗[/red] delta must lie in (0, 1), got {delta}")
        raise typer.Exit(1)
    out_dir = settings.output_path(out, "simulation")
    jobs = jobs or settings.jobs
    overrides = {
        "delta": delta,
        "p_ba": pba,
        "seed": seed,
        "replications": replications,
        "compliance": False if no_compliance else None,
    }
    try:
        model = load_model(model_path)
        records = load_trips(trips, model.regions, model.pickup_minutes)
        config = _build_config(model, config_file, overrides)
        inputs = [model_path, trips] + ([config_file] if config_file else [])
        manifest = RunManifest.for_inputs("simulate", inputs, seed=config.seed, config=config.model_dump(mode="json"))

        if bound_check is not None:
            deltas = parse_float_list(bound_check)
            with _progress() as progress:
                task = progress.add_task("Bound check", total=len(set(deltas)) * config.replications)
                frame = run_bound_check(
                    config, records, deltas, model=model, jobs=jobs, on_result=lambda: progress.advance(task)
                )
            manifest.add_output(write_csv(frame, out_dir / "bound_check.csv", settings.float_format))
            title = "Bound check"
        elif sweep is not None or config.replications > 1:
            p_values = parse_float_list(sweep) if sweep is not None else [config.p_ba]
            with _progress() as progress:
                task = progress.add_task("Replications", total=len(set(p_values)) * config.replications)
                result = run_sweep(
                    config, records, p_values, model=model, jobs=jobs, on_result=lambda: progress.advance(task)
                )
            frame = result.table
            manifest.add_output(write_csv(frame, out_dir / "sweep.csv", settings.float_format))
            manifest.add_output(write_csv(result.runs, out_dir / "runs.csv", settings.float_format))
            title = "p_BA sweep"
        else:
            metrics = run_replication(config, records, model)
            frame = None
            summary = metrics.summary()
            manifest.add_output(write_csv(metrics.frame(), out_dir / "metrics.csv", settings.float_format))
            manifest.add_output(write_json({"config": config.model_dump(mode="json"), **summary}, out_dir / "summary.json"))
        manifest.write(out_dir / "manifest.json")
    except RidectlError as e:
        fail(e)

    if frame is None:
        console.print(create_summary_table(summary, title="Simulation"))
    else:
        console.print(create_frame_table(frame, title))
    console.print(f"[green]✓[/green] Results written: {out_dir}")
