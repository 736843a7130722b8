"""Solve one rebalancing instance.
재배치 인스턴스 하나를 풀기.
"""
from pathlib import Path
from typing import Optional

import typer
from rich.table import Table

from ridectl.config import settings
from ridectl.errors import InvalidInputError, RidectlError
from ridectl.rebalance import apply_plan, extract_plan, imbalance, parse_instance, solve_mcf
from ridectl.utils import RunManifest, console, create_summary_table, fail, manifest_path, write_json


def rebalance_command(
    instance_path: Path = typer.Argument(..., metavar="INSTANCE", help="Instance text file"),
    internal_only: bool = typer.Option(False, "--internal-only", help="Forbid adding or removing drivers"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Plan JSON path"),
):
    """Move idle drivers between adjacent regions and adjust the fleet at least cost.

    \b
    Instance format:
        region 1 3 4 5     # id active idle target
        adjacent 1 2       # both directions
        balance SO 7       # optional node balance override
    """
    out = settings.output_path(out, "plan.json")
    try:
        if not instance_path.is_file():
            raise InvalidInputError(f"instance file not found: {instance_path}")
        instance = parse_instance(instance_path.read_text(encoding="utf-8"))
        network = instance.network(external=not internal_only)
        plan = extract_plan(network, solve_mcf(network))
        regions = []
        idle_after = {} if instance.balances else apply_plan(instance.snapshots, plan)
        for s in instance.snapshots:
            row = {"region": s.region, "active": s.active, "idle": s.idle, "target": s.target}
            row["delta"] = imbalance(s).delta
            if idle_after:
                row["idle_after"] = idle_after[s.region]
            regions.append(row)
        write_json({"regions": regions, **plan.to_dict()}, out)
        manifest = RunManifest.for_inputs("rebalance", [instance_path], config={"internal_only": internal_only})
        manifest.add_output(out)
        manifest.write(manifest_path(out))
    except RidectlError as e:
        fail(e)

    if plan.moves:
        table = Table(title="Moves", show_header=True, header_style="bold cyan")
        table.add_column("From", justify="right")
        table.add_column("To", justify="right")
        table.add_column("Drivers", justify="right")
        for (i, j), n in sorted(plan.moves.items()):
            table.add_row(str(i), str(j), str(n))
        console.print(table)
    console.print(
        create_summary_table(
            {
                "internal": plan.total_internal,
                "added": sum(plan.add.values()),
                "removed": sum(plan.remove.values()),
                "cost": plan.cost,
            },
            title="Plan",
        )
    )
    console.print(f"[green]✓[/green] Plan written: {out}")
