"""ridectl - supply management for ridesourcing regions.
라이드소싱 지역 공급 관리 CLI.

Usage:
    ridectl synth --regions 2 --hours 3 --rate 1.5      # Synthetic trips
    ridectl calibrate trips.csv -r 2 --horizon A..B     # Calibrated model
    ridectl targets model.json --delta 0.01             # Supply targets
    ridectl rebalance instance.txt                      # One rebalancing solve
    ridectl simulate model.json trips.csv --sweep 0,0.3 # Simulation
    ridectl verify model.json trips.csv                 # Prediction check
"""
import typer

from ridectl import __version__
from ridectl.commands import calibrate, rebalance, simulate, synth, targets, verify
from ridectl.config import settings
from ridectl.utils import console, setup_logging

app = typer.Typer(
    name="ridectl",
    help="Supply management for ridesourcing regions / 라이드소싱 지역 공급 관리",
    no_args_is_help=True,
    rich_markup_mode="rich",
)

app.command("calibrate")(calibrate.calibrate_command)
app.command("targets")(targets.targets_command)
app.command("rebalance")(rebalance.rebalance_command)
app.command("simulate")(simulate.simulate_command)
app.command("synth")(synth.synth_command)
app.command("verify")(verify.verify_command)


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: bool = typer.Option(False, "--version", "-V", help="Show version"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
):
    """Supply targets, admission control and rebalancing for ridesourcing regions.

    \b
    Quick Start:
        ridectl synth -r 2 --hours 3 --rate 1.5 -o trips.csv
        ridectl calibrate trips.csv -r 2 --horizon 2016-04-04T08:00..2016-04-04T11:00
        ridectl targets model.json --delta 0.01
        ridectl simulate model.json trips.csv --sweep 0,0.3,0.6 -n 10

    \b
    Configuration:
        RIDECTL_* environment variables, .env, ~/.config/ridectl/config
    """
    if version:
        console.print(f"ridectl {__version__}")
        raise typer.Exit(0)
    setup_logging("DEBUG" if verbose else settings.log_level)
