"""ridectl commands package.
ridectl 명령어 패키지.

Structure:
    commands/
    ├── __init__.py      # This file
    ├── calibrate.py     # trips CSV -> calibrated model
    ├── targets.py       # per region-window supply targets
    ├── rebalance.py     # solve one rebalancing instance
    ├── simulate.py      # single run, replications, p_BA sweep
    ├── synth.py         # synthetic trip workloads
    └── verify.py        # predicted vs observed active drivers
"""

from ridectl.commands import calibrate, rebalance, simulate, synth, targets, verify

__all__ = [
    "calibrate",
    "rebalance",
    "simulate",
    "synth",
    "targets",
    "verify",
]
