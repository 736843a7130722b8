"""ridectl 오류 타입.

Every error carries a human readable ``message`` and the process exit code the
CLI should use when it surfaces the error (0 success, 1 validation, 2 runtime).
"""

from typing import Optional


class RidectlError(Exception):
    """ridectl 기본 오류."""

    exit_code: int = 2

    def __init__(self, message: str, exit_code: Optional[int] = None):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(self.message)


class InvalidInputError(RidectlError, ValueError):
    """Input failed validation (bad values, bad files, bad schema)."""

    exit_code = 1


class InfeasibleError(RidectlError):
    """A flow network has no feasible solution."""

    exit_code = 2


class StateError(RidectlError):
    """An operation was applied to a state it does not belong to."""

    exit_code = 2
