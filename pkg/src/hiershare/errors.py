"""Shared exception base for the package.

Every error raised by library code derives from HierShareError so callers
(and the CLI) can separate protocol/config failures from programming bugs.
"""


class HierShareError(Exception):
    """Base class for all errors raised by hiershare."""


class InvariantViolation(HierShareError):
    """A structural invariant of the simulation was broken.

    Carries the invariant's name so the CLI can report exactly which one
    failed (exit code 2).
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        self.detail = detail
        message = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(message)
