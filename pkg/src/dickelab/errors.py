"""Exception types shared across the solver modules.

The CLI maps these onto exit codes: ConfigError -> 2, ConvergenceError and
BracketError -> 3, ResourceLimitError -> 4.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """A config document (or model dict) failed validation.

    Carries the dotted path of the offending field so the CLI can point at it.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class ConvergenceError(SolverError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, best_residual: float | None = None):
        self.best_residual = best_residual
        super().__init__(message)


class BracketError(SolverError):
    """A root/transition bracket does not actually straddle a transition."""


class ResourceLimitError(SolverError):
    """A requested computation exceeds the configured size budget.

    ``trace`` optionally records (n_max, e0) pairs seen before hitting the
    limit, so a failed cutoff sweep still reports what it measured.
    """

    def __init__(self, message: str, trace: list[tuple[int, float]] | None = None):
        self.trace = trace or []
        super().__init__(message)
