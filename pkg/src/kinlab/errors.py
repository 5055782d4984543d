"""Exception hierarchy; each family maps onto one CLI exit code."""

from __future__ import annotations


class KinlabError(Exception):
    """Base class.  ``exit_code`` is what the CLI returns for it."""

    exit_code = 1

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(KinlabError, ValueError):
    """Invalid or incomplete configuration, or out-of-range parameters."""

    exit_code = 2


class NumericalAbort(KinlabError, RuntimeError):
    """A computation left its admissible domain or produced NaN."""

    exit_code = 3


class DomainError(NumericalAbort, ValueError):
    """A state or level lies outside the tabulated rectangle."""


class InvariantFailure(KinlabError, RuntimeError):
    """A checked invariant (certificate, conservation, cover) failed."""

    exit_code = 4


class ReportError(KinlabError, OSError):
    """The output location is not writable."""

    exit_code = 2
