"""Diagnostics and the error hierarchy shared across the compiler."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int
    col: int

    def render(self) -> str:
        return f"{self.severity}: {self.message} (line {self.line}, col {self.col})"


def error_at(message: str, line: int, col: int) -> Diagnostic:
    return Diagnostic("error", message, line, col)


class MetriqError(Exception):
    """Base class for all user-facing errors."""


class DiagnosticError(MetriqError):
    """Raised by the frontend; carries one diagnostic per problem found."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.render() for d in self.diagnostics))


class ConfigError(MetriqError):
    """Invalid analysis configuration or manifest."""


class DataError(MetriqError):
    """Dataset loading or coercion failure; message carries row/column."""


class PlanCorruptionError(MetriqError):
    """An internal plan invariant was violated (e.g. a cycle). Not a user error."""


class UnsupportedConstructError(MetriqError):
    """A plan node has no template in the requested dialect."""

    def __init__(self, op: str, dialect: str, detail: str = ""):
        self.op = op
        self.dialect = dialect
        msg = f"dialect '{dialect}' does not support construct '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class AdapterError(MetriqError):
    """Execution of an emitted program failed; carries the program text."""

    def __init__(self, message: str, program_text: str):
        self.program_text = program_text
        super().__init__(f"{message}\n--- program ---\n{program_text}")
