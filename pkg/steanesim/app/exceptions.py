from __future__ import annotations

from typing import List, Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class InputError(SimulationError, ValueError):
    """Bad argument to a library operation (indices, lengths, gate names, fault references)."""


class ConfigError(SimulationError, ValueError):
    """Invalid scenario configuration."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  - {d}" for d in self.diagnostics)


class DegenerateScenarioError(SimulationError):
    """An observable is undefined, e.g. the acceptance polynomial has a zero constant term."""


class ReportSchemaError(SimulationError, ValueError):
    """Two report files cannot be compared."""
