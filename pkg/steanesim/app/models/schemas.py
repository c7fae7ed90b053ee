from __future__ import annotations

import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import settings
from ..services.gadgets import parse_sequence_label
from .circuit import QecPolicy

REPORT_SCHEMA = "steanesim.report/1"


class ScenarioConfig(BaseModel):
    """One gate sequence under one QEC policy."""

    model_config = ConfigDict(extra="forbid")

    label: Optional[str] = None
    sequence: List[str]
    interior: List[int] = Field(default_factory=list)  # extra noisy cycles, counted in applied gates
    qec: str = "none"
    metric: Literal["state", "gate", "both"] = "state"
    order: int = Field(default_factory=lambda: settings.DEFAULT_ORDER)
    angles: List[Tuple[float, float]] = Field(default_factory=lambda: settings.preset_angles_list)
    fit_angles: bool = False
    oracle: Literal["off", "exhaustive", "monte-carlo"] = "off"
    oracle_rate: float = 1e-3
    samples: Optional[int] = None
    seed: int = 0
    snap: bool = True
    allow_order_3: bool = False

    @model_validator(mode="before")
    @classmethod
    def split_label(cls, data):
        # "P-QEC-H" style labels carry their own interior placements
        if isinstance(data, dict) and isinstance(data.get("sequence"), str):
            data = dict(data)
            text = data["sequence"]
            names, interior = parse_sequence_label(text)
            data["sequence"] = names
            data["interior"] = list(data.get("interior") or []) + list(interior)
            data.setdefault("label", text.strip().upper())
        return data

    @field_validator("sequence")
    @classmethod
    def check_gates(cls, value: List[str]) -> List[str]:
        names = [g.strip().upper() for g in value]
        if not names:
            raise ValueError("sequence needs at least one gate")
        bad = [g for g in names if g not in ("H", "P", "T")]
        if bad:
            raise ValueError(f"unsupported gate(s) {bad}; expected H, P or T")
        return names

    @field_validator("qec")
    @classmethod
    def check_policy(cls, value: str) -> str:
        QecPolicy.parse(value)
        return value.strip().lower()

    @field_validator("oracle_rate")
    @classmethod
    def check_rate(cls, value: float) -> float:
        if not 0.0 < value < 1.0 / 3.0:
            raise ValueError("oracle_rate must lie in (0, 1/3)")
        return value

    @field_validator("angles")
    @classmethod
    def check_angles(cls, value: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for alpha, beta in value:
            if not (math.isfinite(alpha) and math.isfinite(beta)):
                raise ValueError("angles must be finite")
        return value

    @model_validator(mode="after")
    def check_scenario(self) -> "ScenarioConfig":
        if not 0 <= self.order <= 3:
            raise ValueError(f"order must be between 0 and 3, got {self.order}")
        if self.order == 3 and not (self.allow_order_3 or settings.ALLOW_ORDER_3):
            raise ValueError("order 3 needs allow_order_3")
        n = len(self.sequence)
        for p in self.interior:
            if not 0 <= p <= n:
                raise ValueError(f"interior QEC placement {p} outside 0..{n}")
        if self.metric in ("state", "both") and not self.angles:
            raise ValueError("state fidelity needs at least one (alpha, beta) pair")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be positive")
        if self.label is None:
            self.label = "".join(self.sequence)
        return self


class ScenarioFile(BaseModel):
    """Config file body: a list of scenarios plus shared defaults."""

    model_config = ConfigDict(extra="forbid")

    scenarios: List[ScenarioConfig]
    jobs: Optional[int] = None
    strategy: Optional[Literal["propagate", "paths"]] = None
    format: Optional[Literal["markdown", "csv", "json"]] = None


class PolynomialTerm(BaseModel):
    monomial: str
    coefficient: float
    display: str


class OracleCheck(BaseModel):
    method: str
    rate: float
    exact: float
    truncated: float
    residual: float
    stderr: Optional[float] = None
    samples: Optional[int] = None


class FidelityReport(BaseModel):
    scenario: str
    sequence: List[str]
    qec: str
    metric: Literal["state", "gate"]
    alpha: Optional[float] = None
    beta: Optional[float] = None
    order: int
    polynomial: str
    terms: List[PolynomialTerm]
    acceptance: List[PolynomialTerm] = Field(default_factory=list)
    locations: int
    elapsed: Optional[float] = None
    oracle: Optional[OracleCheck] = None

    @property
    def key(self) -> Tuple:
        return (self.scenario, self.qec, self.metric, self.alpha, self.beta)


class AngleFitReport(BaseModel):
    scenario: str
    qec: str
    matches: bool
    coefficients: Dict[str, List[float]]
    residuals: Dict[str, float]


class EngineSettings(BaseModel):
    strategy: str
    shor_verifications: int
    theta_rounds: int
    logical_zero_mode: str
    t_measurement_mode: str
    branch_threshold: float
    merge_decimals: int
    snap_tolerance: float


class ReportBundle(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(REPORT_SCHEMA, alias="schema")
    conventions_sha256: str
    engine: EngineSettings
    reports: List[FidelityReport]
    angle_fits: List[AngleFitReport] = Field(default_factory=list)
    timings: Optional[Dict[str, float]] = None


class DiffEntry(BaseModel):
    scenario: str
    qec: str
    metric: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    monomial: str
    a: Optional[float] = None
    b: Optional[float] = None
    delta: Optional[float] = None
    within_tolerance: bool


class DiffResult(BaseModel):
    tolerance: float
    entries: List[DiffEntry] = Field(default_factory=list)
    missing: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing and all(e.within_tolerance for e in self.entries)


class RunRequest(BaseModel):
    """Body of POST /api/run."""

    model_config = ConfigDict(extra="forbid")

    scenarios: List[ScenarioConfig]
    strategy: Optional[Literal["propagate", "paths"]] = None
    timings: bool = False
