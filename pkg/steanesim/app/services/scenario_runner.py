from __future__ import annotations

import hashlib
import json
import logging
import time
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..config import settings
from ..exceptions import InputError, ReportSchemaError
from ..models.circuit import QecPolicy
from ..models.schemas import (
    REPORT_SCHEMA,
    AngleFitReport,
    DiffEntry,
    DiffResult,
    EngineSettings,
    FidelityReport,
    OracleCheck,
    PolynomialTerm,
    ReportBundle,
    ScenarioConfig,
)
from ..utils.polynomial import ErrorPolynomial, parse_monomial_label, snap_coefficient
from .fault_expansion import ErrorRates, expand, oracle_exact
from .gadgets import build_sequence, sequence_unitary
from .metrics import (
    TOMOGRAPHY_INPUTS,
    chi_from_outputs,
    gate_fidelity,
    ideal_process_matrix,
    process_matrix,
    regress_angle_dependence,
)
from .steane_code import LogicalState

logger = logging.getLogger(__name__)

CONVENTIONS_PATH = Path(__file__).resolve().parents[2] / "conventions.md"

TABLE1_SEQUENCES = ("H", "PH", "HPH")
TABLE2_SEQUENCES = ("T", "PT", "HT", "TPH", "THPH")
PRESETS = ("table1", "table2", "perfect-qec")


@lru_cache(maxsize=1)
def conventions_hash() -> str:
    return hashlib.sha256(CONVENTIONS_PATH.read_bytes()).hexdigest()


def engine_settings(strategy: Optional[str] = None) -> EngineSettings:
    return EngineSettings(
        strategy=strategy or settings.STRATEGY,
        shor_verifications=settings.SHOR_VERIFICATIONS,
        theta_rounds=settings.THETA_ROUNDS,
        logical_zero_mode=settings.LOGICAL_ZERO_MODE,
        t_measurement_mode=settings.T_MEASUREMENT_MODE,
        branch_threshold=settings.BRANCH_THRESHOLD,
        merge_decimals=settings.MERGE_DECIMALS,
        snap_tolerance=settings.SNAP_TOLERANCE,
    )


def _terms(poly: ErrorPolynomial, snap: bool) -> List[PolynomialTerm]:
    tol = settings.SNAP_TOLERANCE
    out = []
    for label, value in poly.real.terms(tol):
        value = float(np.real(value))
        shown = snap_coefficient(value, tol) if snap else value
        out.append(PolynomialTerm(monomial=label, coefficient=float(shown), display=str(shown)))
    return out


def preset_scenarios(name: str, order: Optional[int] = None, allow_order_3: bool = False) -> List[ScenarioConfig]:
    """Scenario lists behind the built-in presets."""
    extra = {"allow_order_3": allow_order_3}
    if order is not None:
        extra["order"] = order
    if name == "table1":
        configs = [
            ScenarioConfig(sequence=seq, qec=qec, metric="both", **extra)
            for seq in TABLE1_SEQUENCES
            for qec in ("none", "noisy")
        ]
        configs.append(ScenarioConfig(sequence="P-QEC-H", qec="noisy", metric="both", **extra))
        return configs
    if name == "table2":
        configs = [
            ScenarioConfig(sequence=seq, qec=qec, metric="both", **extra)
            for seq in TABLE2_SEQUENCES
            for qec in ("none", "noisy")
        ]
        configs.append(ScenarioConfig(sequence="P-QEC-T", qec="noisy", metric="both", **extra))
        return configs
    if name == "perfect-qec":
        return [
            ScenarioConfig(sequence=seq, qec="perfect", metric="both", **extra)
            for seq in TABLE1_SEQUENCES + TABLE2_SEQUENCES
        ]
    raise InputError(f"Unknown preset {name!r}; expected one of {PRESETS}")


class ScenarioRunner:
    @staticmethod
    def run_scenario(
        config: ScenarioConfig,
        strategy: Optional[str] = None,
        jobs: Optional[int] = None,
        timings: bool = False,
    ) -> Tuple[List[FidelityReport], List[AngleFitReport]]:
        """All reports for one scenario: state fidelity per angle pair, then gate fidelity."""
        policy = QecPolicy.parse(config.qec)
        engine = {
            "strategy": strategy,
            "jobs": jobs,
            "allow_order_3": config.allow_order_3 or settings.ALLOW_ORDER_3,
        }
        reports: List[FidelityReport] = []
        fits: List[AngleFitReport] = []
        started = time.perf_counter()

        if config.metric in ("state", "both"):
            points = []
            for alpha, beta in config.angles:
                report, poly = ScenarioRunner._state_report(config, policy, alpha, beta, engine, timings)
                reports.append(report)
                points.append((alpha, beta, poly))
            if config.fit_angles:
                fit = regress_angle_dependence(points)
                fits.append(
                    AngleFitReport(
                        scenario=config.label,
                        qec=config.qec,
                        matches=fit.matches,
                        coefficients={k: list(v) for k, v in fit.coefficients.items()},
                        residuals=fit.residuals,
                    )
                )

        if config.metric in ("gate", "both"):
            reports.append(ScenarioRunner._gate_report(config, policy, engine, timings))

        logger.info(
            "scenario %s qec=%s metric=%s order=%d: %d report(s) in %.2fs",
            config.label,
            config.qec,
            config.metric,
            config.order,
            len(reports),
            time.perf_counter() - started,
        )
        return reports, fits

    @staticmethod
    def run_bundle(
        configs: Sequence[ScenarioConfig],
        strategy: Optional[str] = None,
        jobs: Optional[int] = None,
        timings: bool = False,
    ) -> ReportBundle:
        reports: List[FidelityReport] = []
        fits: List[AngleFitReport] = []
        wall: Dict[str, float] = {}
        for config in configs:
            started = time.perf_counter()
            r, f = ScenarioRunner.run_scenario(config, strategy, jobs, timings)
            reports.extend(r)
            fits.extend(f)
            wall[f"{config.label}|{config.qec}"] = time.perf_counter() - started
        return ReportBundle(
            conventions_sha256=conventions_hash(),
            engine=engine_settings(strategy),
            reports=reports,
            angle_fits=fits,
            timings=wall if timings else None,
        )

    @staticmethod
    def run_preset(
        name: str,
        order: Optional[int] = None,
        strategy: Optional[str] = None,
        jobs: Optional[int] = None,
        timings: bool = False,
        allow_order_3: bool = False,
    ) -> ReportBundle:
        return ScenarioRunner.run_bundle(preset_scenarios(name, order, allow_order_3), strategy, jobs, timings)

    # -- single reports ---------------------------------------------------------

    @staticmethod
    def _state_report(config: ScenarioConfig, policy: QecPolicy, alpha: float, beta: float, engine, timings: bool):
        fragment = build_sequence(config.sequence, policy, LogicalState(alpha, beta), config.interior)
        result = expand(fragment, "fidelity", config.order, **engine)
        poly = result.value.real

        oracle = None
        if config.oracle != "off":
            rate = config.oracle_rate
            exact = oracle_exact(
                fragment,
                "fidelity",
                ErrorRates.uniform(rate),
                method=config.oracle,
                samples=config.samples,
                seed=config.seed,
            )
            truncated = float(poly.evaluate(rate, rate, rate))
            oracle = OracleCheck(
                method=exact.method,
                rate=rate,
                exact=float(exact.value),
                truncated=truncated,
                residual=abs(float(exact.value) - truncated),
                stderr=float(exact.stderr) if exact.method == "monte-carlo" else None,
                samples=exact.samples or None,
            )

        report = FidelityReport(
            scenario=config.label,
            sequence=config.sequence,
            qec=config.qec,
            metric="state",
            alpha=alpha,
            beta=beta,
            order=config.order,
            polynomial=poly.format(snap=config.snap, tolerance=settings.SNAP_TOLERANCE),
            terms=_terms(poly, config.snap),
            acceptance=_terms(result.acceptance, config.snap),
            locations=result.locations,
            elapsed=result.elapsed if timings else None,
            oracle=oracle,
        )
        return report, poly

    @staticmethod
    def _gate_report(config: ScenarioConfig, policy: QecPolicy, engine, timings: bool) -> FidelityReport:
        started = time.perf_counter()
        ideal = ideal_process_matrix(sequence_unitary(config.sequence))
        chi = process_matrix(config.sequence, policy, config.order, config.interior, **engine)
        poly = gate_fidelity(ideal, chi)
        locations = len(build_sequence(config.sequence, policy, TOMOGRAPHY_INPUTS[0], config.interior).locations())

        oracle = None
        if config.oracle != "off":
            rate = config.oracle_rate
            outputs = []
            for state in TOMOGRAPHY_INPUTS:
                fragment = build_sequence(config.sequence, policy, state, config.interior)
                exact = oracle_exact(
                    fragment,
                    "decoded",
                    ErrorRates.uniform(rate),
                    method=config.oracle,
                    samples=config.samples,
                    seed=config.seed,
                )
                outputs.append(np.asarray(exact.value))
            value = gate_fidelity(ideal, chi_from_outputs(TOMOGRAPHY_INPUTS, outputs))
            truncated = float(poly.evaluate(rate, rate, rate))
            oracle = OracleCheck(
                method=config.oracle,
                rate=rate,
                exact=value,
                truncated=truncated,
                residual=abs(value - truncated),
            )

        return FidelityReport(
            scenario=config.label,
            sequence=config.sequence,
            qec=config.qec,
            metric="gate",
            order=config.order,
            polynomial=poly.format(snap=config.snap, tolerance=settings.SNAP_TOLERANCE),
            terms=_terms(poly, config.snap),
            locations=locations,
            elapsed=time.perf_counter() - started if timings else None,
            oracle=oracle,
        )


def run_scenario(config: ScenarioConfig, **kwargs) -> List[FidelityReport]:
    reports, _ = ScenarioRunner.run_scenario(config, **kwargs)
    return reports


# ---------------------------------------------------------------------------
# diffing report files
# ---------------------------------------------------------------------------

def load_bundle(source: Union[str, bytes, dict, ReportBundle]) -> ReportBundle:
    if isinstance(source, ReportBundle):
        return source
    if isinstance(source, (str, bytes)):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as e:
            raise ReportSchemaError(f"Report is not valid JSON: {e}") from None
    if not isinstance(source, dict) or source.get("schema") != REPORT_SCHEMA:
        found = source.get("schema") if isinstance(source, dict) else type(source).__name__
        raise ReportSchemaError(f"Expected a {REPORT_SCHEMA} report, got {found!r}")
    try:
        return ReportBundle.model_validate(source)
    except ValidationError as e:
        raise ReportSchemaError(f"Malformed report: {e}") from None


def _monomial_order(label: str):
    m = parse_monomial_label(label)
    return (sum(m), tuple(-x for x in m))


def _describe(key: Tuple) -> str:
    scenario, qec, metric, alpha, beta = key
    where = "" if alpha is None else f" at alpha={alpha:g}, beta={beta:g}"
    return f"{scenario} [{qec}] {metric}{where}"


def diff_reports(a, b, tolerance: Optional[float] = None) -> DiffResult:
    """Per-monomial coefficient deltas between two report files; empty when identical."""
    tol = settings.DIFF_TOLERANCE if tolerance is None else tolerance
    left, right = load_bundle(a), load_bundle(b)
    if left.conventions_sha256 != right.conventions_sha256:
        logger.warning("Reports were produced under different conventions documents")
    index_a = {r.key: r for r in left.reports}
    index_b = {r.key: r for r in right.reports}
    result = DiffResult(tolerance=tol)
    for key in sorted(set(index_a) | set(index_b), key=repr):
        if key not in index_a or key not in index_b:
            side = "second" if key not in index_a else "first"
            result.missing.append(f"{_describe(key)} only in the {side} report")
            continue
        ta = {t.monomial: t.coefficient for t in index_a[key].terms}
        tb = {t.monomial: t.coefficient for t in index_b[key].terms}
        scenario, qec, metric, alpha, beta = key
        for monomial in sorted(set(ta) | set(tb), key=_monomial_order):
            delta = tb.get(monomial, 0.0) - ta.get(monomial, 0.0)
            if delta == 0.0:
                continue
            result.entries.append(
                DiffEntry(
                    scenario=scenario,
                    qec=qec,
                    metric=metric,
                    alpha=alpha,
                    beta=beta,
                    monomial=monomial,
                    a=ta.get(monomial),
                    b=tb.get(monomial),
                    delta=delta,
                    within_tolerance=abs(delta) <= tol,
                )
            )
    logger.info(
        "diff: %d changed coefficient(s), %d missing report(s), tolerance %g",
        len(result.entries),
        len(result.missing),
        tol,
    )
    return result
