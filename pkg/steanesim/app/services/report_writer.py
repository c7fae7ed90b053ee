from __future__ import annotations

import csv
import io
from typing import Dict, List

from ..exceptions import InputError
from ..models.schemas import DiffResult, FidelityReport, ReportBundle

FORMATS = ("markdown", "csv", "json")

QEC_COLUMNS = {
    "none": "No QEC",
    "perfect": "Perfect QEC",
    "perfect-final": "Perfect QEC",
    "noisy": "Noisy QEC",
    "noisy-final": "Noisy QEC",
    "each": "Noisy QEC after each gate",
}


def _column(qec: str) -> str:
    return QEC_COLUMNS.get(qec, f"QEC {qec}")


def _row_label(report: FidelityReport) -> str:
    if report.alpha is None:
        return report.scenario
    return f"{report.scenario} (α={report.alpha:.4f}, β={report.beta:.4f})"


def scenario_id(report: FidelityReport) -> str:
    base = f"{report.scenario}|{report.qec}"
    if report.alpha is None:
        return base
    return f"{base}|alpha={report.alpha:.6g},beta={report.beta:.6g}"


class ReportWriter:
    @staticmethod
    def render(bundle: ReportBundle, fmt: str) -> str:
        if fmt == "markdown":
            return ReportWriter.to_markdown(bundle)
        if fmt == "csv":
            return ReportWriter.to_csv(bundle)
        if fmt == "json":
            return ReportWriter.to_json(bundle)
        raise InputError(f"Unknown format {fmt!r}; expected one of {FORMATS}")

    @staticmethod
    def to_json(bundle: ReportBundle) -> str:
        return bundle.model_dump_json(by_alias=True, exclude_none=True, indent=2) + "\n"

    @staticmethod
    def to_csv(bundle: ReportBundle) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["scenario", "metric", "monomial", "coefficient"])
        for report in bundle.reports:
            for term in report.terms:
                writer.writerow([scenario_id(report), report.metric, term.monomial, term.display])
        return buffer.getvalue()

    @staticmethod
    def to_markdown(bundle: ReportBundle) -> str:
        """One table per metric: a row per scenario, a column per QEC variant."""
        lines: List[str] = []
        for metric, title in (("state", "State fidelity Tr[ρ_i ρ_f]"), ("gate", "Gate fidelity Tr[χ_i χ_f]")):
            reports = [r for r in bundle.reports if r.metric == metric]
            if not reports:
                continue
            columns: List[str] = []
            rows: Dict[str, Dict[str, str]] = {}
            for r in reports:
                col = _column(r.qec)
                if col not in columns:
                    columns.append(col)
                rows.setdefault(_row_label(r), {})[col] = r.polynomial
            lines.append(f"### {title}")
            lines.append("")
            lines.append("| Sequence | " + " | ".join(columns) + " |")
            lines.append("|---|" + "---|" * len(columns))
            for label, cells in rows.items():
                lines.append(f"| {label} | " + " | ".join(cells.get(c, "") for c in columns) + " |")
            lines.append("")

        if bundle.angle_fits:
            lines.append("### Angle dependence (1, cos 4α, cos 2β sin² 2α)")
            lines.append("")
            lines.append("| Sequence | QEC | Monomial | c0 | c_s1 | c_s2 | Residual |")
            lines.append("|---|---|---|---|---|---|---|")
            for fit in bundle.angle_fits:
                for monomial, (c0, c1, c2) in fit.coefficients.items():
                    lines.append(
                        f"| {fit.scenario} | {_column(fit.qec)} | {monomial} | {c0:.6g} | {c1:.6g} | {c2:.6g} "
                        f"| {fit.residuals[monomial]:.2e} |"
                    )
            lines.append("")

        oracles = [r for r in bundle.reports if r.oracle is not None]
        if oracles:
            lines.append("### Oracle checks")
            lines.append("")
            lines.append("| Scenario | Metric | Method | p | Exact | Truncated | Residual |")
            lines.append("|---|---|---|---|---|---|---|")
            for r in oracles:
                o = r.oracle
                lines.append(
                    f"| {_row_label(r)} [{r.qec}] | {r.metric} | {o.method} | {o.rate:g} | {o.exact:.10f} "
                    f"| {o.truncated:.10f} | {o.residual:.3e} |"
                )
            lines.append("")

        lines.append(f"conventions sha256: `{bundle.conventions_sha256}`")
        return "\n".join(lines) + "\n"

    @staticmethod
    def diff_to_text(diff: DiffResult) -> str:
        if not diff.entries and not diff.missing:
            return "no differences\n"
        lines = []
        for entry in diff.entries:
            flag = "ok " if entry.within_tolerance else "OUT"
            where = "" if entry.alpha is None else f" (α={entry.alpha:g}, β={entry.beta:g})"
            lines.append(
                f"{flag} {entry.scenario} [{entry.qec}] {entry.metric}{where} {entry.monomial}: "
                f"{entry.a} -> {entry.b} (Δ={entry.delta:.3e})"
            )
        lines.extend(f"MISSING {m}" for m in diff.missing)
        lines.append(f"tolerance {diff.tolerance:g}: {'within tolerance' if diff.ok else 'out of tolerance'}")
        return "\n".join(lines) + "\n"
