import csv
import io
import json

import pytest
from pydantic import ValidationError

from steanesim.app.exceptions import InputError, ReportSchemaError
from steanesim.app.models.schemas import ScenarioConfig
from steanesim.app.services.metrics import REPORT_GRID
from steanesim.app.services.report_writer import ReportWriter, scenario_id
from steanesim.app.services.scenario_runner import (
    ScenarioRunner,
    conventions_hash,
    diff_reports,
    load_bundle,
    preset_scenarios,
    run_scenario,
)


def h_state_config(**kw):
    return ScenarioConfig(sequence="H", qec="none", order=1, angles=[(0.3, 0.7)], **kw)


@pytest.fixture(scope="module")
def h_bundle():
    return ScenarioRunner.run_bundle([h_state_config()], jobs=1)


@pytest.fixture
def h_json(h_bundle):
    return json.loads(ReportWriter.to_json(h_bundle))


def test_state_report():
    (report,) = run_scenario(h_state_config())
    assert report.metric == "state"
    assert report.polynomial == "1 − 7px − 7py − 7pz"
    assert [t.monomial for t in report.terms] == ["1", "px", "py", "pz"]
    assert report.locations == 7
    assert report.acceptance[0].monomial == "1"


def test_gate_report():
    config = ScenarioConfig(sequence="PH", qec="none", order=1, metric="gate")
    (report,) = run_scenario(config)
    assert report.metric == "gate"
    assert report.alpha is None
    assert report.polynomial == "1 − 8px − 8py − 6pz"
    assert report.locations == 14


def test_both_metrics_state_reports_first():
    config = ScenarioConfig(sequence="H", qec="none", order=1, metric="both", angles=[(0.3, 0.7), (1.0, 0.2)])
    reports = run_scenario(config)
    assert [r.metric for r in reports] == ["state", "state", "gate"]


def test_angle_fit_report():
    config = ScenarioConfig(sequence="H", qec="none", order=1, angles=list(REPORT_GRID), fit_angles=True)
    _, fits = ScenarioRunner.run_scenario(config)
    (fit,) = fits
    assert fit.matches
    assert fit.coefficients["px"] == pytest.approx([-7.0, 0.0, 0.0], abs=1e-8)


@pytest.mark.parametrize(
    "config",
    [c for c in preset_scenarios("table1", order=2) if c.qec == "none"],
    ids=lambda c: c.label,
)
def test_exhaustive_oracle_check(config):
    config = config.model_copy(update={"metric": "state", "angles": [(0.3, 0.7)], "oracle": "exhaustive"})
    (report,) = run_scenario(config)
    assert report.oracle.method == "exhaustive"
    assert report.oracle.residual < 1e-4


@pytest.mark.slow
def test_monte_carlo_oracle_check_on_t():
    (config,) = [c for c in preset_scenarios("table2", order=1) if c.label == "T" and c.qec == "none"]
    config = config.model_copy(
        update={"metric": "state", "oracle": "monte-carlo", "oracle_rate": 0.005, "samples": 1500, "seed": 11}
    )
    (report,) = run_scenario(config)
    assert report.oracle.method == "monte-carlo"
    assert report.oracle.samples == 1500
    # the first-order polynomial misses about 0.01 at this rate
    assert report.oracle.residual <= 4 * report.oracle.stderr + 0.02


def test_presets():
    table1 = preset_scenarios("table1")
    assert [c.label for c in table1] == ["H", "H", "PH", "PH", "HPH", "HPH", "P-QEC-H"]
    assert [c.qec for c in table1[:2]] == ["none", "noisy"]
    assert table1[-1].interior == [1]
    table2 = preset_scenarios("table2")
    assert len(table2) == 11
    assert table2[-1].label == "P-QEC-T"
    perfect = preset_scenarios("perfect-qec", order=1)
    assert len(perfect) == 8
    assert {c.qec for c in perfect} == {"perfect"}
    assert {c.order for c in perfect} == {1}
    with pytest.raises(InputError):
        preset_scenarios("table3")
    with pytest.raises(ValidationError):
        preset_scenarios("table1", order=3)
    assert preset_scenarios("table1", order=3, allow_order_3=True)[0].order == 3


def test_bundle_metadata(h_bundle):
    assert h_bundle.conventions_sha256 == conventions_hash()
    assert len(conventions_hash()) == 64
    assert h_bundle.engine.strategy == "propagate"
    assert h_bundle.timings is None


def test_json_is_identical_across_job_counts():
    config = ScenarioConfig(sequence="PH", qec="none", order=1, metric="both", angles=[(0.3, 0.7)])
    serial = ReportWriter.to_json(ScenarioRunner.run_bundle([config], jobs=1))
    parallel = ReportWriter.to_json(ScenarioRunner.run_bundle([config], jobs=4))
    assert serial == parallel


@pytest.mark.slow
def test_table2_preset_is_identical_across_job_counts():
    configs = preset_scenarios("table2", order=1)
    serial = ReportWriter.to_json(ScenarioRunner.run_bundle(configs, jobs=1))
    parallel = ReportWriter.to_json(ScenarioRunner.run_bundle(configs, jobs=8))
    assert serial == parallel


def test_markdown_table(h_bundle):
    text = ReportWriter.render(h_bundle, "markdown")
    assert "| Sequence | No QEC |" in text
    assert "| H (α=0.3000, β=0.7000) | 1 − 7px − 7py − 7pz |" in text
    assert conventions_hash() in text


def test_csv_rows(h_bundle):
    rows = list(csv.reader(io.StringIO(ReportWriter.render(h_bundle, "csv"))))
    assert rows[0] == ["scenario", "metric", "monomial", "coefficient"]
    report = h_bundle.reports[0]
    assert [scenario_id(report), "state", "px", "-7"] in rows


def test_unknown_format(h_bundle):
    with pytest.raises(InputError):
        ReportWriter.render(h_bundle, "xml")


def test_json_loads_back(h_bundle, h_json):
    assert h_json["schema"] == "steanesim.report/1"
    assert load_bundle(ReportWriter.to_json(h_bundle)).reports[0].polynomial == "1 − 7px − 7py − 7pz"


def test_diff_of_identical_reports_is_empty(h_json):
    result = diff_reports(json.dumps(h_json), json.dumps(h_json))
    assert result.ok
    assert result.entries == []
    assert ReportWriter.diff_to_text(result) == "no differences\n"


def test_diff_within_and_beyond_tolerance(h_json):
    changed = json.loads(json.dumps(h_json))
    term = next(t for t in changed["reports"][0]["terms"] if t["monomial"] == "px")
    term["coefficient"] = -7.0000000001
    close = diff_reports(h_json, changed, tolerance=1e-6)
    assert close.ok
    assert [e.monomial for e in close.entries] == ["px"]

    term["coefficient"] = -6.0
    far = diff_reports(h_json, changed, tolerance=1e-6)
    assert not far.ok
    assert far.entries[0].delta == pytest.approx(1.0)
    assert "out of tolerance" in ReportWriter.diff_to_text(far)


def test_diff_counts_absent_terms_as_zero(h_json):
    changed = json.loads(json.dumps(h_json))
    changed["reports"][0]["terms"] = [t for t in changed["reports"][0]["terms"] if t["monomial"] != "pz"]
    (entry,) = diff_reports(h_json, changed).entries
    assert entry.monomial == "pz"
    assert entry.b is None
    assert entry.delta == pytest.approx(7.0)


def test_diff_lists_missing_reports(h_json):
    empty = dict(h_json, reports=[])
    result = diff_reports(h_json, empty)
    assert not result.ok
    assert len(result.missing) == 1
    assert "only in the first report" in result.missing[0]


@pytest.mark.parametrize(
    "source",
    ["not json", json.dumps({"schema": "other/1"}), json.dumps([1, 2]), json.dumps({"schema": "steanesim.report/1"})],
)
def test_bad_report_files(h_json, source):
    with pytest.raises(ReportSchemaError):
        diff_reports(source, h_json)
