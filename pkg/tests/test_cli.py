import json

import pytest

from steanesim.app.exceptions import DegenerateScenarioError
from steanesim.app.services.scenario_runner import ScenarioRunner, load_bundle
from steanesim.cli import EXIT_DEGENERATE, EXIT_DIFF, EXIT_INVALID, EXIT_OK, main

H_RUN = ["run", "--sequence", "H", "--qec", "none", "--order", "1", "--alpha", "0.3", "--beta", "0.7"]


@pytest.fixture
def h_report(tmp_path):
    path = tmp_path / "h.json"
    assert main(H_RUN + ["--format", "json", "--out", str(path)]) == EXIT_OK
    return path


def test_run_prints_markdown(capsys):
    assert main(H_RUN) == EXIT_OK
    assert "1 − 7px − 7py − 7pz" in capsys.readouterr().out


def test_run_writes_json_file(h_report):
    bundle = load_bundle(h_report.read_text(encoding="utf-8"))
    assert bundle.reports[0].polynomial == "1 − 7px − 7py − 7pz"


def test_config_file_with_flag_override(tmp_path, capsys):
    config = tmp_path / "scenarios.json"
    config.write_text(
        json.dumps({"scenarios": [{"sequence": "PH", "metric": "gate", "order": 2}], "format": "csv"}),
        encoding="utf-8",
    )
    assert main(["run", "--config", str(config), "--order", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("scenario,metric,monomial,coefficient")
    assert "PH|none,gate,pz,-6" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--sequence", "X"],
        ["run"],
        ["run", "--sequence", "H", "--order", "3"],
        ["run", "--sequence", "H", "--alpha", "0.1", "--alpha", "0.2", "--beta", "0.1", "--beta", "0.2", "--beta", "0.3"],
        ["preset", "table9"],
        ["launch"],
    ],
)
def test_invalid_input_exits_one(argv, capsys):
    assert main(argv) == EXIT_INVALID


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(bad)]) == EXIT_INVALID
    assert "not valid JSON" in capsys.readouterr().err


def test_degenerate_scenario_exits_two(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise DegenerateScenarioError("nothing accepted")

    monkeypatch.setattr(ScenarioRunner, "run_bundle", staticmethod(boom))
    assert main(H_RUN) == EXIT_DEGENERATE
    assert "nothing accepted" in capsys.readouterr().err


def test_diff_identical_reports(h_report, capsys):
    assert main(["diff", str(h_report), str(h_report)]) == EXIT_OK
    assert capsys.readouterr().out == "no differences\n"


def test_diff_out_of_tolerance(h_report, tmp_path, capsys):
    data = json.loads(h_report.read_text(encoding="utf-8"))
    for term in data["reports"][0]["terms"]:
        if term["monomial"] == "py":
            term["coefficient"] = -8.0
    other = tmp_path / "other.json"
    other.write_text(json.dumps(data), encoding="utf-8")
    assert main(["diff", str(h_report), str(other), "--format", "json"]) == EXIT_DIFF
    result = json.loads(capsys.readouterr().out)
    assert result["entries"][0]["monomial"] == "py"


def test_diff_of_non_report_file(h_report, tmp_path):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"schema": "something-else"}), encoding="utf-8")
    assert main(["diff", str(h_report), str(other)]) == EXIT_INVALID
