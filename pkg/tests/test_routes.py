import json

import pytest
from fastapi.testclient import TestClient

from main import app

H_SCENARIO = {"sequence": "H", "qec": "none", "order": 1, "angles": [[0.3, 0.7]]}


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def h_report(client):
    response = client.post("/api/run", json={"scenarios": [H_SCENARIO]})
    assert response.status_code == 200
    return response.json()


def test_root(client):
    assert client.get("/").json()["health"] == "/api/health"


def test_health(client):
    body = client.get("/api/health").json()
    assert body["status"] == "healthy"
    assert len(body["conventions_sha256"]) == 64


def test_run(h_report):
    assert h_report["schema"] == "steanesim.report/1"
    assert h_report["reports"][0]["polynomial"] == "1 − 7px − 7py − 7pz"
    assert "timings" not in h_report


def test_run_rejects_bad_scenarios(client):
    response = client.post("/api/run", json={"scenarios": [{"sequence": "X"}]})
    assert response.status_code == 422


def test_unknown_preset(client):
    assert client.get("/api/presets/table9").status_code == 404


def test_preset_with_bad_order(client):
    assert client.get("/api/presets/table1", params={"order": 3}).status_code == 400


def _files(a: str, b: str):
    return {"a": ("a.json", a, "application/json"), "b": ("b.json", b, "application/json")}


def test_diff_identical(client, h_report):
    text = json.dumps(h_report)
    response = client.post("/api/diff", files=_files(text, text))
    assert response.status_code == 200
    body = response.json()
    assert body["success"] and body["ok"]
    assert body["diff"]["entries"] == []


def test_diff_with_tolerance(client, h_report):
    changed = json.loads(json.dumps(h_report))
    changed["reports"][0]["terms"][1]["coefficient"] += 1e-8
    response = client.post(
        "/api/diff", files=_files(json.dumps(h_report), json.dumps(changed)), data={"tolerance": "1e-6"}
    )
    body = response.json()
    assert body["ok"]
    assert len(body["diff"]["entries"]) == 1


def test_diff_rejects_garbage(client, h_report):
    response = client.post("/api/diff", files=_files(json.dumps(h_report), "not json"))
    assert response.status_code == 400
