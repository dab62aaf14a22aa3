from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from memnet.service import create_app

CONFIGS = Path("configs")


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def text(name):
    return (CONFIGS / name).read_text()


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"


def test_check_reference_circuit(client):
    resp = client.post("/check", json={
        "netlist": text("rc_memristor.net"),
        "device_config": text("device_smoke.cfg"),
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["ok"]
    assert body["no_li_cutset"] and body["no_cv_loop"]
    assert body["decoupled"]
    assert body["consistent"]


def test_check_counterexample_reports_witness(client):
    resp = client.post("/check", json={
        "netlist": text("li_cutset.net"),
        "device_config": text("device_smoke.cfg"),
    })
    body = resp.json()
    assert not body["ok"]
    assert not body["no_li_cutset"]
    assert body["cutset_witness"] is not None


def test_check_inconsistent_state_flagged(client):
    resp = client.post("/check", json={
        "netlist": text("rc_memristor.net"),
        "device_config": text("device_smoke.cfg"),
        "x0": [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
    })
    body = resp.json()
    assert not body["ok"]
    assert body["consistent"] is False
    repaired = client.post("/check", json={
        "netlist": text("rc_memristor.net"),
        "device_config": text("device_smoke.cfg"),
        "x0": [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        "repair": True,
    }).json()
    assert repaired["ok"]
    assert repaired["repaired_x0"] is not None


def test_check_bad_netlist_is_422(client):
    resp = client.post("/check", json={
        "netlist": "R r1 1\n",
        "device_config": text("device_smoke.cfg"),
    })
    assert resp.status_code == 422
    assert "line 1" in resp.json()["detail"]


def test_run_drive_mode(client):
    resp = client.post("/run", json={
        "device_config": text("device_smoke.cfg"),
        "dt": 1e-3,
        "t_end": 5e-3,
        "mode": "drive",
        "drive": "SIN:0.2,10.0",
    })
    assert resp.status_code == 200
    body = resp.json()
    csv = body["files"]["timeseries.csv"]
    assert csv.startswith("t,ID1,ID2,")
    assert len(csv.strip().split("\n")) == 6
    assert body["conservation"]["max_charge_imbalance"] <= 1e-10


def test_run_coupled_mode(client):
    resp = client.post("/run", json={
        "device_config": text("device_equilibrium.cfg"),
        "netlist": text("zero_source.net"),
        "dt": 1e-3,
        "t_end": 5e-3,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["summary"]["mode"] == "coupled"
    assert body["summary"]["nodes"] == 4


def test_steady_endpoint(client):
    resp = client.post("/steady", json={
        "device_config": text("device_equilibrium.cfg"),
        "bias": [0.0, 0.0],
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["converged"]
    assert body["fields"].split("\n")[1] == "n"
