"""
Tests for the audit API
"""

import pytest
from fastapi.testclient import TestClient

from api.main import app
from src.simulation.config import SimConfig
from src.simulation.orchestrator import run_period


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def period():
    report = run_period(SimConfig(n_c=2, n_p=2, cycles=3, key_bits=1024, seed=2))
    ledger_text = "".join(f"{entry.to_line()}\n" for entry in report.ledger.entries())
    return report, ledger_text


def test_root_and_health(client):
    assert client.get("/").json()["message"] == "PA-Bill Audit API"
    health = client.get("/health").json()
    assert health["status"] == "healthy"
    assert health["limits"]["max_cycles"] == 48


def test_verify_untouched_ledger_and_finals(client, period):
    report, ledger_text = period
    response = client.post("/api/v1/ledger/verify", json={
        "ledger_text": ledger_text,
        "finals_text": "\n".join(report.final_lines()),
    })

    body = response.json()
    assert response.status_code == 200
    assert body["ok"]
    assert body["entries"] == len(report.ledger)
    assert body["finals_checked"] == 5
    assert body["finals_problems"] == []


def test_verify_reports_tampered_ledger(client, period):
    _, ledger_text = period
    lines = ledger_text.splitlines()
    lines[2], lines[3] = lines[3], lines[2]

    body = client.post("/api/v1/ledger/verify", json={"ledger_text": "\n".join(lines) + "\n"}).json()

    assert not body["ok"]
    assert body["bad_index"] == 2


def test_verify_reports_edited_final_line(client, period):
    report, ledger_text = period
    finals = report.final_lines()
    finals[-1] = "SUPPLIER,balance,1"

    body = client.post("/api/v1/ledger/verify", json={
        "ledger_text": ledger_text,
        "finals_text": "\n".join(finals),
    }).json()

    assert not body["ok"]
    assert len(body["finals_problems"]) == 1


def test_oracle_endpoint(client):
    response = client.post("/api/v1/oracle", json={
        "profile_text": "cycle,user_role,user_ordinal,committed_wh,real_wh\n0,C,0,1000,1200\n0,P,0,1000,1500\n",
        "prices": {"pi_p2p": 10, "pi_rt": 15, "pi_fit": 5},
    })

    body = response.json()
    assert response.status_code == 200
    assert body["final_lines"] == ["CONSUMER,0,12000", "PROSUMER,0,13500", "SUPPLIER,balance,-1500"]
    assert body["modes"] == {"SURPLUS": 1}
    assert body["supplier_balance"] == -1500


def test_oracle_rejects_bad_profile(client):
    response = client.post("/api/v1/oracle", json={"profile_text": "0,C,0,1000,1000\n0,P,0,900,900\n"})
    assert response.status_code == 422


def test_oracle_rejects_price_ordering(client):
    response = client.post("/api/v1/oracle", json={
        "profile_text": "0,C,0,1000,1200\n0,P,0,1000,1500\n",
        "prices": {"pi_p2p": 10, "pi_rt": 5, "pi_fit": 1},
    })
    assert response.status_code == 422


def test_simulate_endpoint(client):
    response = client.post("/api/v1/simulate", json={
        "cycles": 3,
        "seed": 4,
        "fault_plan": "1:P1:CORRUPT_STATEMENT:-50",
    })

    body = response.json()
    assert response.status_code == 200
    assert body["disputes"] == 1
    assert body["penalties"] == {"P1": 1000}
    assert abs(body["conservation_residual"]) <= body["rounding_bound"]
    assert len(body["final_lines"]) == 5
    assert set(body["mean_timings_ms"]) == {"individual_deviations", "total_deviations", "bills_and_revenues"}


def test_simulate_enforces_limits(client):
    assert client.post("/api/v1/simulate", json={"cycles": 500}).status_code == 422
    assert client.post("/api/v1/simulate", json={"key_bits": 512}).status_code == 422


def test_simulate_rejects_unknown_fault_user(client):
    response = client.post("/api/v1/simulate", json={"cycles": 3, "fault_plan": "1:C9:CORRUPT_INDEV"})
    assert response.status_code == 422
