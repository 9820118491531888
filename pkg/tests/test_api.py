"""HTTP surface tests.

Shallow on purpose: routes resolve, defaults verify, and library errors come
back as 400/422 with their error code.
"""
import numpy as np
import pytest

from fastapi.testclient import TestClient

from app.services import interchange


@pytest.fixture(scope="session")
def client():
    from app.main import app
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def test_status(client):
    res = client.get("/api/system/status")
    assert res.status_code == 200
    body = res.json()
    assert body["version"]
    assert body["settings"]["quad_krein"] == 16
    assert {c["name"] for c in body["environment"]["checks"]} >= {"numpy", "scipy"}


def test_verify_krein_defaults(client):
    res = client.post("/api/verify/krein", json={})
    assert res.status_code == 200
    body = res.json()
    assert body["identity"] == "krein"
    assert body["pass"] is True
    assert res.headers["cache-control"] == "no-store"


def test_verify_koplienko(client):
    res = client.post("/api/verify/koplienko", json={"instance": {"seed": 2, "N": 4}})
    assert res.status_code == 200
    assert res.json()["pass"] is True


def test_verify_dissipative(client):
    res = client.post("/api/verify/dissipative", json={"instance": {"N": 8, "n": 2, "scale": 0.1}})
    assert res.status_code == 200
    body = res.json()
    assert body["pass"] is True
    assert [r["identity"] for r in body["reports"]] == ["dissipative_krein", "dissipative_koplienko"]


def test_krein_measures(client):
    res = client.post("/api/ssm/krein", json={"instance": {"seed": 5, "N": 4}})
    assert res.status_code == 200
    body = res.json()
    assert body["n"] == 2 and body["dim"] == 4
    for m in body["measures"]:
        assert len(m["points"]) == len(m["weights"])
        assert m["total_variation"] <= m["trace_norm_bound"] * (1 + 1e-9) + 1e-9


def test_unknown_family_is_400(client):
    res = client.post("/api/verify/krein", json={"instance": {"family": "nope"}})
    assert res.status_code == 400
    assert res.json()["detail"]["code"] == "invalid_family"


def test_non_commuting_path_is_422(client):
    sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]])
    path_doc = {
        "base": [interchange.matrix_to_dict(np.diag([1.0, 2.0])), interchange.matrix_to_dict(sigma_x)],
        "direction": [interchange.matrix_to_dict(np.zeros((2, 2)))] * 2,
    }
    res = client.post("/api/verify/krein", json={"path_doc": interchange.json_safe(path_doc)})
    assert res.status_code == 422
    assert res.json()["detail"]["code"] == "not_commuting"


def test_koplienko_rejects_trig_function(client):
    doc = {"class": "trig", "arity": 2, "terms": [{"freq": [1.0, 0.0], "coeff": [1.0, 0.0]}]}
    res = client.post("/api/verify/koplienko", json={"instance": {"N": 4}, "function_doc": doc})
    assert res.status_code == 400
    assert res.json()["detail"]["code"] == "unsupported_class"


def test_request_validation(client):
    res = client.post("/api/verify/krein", json={"q": 1})
    assert res.status_code == 422


def test_suite_subset(client):
    res = client.post("/api/suite", json={"seed": 1, "only": ["ideals"]})
    assert res.status_code == 200
    body = res.json()
    assert body["pass"] is True
    assert [c["key"] for c in body["criteria"]] == ["ideals"]


def test_suite_unknown_criterion(client):
    res = client.post("/api/suite", json={"only": ["nope"]})
    assert res.status_code == 400
