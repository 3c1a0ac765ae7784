"""Shared protocol fixture suite driven against the server.

Every case in protocol/fixtures.json is exercised twice: once as an
individual parametrized test for precise failure reporting, and once
inside the aggregate conformance test that prints a verdict line.
"""

import json
from pathlib import Path

import pytest

FIXTURES_PATH = Path(__file__).resolve().parents[2] / "protocol" / "fixtures.json"
_FIXTURES = json.loads(FIXTURES_PATH.read_text(encoding="utf-8"))

# ----------------------------------------------------------------------
# case checkers
# ----------------------------------------------------------------------


def _check_health(client):
    response = client.get("/v1/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def _check_info(client):
    response = client.get("/v1/info")
    assert response.status_code == 200
    assert response.json() == _FIXTURES["info"]


def _check_predict_case(client, case):
    repeats = 2 if case.get("repeat") else 1
    previous = None
    for _ in range(repeats):
        response = client.post("/v1/predict", json={"inputs": case["inputs"]})
        assert response.status_code == 200, response.text
        payload = response.json()
        assert isinstance(payload["model_id"], str) and payload["model_id"]
        got = payload["probabilities"]
        expected = case["expected_probabilities"]
        assert len(got) == len(case["inputs"]) == len(expected)
        tolerance = case["tolerance"]
        for got_row, expected_row in zip(got, expected):
            assert len(got_row) == len(expected_row)
            for got_value, expected_value in zip(got_row, expected_row):
                assert abs(got_value - expected_value) <= tolerance
            assert abs(sum(got_row) - 1.0) <= 1e-5
        if previous is not None:
            for old_row, new_row in zip(previous, got):
                for old_value, new_value in zip(old_row, new_row):
                    assert abs(old_value - new_value) <= 1e-6
        previous = got


def _error_case_body(case):
    if "oversize_rows" in case:
        width = _FIXTURES["info"]["input_dim"]
        return json.dumps({"inputs": [[0.0] * width] * case["oversize_rows"]})
    if "raw_body" in case:
        return case["raw_body"]
    return json.dumps(case["body"])


def _check_error_case(client, case):
    response = client.post(
        "/v1/predict",
        content=_error_case_body(case),
        headers={"content-type": "application/json"},
    )
    assert response.status_code == case["status"], response.text
    payload = response.json()
    assert isinstance(payload.get("error"), str) and payload["error"]


# ----------------------------------------------------------------------
# individual cases
# ----------------------------------------------------------------------


def test_health_endpoint(client):
    _check_health(client)


def test_info_matches_fixture(client):
    _check_info(client)


@pytest.mark.parametrize(
    "case", _FIXTURES["predict_cases"], ids=lambda c: c["name"]
)
def test_predict_case(client, case):
    _check_predict_case(client, case)


@pytest.mark.parametrize(
    "case", _FIXTURES["error_cases"], ids=lambda c: c["name"]
)
def test_error_case(client, case):
    _check_error_case(client, case)


# ----------------------------------------------------------------------
# aggregate verdict
# ----------------------------------------------------------------------


def test_acceptance_protocol_conformance(client):
    """Run the entire shared fixture suite and report a single verdict."""
    failures = []

    def attempt(label, check, *args):
        try:
            check(client, *args)
        except AssertionError as exc:
            failures.append(f"{label}: {exc}")

    attempt("health", lambda c: _check_health(c))
    attempt("info", lambda c: _check_info(c))
    for case in _FIXTURES["predict_cases"]:
        attempt(f"predict/{case['name']}", _check_predict_case, case)
    for case in _FIXTURES["error_cases"]:
        attempt(f"error/{case['name']}", _check_error_case, case)

    total = 2 + len(_FIXTURES["predict_cases"]) + len(_FIXTURES["error_cases"])
    ok = not failures
    detail = (
        f"all {total} fixture cases conform"
        if ok
        else f"{len(failures)}/{total} cases failed; first: {failures[0]}"
    )
    print(f"[{'PASS' if ok else 'FAIL'}] protocol conformance: {detail}")
    assert ok, detail
