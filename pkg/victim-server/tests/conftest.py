"""Shared fixtures: the reference checkpoint and an in-process test client."""

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from victim_server import create_app, load_model

REPO_ROOT = Path(__file__).resolve().parents[2]
PROTOCOL_DIR = REPO_ROOT / "protocol"
FIXTURES_PATH = PROTOCOL_DIR / "fixtures.json"


@pytest.fixture(scope="session")
def fixtures():
    with open(FIXTURES_PATH, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def reference_checkpoint(fixtures):
    return PROTOCOL_DIR / fixtures["model"]


@pytest.fixture(scope="session")
def served_model(reference_checkpoint):
    return load_model(reference_checkpoint)


@pytest.fixture(scope="session")
def client(served_model):
    with TestClient(create_app(served_model)) as c:
        yield c
