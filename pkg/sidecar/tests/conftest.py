import sys
from pathlib import Path

# Reuse the pipeline package's wire-protocol checks and recorded fixtures
# so both sides of the HTTP contract are validated by one definition.
PRIMARY_TESTS = Path(__file__).resolve().parents[2] / "tests"
sys.path.insert(0, str(PRIMARY_TESTS))

import pytest
from fastapi.testclient import TestClient

from vlcap_sidecar.app import create_app
from vlcap_sidecar.models import ModelRegistry


@pytest.fixture
def registry():
    return ModelRegistry(["mock"])


@pytest.fixture
def client(registry):
    return TestClient(create_app(registry))
