import pytest
from fastapi.testclient import TestClient

from figforge_sidecar.app import create_app


@pytest.fixture(scope="session")
def client() -> TestClient:
    return TestClient(create_app(mode="stub"))
