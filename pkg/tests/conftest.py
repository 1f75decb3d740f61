import json
from pathlib import Path

import pytest

from figforge.synth import generate_mini_corpus


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory) -> Path:
    """Mini corpus generated once per session; returns its root dir."""
    root = tmp_path_factory.mktemp("mini_corpus")
    generate_mini_corpus(root, seed=0)
    return root


@pytest.fixture(scope="session")
def mini_ledger(mini_corpus) -> dict:
    return json.loads((mini_corpus / "ledger.json").read_text(encoding="utf-8"))
