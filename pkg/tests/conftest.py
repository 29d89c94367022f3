from pathlib import Path

import pytest

from data_loader import load_findings, load_model
from taxonomy import load_catalog

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def catalog():
    return load_catalog()


@pytest.fixture
def token_vault_model():
    return load_model(FIXTURES / "token_vault_model.json")


@pytest.fixture
def token_vault_findings():
    return load_findings(FIXTURES / "token_vault_findings.jsonl")


@pytest.fixture
def two_quarter_findings():
    return load_findings(FIXTURES / "two_quarter_findings.jsonl")
