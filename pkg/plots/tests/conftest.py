import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def self_report_path():
    return FIXTURES / "self_agreement.json"


@pytest.fixture
def mixed_report_path():
    return FIXTURES / "mixed.json"


@pytest.fixture
def self_report(self_report_path):
    return json.loads(self_report_path.read_text())


@pytest.fixture
def mixed_report(mixed_report_path):
    return json.loads(mixed_report_path.read_text())
