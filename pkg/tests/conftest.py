from __future__ import annotations

import json
from pathlib import Path

import pytest

from cape.graph import parse_graph
from cape.cpl.policy import parse_policy

TESTS_DIR = Path(__file__).resolve().parent
GOLDEN_DIR = TESTS_DIR / "golden"
FIXTURES_DIR = TESTS_DIR / "fixtures"
REPO_ROOT = TESTS_DIR.parent
PACKS_DIR = REPO_ROOT / "packs"

CALC_GRAPH_DOC = (GOLDEN_DIR / "calc_graph.json").read_text(encoding="utf-8")
CALC_POLICY_DOC = (GOLDEN_DIR / "calc_matches.json").read_text(encoding="utf-8")


@pytest.fixture
def calc_graph():
    return parse_graph(CALC_GRAPH_DOC)


@pytest.fixture
def calc_policy():
    return parse_policy(CALC_POLICY_DOC)


@pytest.fixture
def golden_dir():
    return GOLDEN_DIR


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def packs_dir():
    return PACKS_DIR


def load_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))
