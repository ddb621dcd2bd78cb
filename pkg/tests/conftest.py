from __future__ import annotations

from pathlib import Path

import pytest

from fident.graph import CausalGraph, parse_graph

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load(name: str) -> CausalGraph:
    return parse_graph((FIXTURES / f"{name}.cg").read_text())


@pytest.fixture
def fixture_graph():
    return load


# criterion number -> result line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
