from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from michelstat.typechecker import TypedScript
from strategies import load

settings.register_profile(
    "michelstat",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile(
    "thorough",
    max_examples=10_000,
    deadline=None,
    database=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much, HealthCheck.function_scoped_fixture],
)
settings.load_profile("michelstat")

CONTRACTS = Path(__file__).resolve().parent.parent / "contracts"


@pytest.fixture
def contracts_dir() -> Path:
    return CONTRACTS


@pytest.fixture
def contract():
    """Load a bundled contract by file name."""

    def _load(name: str) -> TypedScript:
        return load((CONTRACTS / name).read_text(encoding="utf-8"))

    return _load


@pytest.fixture
def sender() -> str:
    return "tz1alice"


@pytest.fixture
def other() -> str:
    return "tz1bob"
