from __future__ import annotations

import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()

MUTEZ_MAX = 2**63 - 1
DOMAIN_CHOICES = ("intv", "intv+exp")


def _getenv(*names: str, default: str | None = None) -> str | None:
    for name in names:
        value = os.getenv(name)
        if value is not None:
            return value
    return default


@dataclass
class Settings:
    """Process-wide defaults read from the environment."""

    log_level: str = (_getenv("MICHELSTAT_LOG") or "WARNING").upper()
    domains: str = (_getenv("MICHELSTAT_DOMAINS") or "intv+exp").lower()
    timeout: float = float(_getenv("MICHELSTAT_TIMEOUT") or "60")
    jobs: int = int(_getenv("MICHELSTAT_JOBS") or "1")
    widening_delay: int = int(_getenv("MICHELSTAT_WIDENING_DELAY") or "1")
    unroll_limit: int = int(_getenv("MICHELSTAT_UNROLL") or "8")
    self_address: str = _getenv("MICHELSTAT_SELF_ADDRESS") or "KT1SELF"

    def __post_init__(self) -> None:
        if self.log_level not in getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))():
            raise ValueError(
                f"Unsupported MICHELSTAT_LOG='{self.log_level}'. "
                "Use DEBUG, INFO, WARNING or ERROR."
            )
        if self.domains not in DOMAIN_CHOICES:
            raise ValueError(
                f"Unsupported MICHELSTAT_DOMAINS='{self.domains}'. Use 'intv' or 'intv+exp'."
            )
        if self.timeout <= 0:
            raise ValueError("MICHELSTAT_TIMEOUT must be a positive number of seconds.")
        if self.jobs == 0:
            raise ValueError("MICHELSTAT_JOBS must be a positive integer or -1 for all cores.")
        if self.widening_delay < 0 or self.unroll_limit < 0:
            raise ValueError("MICHELSTAT_WIDENING_DELAY and MICHELSTAT_UNROLL must be >= 0.")


@dataclass
class AnalysisConfig:
    """Knobs of one analysis run."""

    domains: str = "intv+exp"
    multi_call: bool = False
    sender_split: bool = False
    arbitrary_storage: bool = False
    narrow: int = 0
    max_amount: int = MUTEZ_MAX
    widening_delay: int = 1
    unroll_limit: int = 8
    timeout: float | None = None
    sym_depth_cap: int = 16
    const_set_cap: int = 8
    self_address: str = "KT1SELF"
    max_iterations: int = 200

    def __post_init__(self) -> None:
        if self.domains not in DOMAIN_CHOICES:
            raise ValueError(f"Unknown domain combination '{self.domains}'.")
        if self.narrow < 0:
            raise ValueError("narrow must be zero or a positive integer.")
        if not 0 <= self.max_amount <= MUTEZ_MAX:
            raise ValueError(f"max_amount must lie in [0, {MUTEZ_MAX}].")
        if self.timeout is not None and self.timeout <= 0:
            raise ValueError("timeout must be positive.")
        if self.widening_delay < 0 or self.unroll_limit < 0:
            raise ValueError("widening_delay and unroll_limit must be >= 0.")

    @property
    def symbolic(self) -> bool:
        return self.domains == "intv+exp"

    @classmethod
    def from_settings(cls, **overrides: object) -> "AnalysisConfig":
        base = {
            "domains": settings.domains,
            "widening_delay": settings.widening_delay,
            "unroll_limit": settings.unroll_limit,
            "timeout": settings.timeout,
            "self_address": settings.self_address,
        }
        base.update(overrides)
        return cls(**base)  # type: ignore[arg-type]


settings = Settings()
