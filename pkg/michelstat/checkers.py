"""Properties checked on analysis results."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .analyzer import ALWAYS_FAIL, OWNER_DECREASE, Alarm, AnalysisResult
from .mtypes import MType, is_split_map

logger = logging.getLogger(__name__)

OWNER_ONLY_DECREASE = "owner-only-decrease"

PROVED = "proved"
ALARM = "alarm"
NOT_APPLICABLE = "not-applicable"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    property: str
    status: str
    alarms: tuple[Alarm, ...] = ()
    note: str = ""


@dataclass(frozen=True)
class FailureReport:
    entrypoints: dict[str, bool] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return bool(self.entrypoints) and all(self.entrypoints.values())


def has_owner_map(ty: MType) -> bool:
    if is_split_map(ty):
        return True
    return any(has_owner_map(arg) for arg in ty.args)


def check_owner_only_decrease(result: AnalysisResult) -> Verdict:
    """A user's balance may only decrease in calls made by that user.

    Needs the sender-split map abstraction; "proved" is only issued for the
    multi-call fixpoint, since the property ranges over every call sequence.
    """

    if not has_owner_map(result.script.storage_type):
        return Verdict(OWNER_ONLY_DECREASE, NOT_APPLICABLE, note="storage has no map(address, mutez)")
    if not result.config.sender_split:
        return Verdict(OWNER_ONLY_DECREASE, NOT_APPLICABLE, note="requires --sender-split")
    if result.decreases:
        logger.debug("%d possible non-owner decrease(s)", len(result.decreases))
        return Verdict(OWNER_ONLY_DECREASE, ALARM, tuple(result.decreases))
    if not result.multi_call:
        return Verdict(OWNER_ONLY_DECREASE, INCONCLUSIVE, note="single call only; rerun with --multi-call")
    return Verdict(OWNER_ONLY_DECREASE, PROVED)


def check_always_fail(result: AnalysisResult) -> FailureReport:
    """Entry points whose every execution reaches FAILWITH or a runtime error."""

    flags = {name: entry.always_fails for name, entry in result.entrypoints.items()}
    return FailureReport(flags)


def always_fail_alarms(result: AnalysisResult) -> list[Alarm]:
    report = check_always_fail(result)
    span = result.script.code_span
    if report.overall:
        return [Alarm(ALWAYS_FAIL, span, "all", "every entry point fails")]
    return [Alarm(ALWAYS_FAIL, span, name, "entry point always fails") for name, failing in report.entrypoints.items() if failing]


def all_alarms(result: AnalysisResult) -> list[Alarm]:
    """Runtime-error alarms, always-fail alarms and owner-decrease witnesses together."""

    alarms = list(result.alarms) + always_fail_alarms(result)
    if check_owner_only_decrease(result).status == ALARM:
        alarms.extend(result.decreases)
    return alarms


__all__ = [
    "OWNER_DECREASE",
    "OWNER_ONLY_DECREASE",
    "FailureReport",
    "Verdict",
    "all_alarms",
    "always_fail_alarms",
    "check_always_fail",
    "check_owner_only_decrease",
]
