"""Per-contract and corpus reports (pydantic models) and the analysis pipeline behind them."""

from __future__ import annotations

import logging
import time
from collections import Counter
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from pydantic import BaseModel, Field

from .analyzer import Alarm, AnalysisResult, AnalysisTimeout, Analyzer
from .checkers import all_alarms, check_always_fail, check_owner_only_decrease
from .domains import MUTEZ_OVERFLOW, SHIFT_OVERFLOW
from .memory import decompose
from .mtypes import MType
from .parser import MichelsonSyntaxError, parse, parse_data
from .settings import AnalysisConfig
from .typechecker import MichelsonTypeError, TypedScript, typecheck
from .values import DataError, from_data

logger = logging.getLogger(__name__)

CATEGORIES = (MUTEZ_OVERFLOW, SHIFT_OVERFLOW, "always-fail", "owner-decrease-violation")

EXIT_CLEAN = 0
EXIT_ALARMS = 1
EXIT_ERROR = 2


class AlarmRecord(BaseModel):
    category: str
    line: int
    col: int
    entrypoint: str
    detail: str = ""

    @classmethod
    def from_alarm(cls, alarm: Alarm) -> "AlarmRecord":
        return cls(
            category=alarm.category,
            line=alarm.span.line,
            col=alarm.span.col,
            entrypoint=alarm.entrypoint,
            detail=alarm.detail,
        )


class VerdictRecord(BaseModel):
    property: str
    status: str
    note: str = ""


class ContractReport(BaseModel):
    contract: str
    status: str = Field(..., description="ok, alarms, error or timeout")
    alarms: list[AlarmRecord] = Field(default_factory=list)
    verdicts: list[VerdictRecord] = Field(default_factory=list)
    always_fails: dict[str, bool] = Field(default_factory=dict)
    invariant: str = ""
    warnings: list[str] = Field(default_factory=list)
    time_ms: float = 0.0
    error: Optional[str] = None

    @property
    def exit_code(self) -> int:
        if self.status in {"error", "timeout"}:
            return EXIT_ERROR
        return EXIT_ALARMS if self.alarms else EXIT_CLEAN


class CorpusReport(BaseModel):
    contracts: list[ContractReport] = Field(default_factory=list)
    analyzed: int = 0
    errors: int = 0
    alarm_counts: dict[str, int] = Field(default_factory=dict)
    contracts_with_alarm: dict[str, int] = Field(default_factory=dict)
    min_time_ms: float = 0.0
    max_time_ms: float = 0.0
    avg_time_ms: float = 0.0

    @property
    def exit_code(self) -> int:
        return max((report.exit_code for report in self.contracts), default=EXIT_CLEAN)


def render_storage(values: Mapping[tuple[str, ...], Any] | None, ty: MType, split: bool) -> str:
    """One line per storage leaf: ``storage.<path>: <abstract value>``."""

    if values is None:
        return "⊥ (no call returns normally)"
    lines = []
    for path, _ in decompose(ty, split):
        name = ".".join(("storage",) + path)
        lines.append(f"{name}: {values[path]}")
    return "\n".join(lines)


def build_report(name: str, result: AnalysisResult, elapsed_ms: float) -> ContractReport:
    alarms = all_alarms(result)
    owner = check_owner_only_decrease(result)
    failures = check_always_fail(result)
    verdicts = [VerdictRecord(property=owner.property, status=owner.status, note=owner.note)]
    verdicts.append(VerdictRecord(property="always-fail", status="alarm" if failures.overall else "clear"))
    return ContractReport(
        contract=name,
        status="alarms" if alarms else "ok",
        alarms=[AlarmRecord.from_alarm(alarm) for alarm in alarms],
        verdicts=verdicts,
        always_fails=failures.entrypoints,
        invariant=render_storage(result.invariant, result.script.storage_type, result.config.sender_split),
        warnings=result.warnings,
        time_ms=round(elapsed_ms, 3),
    )


def load_script(text: str) -> TypedScript:
    return typecheck(parse(text))


def parse_storage(literal: str | None, script: TypedScript) -> Any:
    if literal is None:
        return None
    return from_data(parse_data(literal), script.storage_type)


def analyze_source(
    text: str,
    name: str,
    config: AnalysisConfig,
    storage: str | None = None,
    world: Mapping[str, TypedScript] | None = None,
) -> ContractReport:
    """Parse, typecheck and analyze one contract; never raises on bad input."""

    started = time.perf_counter()
    try:
        script = load_script(text)
        result = Analyzer(script, config, world).analyze(parse_storage(storage, script))
    except AnalysisTimeout as exc:
        logger.warning("Timeout while analyzing %s: %s", name, exc)
        return _failed(name, "timeout", str(exc), started)
    except (MichelsonSyntaxError, MichelsonTypeError, DataError) as exc:
        logger.info("Rejected %s: %s", name, exc)
        return _failed(name, "error", str(exc), started)
    return build_report(name, result, (time.perf_counter() - started) * 1000)


def analyze_path(path: Path, config: AnalysisConfig, storage: str | None = None) -> ContractReport:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        logger.error("Cannot read %s: %s", path, exc)
        return ContractReport(contract=str(path), status="error", error=str(exc))
    try:
        return analyze_source(text, str(path), config, storage)
    except Exception as exc:  # noqa: BLE001 - one contract must not abort a batch
        logger.exception("Analysis of %s crashed", path)
        return ContractReport(contract=str(path), status="error", error=f"{type(exc).__name__}: {exc}")


def _failed(name: str, status: str, message: str, started: float) -> ContractReport:
    return ContractReport(
        contract=name,
        status=status,
        error=message,
        time_ms=round((time.perf_counter() - started) * 1000, 3),
    )


def aggregate(reports: Iterable[ContractReport]) -> CorpusReport:
    """Alarm counts per category and timing statistics over successful analyses."""

    reports = list(reports)
    analyzed = [report for report in reports if report.status not in {"error", "timeout"}]
    counts: Counter[str] = Counter()
    contracts: Counter[str] = Counter()
    for report in analyzed:
        categories = [alarm.category for alarm in report.alarms]
        counts.update(categories)
        contracts.update(set(categories))
    times = [report.time_ms for report in analyzed]
    return CorpusReport(
        contracts=reports,
        analyzed=len(analyzed),
        errors=len(reports) - len(analyzed),
        alarm_counts={category: counts.get(category, 0) for category in CATEGORIES},
        contracts_with_alarm={category: contracts.get(category, 0) for category in CATEGORIES},
        min_time_ms=min(times, default=0.0),
        max_time_ms=max(times, default=0.0),
        avg_time_ms=round(sum(times) / len(times), 3) if times else 0.0,
    )


def format_contract(report: ContractReport) -> str:
    lines = [f"{report.contract}: {report.status} ({report.time_ms:.1f} ms)"]
    if report.error:
        lines.append(f"  error: {report.error}")
        return "\n".join(lines)
    for alarm in report.alarms:
        detail = f" ({alarm.detail})" if alarm.detail else ""
        lines.append(f"  {alarm.line}:{alarm.col} {alarm.category} in {alarm.entrypoint}{detail}")
    for verdict in report.verdicts:
        note = f" - {verdict.note}" if verdict.note else ""
        lines.append(f"  {verdict.property}: {verdict.status}{note}")
    for warning in report.warnings:
        lines.append(f"  warning: {warning}")
    if report.invariant:
        lines.append("  storage invariant:")
        lines.extend(f"    {line}" for line in report.invariant.splitlines())
    return "\n".join(lines)


def format_corpus(report: CorpusReport) -> str:
    lines = [f"analyzed: {report.analyzed}  errors: {report.errors}"]
    width = max(len(category) for category in CATEGORIES)
    for category in CATEGORIES:
        lines.append(
            f"  {category:<{width}}  alarms: {report.alarm_counts.get(category, 0):>4}"
            f"  contracts: {report.contracts_with_alarm.get(category, 0):>4}"
        )
    lines.append(
        f"  time (ms): min {report.min_time_ms:.1f}  max {report.max_time_ms:.1f}  avg {report.avg_time_ms:.1f}"
    )
    return "\n".join(lines)
