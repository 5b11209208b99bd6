from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from joblib import Parallel, delayed
from tqdm import tqdm

from .interpreter import CallContext, ContractFailure, ExecutionLimit, run_contract
from .parser import MichelsonSyntaxError, parse_data
from .report import (
    EXIT_ALARMS,
    EXIT_CLEAN,
    EXIT_ERROR,
    ContractReport,
    aggregate,
    analyze_path,
    format_contract,
    format_corpus,
    load_script,
)
from .settings import DOMAIN_CHOICES, MUTEZ_MAX, AnalysisConfig, settings
from .typechecker import MichelsonTypeError
from .values import DataError, format_operation, format_value, from_data

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """An analysis configuration plus what to analyze and how to print it."""

    paths: list[Path]
    analysis: AnalysisConfig
    storage: str | None = None
    output: str = "text"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.output not in {"text", "json"}:
            raise ValueError(f"Unknown output format '{self.output}'. Use 'text' or 'json'.")


def configure_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run_config(args: argparse.Namespace, paths: list[Path]) -> RunConfig:
    analysis = AnalysisConfig.from_settings(
        domains=args.domains,
        multi_call=args.multi_call,
        sender_split=args.sender_split,
        arbitrary_storage=args.arbitrary_storage,
        narrow=args.narrow,
        max_amount=args.max_amount,
        timeout=args.timeout,
        **({"widening_delay": args.widening_delay} if args.widening_delay is not None else {}),
    )
    return RunConfig(paths, analysis, storage=args.storage, output=args.format, jobs=args.jobs)


def command_analyze(args: argparse.Namespace) -> int:
    config = run_config(args, [Path(p) for p in args.files])
    reports = [analyze_path(path, config.analysis, config.storage) for path in config.paths]
    if config.output == "json":
        print(json.dumps([report.model_dump(mode="json") for report in reports], indent=2, ensure_ascii=False))
    else:
        print("\n\n".join(format_contract(report) for report in reports))
    return max((report.exit_code for report in reports), default=EXIT_CLEAN)


def command_corpus(args: argparse.Namespace) -> int:
    directory = Path(args.directory).expanduser().resolve()
    if not directory.is_dir():
        print(f"Corpus directory not found: {directory}", file=sys.stderr)
        return EXIT_ERROR
    paths = sorted(directory.glob("*.tz"))
    config = run_config(args, paths)
    logger.info("Analyzing %d contract(s) from %s with %d job(s)", len(paths), directory, config.jobs)
    reports: list[ContractReport] = Parallel(n_jobs=config.jobs)(
        delayed(analyze_path)(path, config.analysis, config.storage)
        for path in tqdm(paths, desc="Analyzing contracts", disable=not paths)
    )
    corpus = aggregate(reports)
    if config.output == "json":
        print(corpus.model_dump_json(indent=2))
    else:
        print("\n".join(format_contract(report) for report in corpus.contracts))
        print(format_corpus(corpus))
    return corpus.exit_code


def command_exec(args: argparse.Namespace) -> int:
    try:
        script = load_script(Path(args.file).read_text(encoding="utf-8"))
        if args.entrypoint == "default" and not any(e.name == "default" for e in script.entrypoints):
            arg_type = script.parameter_type
        else:
            arg_type = script.entrypoint(args.entrypoint).type
        arg = from_data(parse_data(args.arg), arg_type)
        storage = from_data(parse_data(args.storage), script.storage_type)
    except (OSError, MichelsonSyntaxError, MichelsonTypeError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    ctx = CallContext(
        sender=args.sender,
        source=args.source or args.sender,
        amount=args.amount,
        balance=args.balance,
        now=args.now,
        self_address=settings.self_address,
    )
    try:
        operations, new_storage = run_contract(script, args.entrypoint, arg, storage, ctx)
    except ContractFailure as exc:
        print(f"failure: {exc.describe()}")
        return EXIT_ALARMS
    except ExecutionLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rendered_ops = "[" + ", ".join(format_operation(op) for op in operations) + "]"
    print(f"({rendered_ops}, {format_value(new_storage, script.storage_type)})")
    return EXIT_CLEAN


def _add_analysis_flags(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--domains", choices=DOMAIN_CHOICES, default=settings.domains, help="Abstract domains to combine")
    cmd.add_argument("--multi-call", action="store_true", help="Compute a storage invariant over any sequence of calls")
    cmd.add_argument("--sender-split", action="store_true", help="Split map(address, mutez) on the caller's key")
    cmd.add_argument("--arbitrary-storage", action="store_true", help="Start from any storage instead of the default one")
    cmd.add_argument("--storage", help="Initial storage literal")
    cmd.add_argument("--narrow", type=int, default=0, help="Decreasing iterations after each widened fixpoint")
    cmd.add_argument("--max-amount", type=int, default=MUTEZ_MAX, help="Upper bound of AMOUNT in mutez")
    cmd.add_argument("--widening-delay", type=int, help="Plain joins before widening starts")
    cmd.add_argument("--timeout", type=float, default=settings.timeout, help="Seconds allowed per contract")
    cmd.add_argument("--format", choices=("text", "json"), default="text", help="Report format")
    cmd.add_argument("--jobs", type=int, default=settings.jobs, help="Parallel analyses (-1 for all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="michelstat", description="Static analyzer for Michelson contracts")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: MICHELSTAT_LOG)")
    subparsers = parser.add_subparsers(dest="command")

    analyze_cmd = subparsers.add_parser("analyze", help="Analyze one or more contracts")
    analyze_cmd.add_argument("files", nargs="+", help="Michelson source files (.tz)")
    _add_analysis_flags(analyze_cmd)
    analyze_cmd.set_defaults(func=command_analyze)

    corpus_cmd = subparsers.add_parser("corpus", help="Analyze every .tz file of a directory and aggregate alarms")
    corpus_cmd.add_argument("directory", help="Directory containing .tz files")
    _add_analysis_flags(corpus_cmd)
    corpus_cmd.set_defaults(func=command_corpus)

    exec_cmd = subparsers.add_parser("exec", help="Run one call with the reference interpreter")
    exec_cmd.add_argument("file", help="Michelson source file")
    exec_cmd.add_argument("--entrypoint", default="default", help="Entry point name")
    exec_cmd.add_argument("--arg", required=True, help="Argument literal")
    exec_cmd.add_argument("--storage", required=True, help="Storage literal")
    exec_cmd.add_argument("--sender", default="tz1SENDER", help="SENDER address")
    exec_cmd.add_argument("--source", help="SOURCE address (defaults to the sender)")
    exec_cmd.add_argument("--amount", type=int, default=0, help="AMOUNT in mutez")
    exec_cmd.add_argument("--balance", type=int, default=0, help="BALANCE in mutez")
    exec_cmd.add_argument("--now", type=int, default=0, help="NOW as seconds since the epoch")
    exec_cmd.set_defaults(func=command_exec)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_CLEAN

    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
