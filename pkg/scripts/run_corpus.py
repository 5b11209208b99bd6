#!/usr/bin/env python3
"""Analyze the bundled micro-corpus under each domain configuration.

Steps performed:
1. Runs `michelstat corpus` once per configuration (intervals alone, then
   intervals with symbolic expressions and equalities).
2. Collects the JSON reports and writes them into one artifact.
3. Prints a per-category comparison table.

Example:
    ./scripts/run_corpus.py \\
        --corpus contracts/corpus \\
        --artifact dist/corpus_report.json \\
        --jobs 4
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

CONFIGURATIONS = {
    "intv": ["--domains", "intv"],
    "intv+exp": ["--domains", "intv+exp"],
    "intv+exp/arbitrary": ["--domains", "intv+exp", "--arbitrary-storage"],
}


def run_corpus(corpus: Path, flags: list[str], jobs: int, timeout: float) -> dict:
    cmd: list[str] = [
        sys.executable,
        "-m",
        "michelstat.cli",
        "corpus",
        str(corpus),
        "--format",
        "json",
        "--jobs",
        str(jobs),
        "--timeout",
        str(timeout),
        *flags,
    ]
    completed = subprocess.run(cmd, capture_output=True, text=True)
    # Exit code 1 only means alarms were found.
    if completed.returncode not in {0, 1}:
        raise SystemExit(f"corpus run failed ({completed.returncode}):\n{completed.stderr}")
    return json.loads(completed.stdout)


def print_table(results: dict[str, dict]) -> None:
    categories: list[str] = []
    for report in results.values():
        categories.extend(c for c in report["alarm_counts"] if c not in categories)
    width = max(len(c) for c in categories)
    print(f"{'category':<{width}}  " + "  ".join(f"{name:>20}" for name in results))
    for category in categories:
        cells = [f"{report['contracts_with_alarm'].get(category, 0):>20}" for report in results.values()]
        print(f"{category:<{width}}  " + "  ".join(cells))
    times = [f"{report['avg_time_ms']:>17.1f} ms" for report in results.values()]
    print(f"{'avg time':<{width}}  " + "  ".join(times))


def main() -> None:
    parser = argparse.ArgumentParser(description="Run the Michelson analyzer over a contract corpus.")
    parser.add_argument("--corpus", default=Path("contracts/corpus"), type=Path, help="Directory of .tz files")
    parser.add_argument(
        "--artifact",
        default=Path("dist/corpus_report.json"),
        type=Path,
        help="Where to write the combined JSON report",
    )
    parser.add_argument("--jobs", type=int, default=1, help="Parallel analyses per run")
    parser.add_argument("--timeout", type=float, default=60.0, help="Seconds allowed per contract")
    parser.add_argument(
        "--config",
        action="append",
        choices=sorted(CONFIGURATIONS),
        help="Only run the given configuration (can be used multiple times)",
    )
    args = parser.parse_args()

    corpus: Path = args.corpus
    if not corpus.is_dir():
        raise SystemExit(f"Corpus directory not found at {corpus}.")

    results: dict[str, dict] = {}
    for name in args.config or list(CONFIGURATIONS):
        print(f"Analyzing {corpus} with {name} ...")
        results[name] = run_corpus(corpus, CONFIGURATIONS[name], args.jobs, args.timeout)

    artifact: Path = args.artifact
    artifact.parent.mkdir(parents=True, exist_ok=True)
    artifact.write_text(json.dumps(results, indent=2, ensure_ascii=False), encoding="utf-8")
    print(f"Report written to {artifact.resolve()}\n")
    print_table(results)


if __name__ == "__main__":
    main()
