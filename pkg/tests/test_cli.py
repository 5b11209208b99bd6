from __future__ import annotations

import json

import pytest

from michelstat.cli import RunConfig, main
from michelstat.report import EXIT_ALARMS, EXIT_CLEAN, EXIT_ERROR
from michelstat.settings import AnalysisConfig

ACCUMULATOR = "parameter nat; storage nat; code { UNPAIR; ADD; NIL operation; PAIR }"


def test_exec_prints_operations_and_storage(contracts_dir, capsys):
    code = main(["exec", str(contracts_dir / "accumulator.tz"), "--arg", "3", "--storage", "4"])
    assert code == EXIT_CLEAN
    assert capsys.readouterr().out.strip() == "([], 7)"


def test_exec_reports_failures(contracts_dir, capsys):
    code = main(
        [
            "exec",
            str(contracts_dir / "wallet_fixed.tz"),
            "--entrypoint",
            "withdraw",
            "--arg",
            'Pair 30 "tz1alice"',
            "--storage",
            '{ Elt "tz1alice" 100 }',
            "--sender",
            "tz1bob",
        ]
    )
    assert code == EXIT_ALARMS
    assert capsys.readouterr().out.startswith('failure: failwith "unauthorized" at ')


def test_exec_rejects_bad_literals(contracts_dir, capsys):
    code = main(["exec", str(contracts_dir / "accumulator.tz"), "--arg=-1", "--storage", "4"])
    assert code == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_clean_contract_exits_zero(contracts_dir, capsys):
    path = contracts_dir / "compare.tz"
    assert main(["analyze", str(path)]) == EXIT_CLEAN
    assert f"{path}: ok (" in capsys.readouterr().out


def test_alarms_exit_one(contracts_dir, capsys):
    assert main(["analyze", "--domains", "intv", str(contracts_dir / "compare.tz")]) == EXIT_ALARMS
    assert "mutez-overflow in default" in capsys.readouterr().out


def test_storage_literal_seeds_the_analysis(tmp_path, capsys):
    path = tmp_path / "accumulator.tz"
    path.write_text(ACCUMULATOR, encoding="utf-8")
    assert main(["analyze", "--storage", "5", str(path)]) == EXIT_CLEAN
    assert "storage: [5, +oo]" in capsys.readouterr().out


def test_json_report_carries_the_owner_verdict(contracts_dir, capsys):
    code = main(
        ["analyze", "--multi-call", "--sender-split", "--format", "json", str(contracts_dir / "wallet_unfixed.tz")]
    )
    assert code == EXIT_ALARMS
    (report,) = json.loads(capsys.readouterr().out)
    verdicts = {verdict["property"]: verdict["status"] for verdict in report["verdicts"]}
    assert verdicts["owner-only-decrease"] == "alarm"
    assert "owner-decrease-violation" in {alarm["category"] for alarm in report["alarms"]}


def test_corpus_counts_alarms_per_category(contracts_dir, capsys):
    code = main(["corpus", str(contracts_dir / "corpus"), "--format", "json", "--jobs", "1"])
    assert code == EXIT_ALARMS
    corpus = json.loads(capsys.readouterr().out)
    assert corpus["analyzed"] == 12
    assert corpus["errors"] == 0
    assert corpus["alarm_counts"] == {
        "mutez-overflow": 3,
        "shift-overflow": 2,
        "always-fail": 2,
        "owner-decrease-violation": 0,
    }
    assert corpus["contracts_with_alarm"]["mutez-overflow"] == 3


def test_unparsable_contracts_are_counted_as_errors(tmp_path, capsys):
    (tmp_path / "good.tz").write_text(ACCUMULATOR, encoding="utf-8")
    (tmp_path / "broken.tz").write_text("parameter nat; storage", encoding="utf-8")
    (tmp_path / "ill_typed.tz").write_text("parameter nat; storage nat; code { ADD }", encoding="utf-8")
    code = main(["corpus", str(tmp_path), "--format", "json", "--jobs", "1"])
    assert code == EXIT_ERROR
    corpus = json.loads(capsys.readouterr().out)
    assert (corpus["analyzed"], corpus["errors"]) == (1, 2)
    statuses = {report["contract"].rsplit("/", 1)[-1]: report["status"] for report in corpus["contracts"]}
    assert statuses == {"broken.tz": "error", "good.tz": "ok", "ill_typed.tz": "error"}


def test_missing_corpus_directory(tmp_path, capsys):
    assert main(["corpus", str(tmp_path / "nowhere")]) == EXIT_ERROR
    assert "not found" in capsys.readouterr().err


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_CLEAN
    assert "usage: michelstat" in capsys.readouterr().out


def test_run_config_rejects_unknown_formats():
    with pytest.raises(ValueError, match="Unknown output format"):
        RunConfig([], AnalysisConfig(), output="xml")
