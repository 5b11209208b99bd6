from __future__ import annotations

import math

import pytest

from michelstat.analyzer import AnalysisTimeout, Analyzer, analyze
from michelstat.checkers import check_always_fail
from michelstat.domains import MUTEZ_OVERFLOW, SHIFT_OVERFLOW, Interval
from michelstat.interpreter import CallContext, run_contract
from michelstat.parser import iter_instrs
from michelstat.settings import MUTEZ_MAX, AnalysisConfig
from strategies import load

INF = math.inf
ACCUMULATOR = "parameter nat; storage nat; code { UNPAIR; ADD; NIL operation; PAIR }"
CALLER = """
parameter unit;
storage unit;
code { CDR; NIL operation;
       PUSH address "KT1L"; CONTRACT nat; IF_NONE { FAIL } {};
       PUSH mutez 0; PUSH nat 300; TRANSFER_TOKENS; CONS; PAIR }
"""
FORWARDER = """
parameter address;
storage unit;
code { UNPAIR; CONTRACT nat; IF_NONE { FAIL } {};
       PUSH mutez 0; PUSH nat 1; TRANSFER_TOKENS;
       NIL operation; SWAP; CONS; PAIR }
"""
SHIFTER = "parameter nat; storage nat; code { CAR; PUSH nat 1; LSL; NIL operation; PAIR }"
TICKER = "parameter nat; storage mutez; code { CDR; PUSH mutez 1; ADD; NIL operation; PAIR }"
DIPS = [
    (
        "parameter nat; storage mutez; code { CDR; PUSH nat 5; DIP { PUSH mutez 1; ADD }; DROP; NIL operation; PAIR }",
        0,
        100,
        101,
    ),
    (
        "parameter unit; storage nat; "
        "code { CDR; PUSH nat 10; PUSH nat 3; PUSH nat 100; DIP 2 { SUB; ABS }; DROP; DROP; NIL operation; PAIR }",
        (),
        4,
        6,
    ),
]


def spans_of(script, op):
    return [instr.span for instr in iter_instrs(script.code) if instr.op == op]


def test_single_call_from_the_default_storage():
    result = analyze(load(ACCUMULATOR))
    entry = result.entrypoints["default"]
    assert entry.storage == {(): Interval(0, INF)}
    assert entry.operations[("opslist-len",)] == Interval(0, 0)
    assert result.alarms == []
    assert not result.always_fails


def test_single_call_from_a_concrete_storage():
    result = analyze(load(ACCUMULATOR), storage=5)
    assert result.entrypoints["default"].storage == {(): Interval(5, INF)}


def test_arbitrary_storage_starts_from_top():
    result = analyze(load(ACCUMULATOR), AnalysisConfig(arbitrary_storage=True))
    assert result.entrypoints["default"].storage == {(): Interval(0, INF)}


def test_multi_call_invariant_is_widened(contracts_dir):
    script = load((contracts_dir / "corpus" / "counter.tz").read_text(encoding="utf-8"))
    analyzer = Analyzer(script, AnalysisConfig(multi_call=True))
    result = analyzer.analyze()
    assert result.invariant == {(): Interval(0, INF)}
    assert result.iterations >= 2
    assert analyzer.is_post_fixpoint(result.invariant)
    assert not analyzer.is_post_fixpoint({(): Interval(0, 0)})


def test_relational_domain_removes_the_subtraction_alarm(contract):
    script = contract("compare.tz")
    (sub,) = spans_of(script, "SUB")
    assert analyze(script, AnalysisConfig(domains="intv+exp")).alarms == []
    (alarm,) = analyze(script, AnalysisConfig(domains="intv")).alarms
    assert (alarm.category, alarm.span) == (MUTEZ_OVERFLOW, sub)


def branches_at_if(script, domains):
    analyzer = Analyzer(script, AnalysisConfig(domains=domains))
    (entry,) = script.entrypoints
    split = next(i for i, instr in enumerate(script.code) if instr.op == "IF")
    state = analyzer.exec_seq(analyzer.entry_state(entry, analyzer.initial_storage()), script.code[:split])
    return analyzer.memory, analyzer.branches(state, script.code[split])


def test_equality_test_is_remembered_in_each_branch(contract):
    memory, (then, orelse) = branches_at_if(contract("compare.tz"), "intv+exp")
    x, y = (cell.var() for cell in then.stack)
    assert memory.known(then, "eq", x, y)
    assert memory.known(then, "ge", x, y)
    x, y = (cell.var() for cell in orelse.stack)
    assert memory.known(orelse, "neq", x, y)
    assert not memory.known(orelse, "eq", x, y)


def test_intervals_alone_do_not_refine_the_branches(contract):
    memory, branches = branches_at_if(contract("compare.tz"), "intv")
    for state in branches:
        x, y = (cell.var() for cell in state.stack)
        assert state.values[x] == state.values[y] == Interval(0, MUTEZ_MAX)
        assert not memory.known(state, "eq", x, y)
        assert not memory.known(state, "neq", x, y)


@pytest.mark.parametrize(("source", "arg", "storage", "expected"), DIPS)
def test_dip_runs_its_body_below_the_protected_cells(source, arg, storage, expected):
    script = load(source)
    _, concrete = run_contract(script, "default", arg, storage, CallContext())
    assert concrete == expected
    result = analyze(script, storage=storage)
    assert result.entrypoints["default"].storage == {(): Interval.of(expected)}
    assert result.alarms == []


def test_amount_bound_is_configurable(contracts_dir):
    script = load((contracts_dir / "corpus" / "mutez_overflow_2.tz").read_text(encoding="utf-8"))
    assert [a.category for a in analyze(script).alarms] == [MUTEZ_OVERFLOW]
    assert analyze(script, AnalysisConfig(max_amount=1_000)).alarms == []


def test_always_failing_entrypoints(contracts_dir):
    script = load((contracts_dir / "corpus" / "always_fail_2.tz").read_text(encoding="utf-8"))
    result = analyze(script)
    assert result.always_fails
    assert result.entrypoints["default"].failure_reachable
    assert result.entrypoints["default"].storage is None


def test_withdraw_from_the_empty_ledger_always_fails(contract):
    result = analyze(contract("wallet_fixed.tz"), AnalysisConfig(sender_split=True))
    assert check_always_fail(result).entrypoints == {"deposit": False, "withdraw": True}
    assert not result.always_fails


def test_unchecked_withdraw_may_decrease_another_balance(contract):
    script = contract("wallet_unfixed.tz")
    result = analyze(script, AnalysisConfig(multi_call=True, sender_split=True))
    withdraw_update = spans_of(script, "UPDATE")[1]
    assert [d.span for d in result.decreases] == [withdraw_update]
    assert result.decreases[0].entrypoint == "withdraw"


def test_checked_withdraw_only_touches_the_sender(contract):
    result = analyze(contract("wallet_fixed.tz"), AnalysisConfig(multi_call=True, sender_split=True))
    assert result.decreases == []
    # the balance check guards the subtraction; only deposits may overflow
    assert {(a.category, a.entrypoint) for a in result.alarms} == {(MUTEZ_OVERFLOW, "deposit")}


def test_ledger_invariant_keeps_balances_in_range(contract):
    result = analyze(contract("wallet_fixed.tz"), AnalysisConfig(multi_call=True, sender_split=True))
    invariant = result.invariant
    assert invariant[("map-card",)].lo == 0
    assert invariant[("map-nonsender-val",)].leq(Interval(0, 2**63 - 1))


@pytest.mark.parametrize(
    ("name", "category"),
    [
        ("mutez_overflow_1.tz", MUTEZ_OVERFLOW),
        ("mutez_overflow_3.tz", MUTEZ_OVERFLOW),
        ("shift_overflow_1.tz", SHIFT_OVERFLOW),
        ("shift_overflow_2.tz", SHIFT_OVERFLOW),
    ],
)
def test_runtime_error_alarms(contracts_dir, name, category):
    script = load((contracts_dir / "corpus" / name).read_text(encoding="utf-8"))
    result = analyze(script)
    assert [alarm.category for alarm in result.alarms] == [category]
    assert not result.always_fails


@pytest.mark.parametrize("name", ["counter.tz", "registry.tz", "sum_list.tz", "members.tz", "countdown.tz"])
def test_clean_contracts_raise_no_alarm(contracts_dir, name):
    script = load((contracts_dir / "corpus" / name).read_text(encoding="utf-8"))
    for multi_call in (False, True):
        result = analyze(script, AnalysisConfig(multi_call=multi_call))
        assert result.alarms == []
        assert not result.always_fails


@pytest.mark.parametrize("domains", ["intv", "intv+exp"])
def test_multi_call_invariants_are_post_fixpoints(contracts_dir, domains):
    for path in sorted((contracts_dir / "corpus").glob("*.tz")):
        analyzer = Analyzer(load(path.read_text(encoding="utf-8")), AnalysisConfig(domains=domains, multi_call=True))
        result = analyzer.analyze()
        assert result.invariant is not None, path.name
        assert analyzer.is_post_fixpoint(result.invariant), path.name


def test_timeout_aborts_the_analysis(contracts_dir):
    script = load((contracts_dir / "corpus" / "countdown.tz").read_text(encoding="utf-8"))
    with pytest.raises(AnalysisTimeout):
        analyze(script, AnalysisConfig(timeout=1e-9, multi_call=True))


def test_known_callee_is_analyzed_with_the_caller():
    result = analyze(load(CALLER), world={"KT1L": load(SHIFTER)})
    (alarm,) = result.alarms
    assert alarm.category == SHIFT_OVERFLOW
    assert alarm.entrypoint == "KT1L%default"
    assert analyze(load(CALLER)).alarms == []


def test_undetermined_target_forgets_known_storages():
    analyzer = Analyzer(load(FORWARDER), world={"KT1L": load(SHIFTER)})
    result = analyzer.analyze()
    assert any("not determined" in warning for warning in result.warnings)
    assert analyzer.world_storage["KT1L"] == {(): Interval(0, INF)}


def test_callee_storage_is_part_of_the_call_fixpoint():
    world = {"KT1L": load(TICKER)}
    assert analyze(load(CALLER), world=world).alarms == []
    analyzer = Analyzer(load(CALLER), AnalysisConfig(multi_call=True), world=world)
    result = analyzer.analyze()
    assert [(alarm.category, alarm.entrypoint) for alarm in result.alarms] == [(MUTEZ_OVERFLOW, "KT1L%default")]
    assert analyzer.world_storage["KT1L"] == {(): Interval(0, MUTEZ_MAX)}
    assert result.iterations >= 3
