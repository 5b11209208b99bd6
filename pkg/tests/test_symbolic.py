from __future__ import annotations

import hypothesis.strategies as st
from hypothesis import given

from michelstat.domains import BOOL_TOP, ConstSet
from michelstat.symbolic import (
    IS_SENDER,
    NOT_SENDER,
    AddrAbs,
    Const,
    EqClasses,
    Op,
    Relation,
    Snapshot,
    SymEnv,
    depth,
)

ONE = Const(1, "nat")


def test_assign_expresses_values_over_other_variables():
    env = SymEnv().assign("y", Op("add", ("x", ONE)))
    assert env.value_of("y") == Op("add", ("x", ONE))
    assert env.value_of("x") == "x"
    assert env.render() == ["y = add(x, 1)"]


def test_assign_substitutes_current_bindings():
    env = SymEnv().assign("y", Op("add", ("x", ONE))).assign("z", Op("mul", ("y", "y")))
    assert env.value_of("z") == Op("mul", (Op("add", ("x", ONE)), Op("add", ("x", ONE))))


def test_self_update_snapshots_the_old_value():
    env = SymEnv().assign("x", Op("add", ("x", ONE)))
    (bound,) = env.bindings.values()
    old = bound.args[0]
    assert isinstance(old, Snapshot) and old.var == "x"
    # a second update reuses the previous binding instead of a new snapshot
    env = env.assign("x", Op("add", ("x", ONE)))
    assert env.value_of("x") == Op("add", (Op("add", (old, ONE)), ONE))


def test_overwriting_a_variable_keeps_dependents_meaningful():
    env = SymEnv().assign("y", Op("add", ("x", ONE))).assign("x", Const(5, "nat"))
    assert env.value_of("x") == Const(5, "nat")
    dependent = env.value_of("y")
    assert isinstance(dependent.args[0], Snapshot)


def test_forget_uses_an_alias_when_one_is_live():
    env = SymEnv().assign("y", Op("add", ("x", ONE)))
    assert env.forget("x", alias="z").value_of("y") == Op("add", ("z", ONE))
    assert env.forget("x").binding("y") is None


def test_forget_replaces_by_the_forgotten_binding():
    env = SymEnv().assign("x", Op("neg", ("a",))).assign("y", Op("add", ("x", ONE)))
    assert env.forget("x").value_of("y") == Op("add", (Op("neg", ("a",)), ONE))


def test_join_keeps_common_bindings():
    left = SymEnv().assign("y", Op("add", ("x", ONE))).assign("z", ONE)
    right = SymEnv().assign("y", Op("add", ("x", ONE))).assign("z", Const(2, "nat"))
    joined = left.join(right)
    assert joined.bindings == {"y": Op("add", ("x", ONE))}
    assert left.leq(joined) and right.leq(joined)
    assert not joined.leq(left)


def test_depth_cap_drops_deep_bindings():
    env = SymEnv(depth_cap=2)
    for _ in range(3):
        env = env.assign("x", Op("add", ("x", ONE)))
    assert env.binding("x") is None


@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=20))
def test_bindings_never_exceed_the_depth_cap(targets):
    env = SymEnv(depth_cap=3)
    for target in targets:
        env = env.assign(target, Op("add", (target, "a")))
        assert all(depth(bound) <= 3 for bound in env.bindings.values())


def test_restrict_keeps_only_live_variables():
    env = SymEnv().assign("y", Op("add", ("x", ONE))).assign("w", ONE)
    kept = env.restrict(lambda var: var in {"y", "x"})
    assert kept.bindings == {"y": Op("add", ("x", ONE))}
    assert env.restrict(lambda var: var == "y").bindings == {}


def test_guards_resolve_to_relations_between_compared_variables():
    env = SymEnv().assign("c", Op("compare", ("a", "b"))).assign("t", Op("lt", ("c",)))
    assert env.resolve_guard("t", True) == [Relation("lt", "a", "b")]
    assert env.resolve_guard("t", False) == [Relation("ge", "a", "b")]


def test_guards_see_through_negation_and_conjunction():
    env = (
        SymEnv()
        .assign("c", Op("compare", ("a", "b")))
        .assign("p", Op("eq", ("c",)))
        .assign("q", Op("gt", ("n",)))
        .assign("both", Op("and", ("p", "q")))
        .assign("neither", Op("not", ("both",)))
    )
    assert env.resolve_guard("both", True) == [Relation("eq", "a", "b"), Relation("gt", "n", Const(0, "int"))]
    assert env.resolve_guard("both", False) == []
    assert env.resolve_guard("neither", False) == env.resolve_guard("both", True)
    assert env.resolve_guard("unbound", True) == []


def test_map_facts_follow_renaming():
    fact = Relation("nmem", "m", "k")
    env = SymEnv().add_fact(fact)
    assert env.has_fact(fact)
    assert env.rename({"k": "k2"}).has_fact(Relation("nmem", "m", "k2"))
    assert not env.forget("k").facts


def test_equality_classes_merge_and_forget():
    classes = EqClasses().merge("a", "b").merge("c", "b")
    assert classes.same("a", "c")
    assert classes.representative("c") == "a"
    assert not classes.same("a", "d")
    forgotten = classes.forget("a")
    assert forgotten.same("b", "c")
    assert not forgotten.same("a", "b")
    assert not EqClasses().merge("a", "b").forget("a").classes


def test_equality_class_join_keeps_shared_equalities():
    left = EqClasses().merge("a", "b").merge("b", "c")
    right = EqClasses().merge("a", "b").merge("c", "d")
    joined = left.join(right)
    assert joined.same("a", "b")
    assert not joined.same("b", "c")
    assert left.leq(joined) and right.leq(joined)
    assert left.meet(right).same("a", "d")


pairs = st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("abcdef")), max_size=6)


def _build(merges):
    classes = EqClasses()
    for x, y in merges:
        classes = classes.merge(x, y)
    return classes


@given(pairs, pairs)
def test_equality_join_is_an_upper_bound(xs, ys):
    left, right = _build(xs), _build(ys)
    joined = left.join(right)
    assert left.leq(joined) and right.leq(joined)
    for x, y in joined.pairs():
        assert left.same(x, y) and right.same(x, y)


@given(pairs)
def test_equality_is_transitive(merges):
    classes = _build(merges)
    for x, y in merges:
        assert classes.same(x, y) and classes.same(y, x)


def test_sender_relation_decides_address_comparisons():
    sender = AddrAbs.current_sender()
    other = AddrAbs().assume_neq_sender()
    assert sender.compare(sender) == "eq"
    assert sender.compare(other) == "neq"
    assert AddrAbs().compare(sender) == "unknown"
    assert str(sender) == "= $sender"


def test_constant_addresses_compare_by_value():
    assert AddrAbs.of("tz1a").compare(AddrAbs.of("tz1a")) == "eq"
    assert AddrAbs.of("tz1a").compare(AddrAbs.of("tz1b", "tz1c")) == "neq"
    assert AddrAbs.of("tz1a", "tz1b").compare(AddrAbs.of("tz1b")) == "unknown"


def test_address_join_and_sender_refinement():
    joined = AddrAbs.current_sender().join(AddrAbs(ConstSet(), NOT_SENDER))
    assert joined.sender == BOOL_TOP
    assert joined.assume_eq_sender().sender == IS_SENDER
    assert AddrAbs.current_sender().assume_neq_sender().is_bottom
    assert AddrAbs.current_sender().forget_sender().sender == BOOL_TOP
