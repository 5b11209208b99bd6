from __future__ import annotations

import math

import hypothesis.strategies as st
import pytest
from hypothesis import assume, given

from michelstat.domains import (
    BOOL_BOTTOM,
    BOOL_TOP,
    BOTTOM,
    MUTEZ_OVERFLOW,
    NEGATED,
    NONNEG,
    SHIFT_OVERFLOW,
    TOP,
    BoolAbs,
    ConstSet,
    Interval,
    holds,
    itv_assume,
    itv_binop,
    itv_compare,
    itv_ediv,
    itv_test,
    itv_unop,
    widen_itv,
)
from michelstat.settings import MUTEZ_MAX

INF = math.inf
RELATIONS = sorted(NEGATED)


@st.composite
def intervals(draw: st.DrawFn, lo: int = -60, hi: int = 60) -> Interval:
    if draw(st.integers(0, 15)) == 0:
        return BOTTOM
    a, b = sorted(draw(st.lists(st.integers(lo, hi), min_size=2, max_size=2)))
    low = -INF if draw(st.integers(0, 5)) == 0 else a
    high = INF if draw(st.integers(0, 5)) == 0 else b
    return Interval(low, high)


@st.composite
def members(draw: st.DrawFn, interval: Interval) -> int:
    assume(not interval.is_bottom)
    lo = -200 if interval.lo == -INF else int(interval.lo)
    hi = 200 if interval.hi == INF else int(interval.hi)
    return draw(st.integers(lo, max(lo, hi)))


def euclid(x: int, y: int) -> tuple[int, int]:
    q = x // y if y > 0 else -(x // -y)
    return q, x - q * y


bools = st.sampled_from([BOOL_BOTTOM, BoolAbs.of(True), BoolAbs.of(False), BOOL_TOP])
const_sets = st.one_of(
    st.just(ConstSet(None, 4)),
    st.frozensets(st.integers(0, 6), max_size=4).map(lambda values: ConstSet(values, 4)),
)


def test_interval_rendering():
    assert str(Interval(0, INF)) == "[0, +oo]"
    assert str(TOP) == "[-oo, +oo]"
    assert str(Interval(3, 1)) == "⊥"
    assert Interval(3, 1) == BOTTOM


@given(intervals(), intervals())
def test_interval_join_and_meet_bound_their_operands(a, b):
    joined, met = a.join(b), a.meet(b)
    assert a.leq(joined) and b.leq(joined)
    assert met.leq(a) and met.leq(b)
    assert a.join(b) == b.join(a)
    assert a.meet(b) == b.meet(a)


@given(intervals(), intervals(), intervals())
def test_interval_join_is_least(a, b, c):
    if a.leq(c) and b.leq(c):
        assert a.join(b).leq(c)
    if c.leq(a) and c.leq(b):
        assert c.leq(a.meet(b))


@given(intervals())
def test_interval_order_has_bottom_and_top(a):
    assert BOTTOM.leq(a)
    assert a.leq(TOP)
    assert a.leq(a)
    assert a.join(BOTTOM) == a
    assert a.meet(TOP) == a


@given(intervals(), intervals())
def test_widening_is_an_upper_bound(a, b):
    widened = a.widen(b)
    assert a.leq(widened) and b.leq(widened)


@given(st.lists(intervals(), min_size=1, max_size=30))
def test_widening_stabilises_any_chain(chain):
    current = BOTTOM
    changes = 0
    for step in chain:
        nxt = current.widen(current.join(step))
        if nxt != current:
            changes += 1
        current = nxt
    # bottom to finite, then each bound jumps to infinity at most once
    assert changes <= 3


@given(intervals(), intervals())
def test_narrowing_stays_between(a, b):
    b = b.meet(a)
    narrowed = a.narrow(b)
    assert b.leq(narrowed)
    assert narrowed.leq(a)


def test_widen_itv_respects_the_kind():
    assert widen_itv(Interval(0, 1), Interval(0, 2), "nat") == Interval(0, INF)
    assert widen_itv(Interval(0, 1), Interval(0, 2), "mutez") == Interval(0, MUTEZ_MAX)
    assert widen_itv(Interval(0, 1), Interval(-1, 1), "nat") == Interval(0, 1)


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
@given(data=st.data())
def test_arithmetic_is_sound(op, data):
    a, b = data.draw(intervals()), data.draw(intervals())
    x, y = data.draw(members(a)), data.draw(members(b))
    result, alarms = itv_binop(op, "int", a, b)
    expected = {"add": x + y, "sub": x - y, "mul": x * y}[op]
    assert expected in result
    assert not alarms


@given(st.integers(0, 60), st.integers(0, 60), st.booleans(), st.data())
def test_mutez_addition_alarms_cover_every_overflow(width_a, width_b, near_max, data):
    base = MUTEZ_MAX - 40 if near_max else 0
    a = Interval(base, min(base + width_a, MUTEZ_MAX))
    x = data.draw(st.integers(int(a.lo), int(a.hi)))
    y = data.draw(st.integers(0, width_b))
    result, alarms = itv_binop("add", "mutez", a, Interval(0, width_b))
    if x + y > MUTEZ_MAX:
        assert MUTEZ_OVERFLOW in alarms
    else:
        assert x + y in result


def test_mutez_subtraction_below_zero_raises_an_alarm():
    result, alarms = itv_binop("sub", "mutez", Interval(0, 10), Interval(5, 5))
    assert alarms == {MUTEZ_OVERFLOW}
    assert result == Interval(0, 5)
    result, alarms = itv_binop("sub", "mutez", Interval(0, 3), Interval(5, 9))
    assert result.is_bottom and alarms == {MUTEZ_OVERFLOW}


def test_mutez_literal_ranges_do_not_alarm():
    _, alarms = itv_binop("add", "mutez", Interval(0, 100), Interval(0, 100))
    assert not alarms


@pytest.mark.parametrize(("shifts", "alarm"), [(Interval(0, 256), False), (Interval(0, 257), True), (NONNEG, True)])
def test_shift_amount_limit(shifts, alarm):
    _, alarms = itv_binop("lsl", "nat", Interval(1, 1), shifts)
    assert (SHIFT_OVERFLOW in alarms) is alarm


@given(intervals(0, 40), intervals(0, 20), st.sampled_from(["lsl", "lsr"]), st.data())
def test_shifts_are_sound(value, shifts, op, data):
    x, s = data.draw(members(value)), data.draw(members(shifts))
    assume(x >= 0 and 0 <= s <= 256)
    result, _ = itv_binop(op, "nat", value, shifts)
    assert (x << s if op == "lsl" else x >> s) in result


@given(intervals(0, 60), intervals(0, 60), st.sampled_from(["and", "or", "xor"]), st.data())
def test_bitwise_operations_are_sound(a, b, op, data):
    x, y = data.draw(members(a)), data.draw(members(b))
    assume(x >= 0 and y >= 0)
    result, _ = itv_binop(op, "nat", a.meet(NONNEG), b.meet(NONNEG))
    assert {"and": x & y, "or": x | y, "xor": x ^ y}[op] in result


@given(intervals(), intervals(), st.data())
def test_euclidean_division_is_sound(a, b, data):
    x, y = data.draw(members(a)), data.draw(members(b))
    quotient, remainder, tag = itv_ediv(a, b)
    if y == 0:
        assert 0 in tag
        return
    assert 1 in tag
    q, r = euclid(x, y)
    assert q in quotient
    assert r in remainder


def test_division_by_zero_only_yields_none():
    quotient, remainder, tag = itv_ediv(Interval(1, 9), Interval(0, 0))
    assert tag == Interval(0, 0)
    assert quotient.is_bottom and remainder.is_bottom


def test_division_remainder_is_bounded_by_the_divisor():
    _, remainder, tag = itv_ediv(Interval(0, INF), Interval(1, 10))
    assert remainder == Interval(0, 9)
    assert tag == Interval(1, 1)


@given(intervals(), st.sampled_from(["neg", "abs", "not", "int"]), st.data())
def test_unary_operations_are_sound(a, op, data):
    x = data.draw(members(a))
    expected = {"neg": -x, "abs": abs(x), "not": ~x, "int": x}[op]
    assert expected in itv_unop(op, a)


@given(intervals(), intervals(), st.data())
def test_compare_is_sound(a, b, data):
    x, y = data.draw(members(a)), data.draw(members(b))
    assert (x > y) - (x < y) in itv_compare(a, b)


@given(intervals(), intervals(), st.sampled_from(RELATIONS), st.data())
def test_assume_keeps_every_satisfying_pair(a, b, rel, data):
    x, y = data.draw(members(a)), data.draw(members(b))
    left, right = itv_assume(rel, a, b)
    if holds(rel, (x > y) - (x < y)):
        assert x in left and y in right


def test_assume_refines_bounds():
    assert itv_assume("lt", Interval(0, 10), Interval(3, 3)) == (Interval(0, 2), Interval(3, 3))
    assert itv_assume("neq", Interval(0, 10), Interval(0, 0)) == (Interval(1, 10), Interval(0, 0))
    assert itv_assume("gt", Interval(0, 2), Interval(5, 9)) == (BOTTOM, BOTTOM)


@given(intervals(-2, 2), st.sampled_from(RELATIONS), st.data())
def test_tests_on_comparison_results_are_sound(a, rel, data):
    x = data.draw(members(a))
    outcome = itv_test(rel, a)
    assert outcome.can_true if holds(rel, x) else outcome.can_false


@given(bools, bools)
def test_booleans_form_a_lattice(a, b):
    assert a.leq(a.join(b)) and b.leq(a.join(b))
    assert a.meet(b).leq(a) and a.meet(b).leq(b)
    assert a.negate().negate() == a
    assert BOOL_BOTTOM.leq(a) and a.leq(BOOL_TOP)


@given(bools, bools, st.sampled_from(["and", "or", "xor"]))
def test_boolean_connectives_are_sound(a, b, op):
    result = a.combine(op, b)
    for x in (True, False):
        for y in (True, False):
            if (a.can_true if x else a.can_false) and (b.can_true if y else b.can_false):
                value = {"and": x and y, "or": x or y, "xor": x != y}[op]
                assert result.can_true if value else result.can_false


@given(const_sets, const_sets)
def test_constant_sets_form_a_lattice(a, b):
    joined = a.join(b)
    assert a.leq(joined) and b.leq(joined)
    assert a.meet(b).leq(a) and a.meet(b).leq(b)
    assert a.leq(a)


def test_constant_sets_saturate_at_the_cap():
    small = ConstSet.of(1, 2, cap=3)
    assert small.join(ConstSet.of(3, cap=3)).values == {1, 2, 3}
    assert small.join(ConstSet.of(3, 4, cap=3)).is_top
    assert str(ConstSet.of("b", "a")) == "{'a', 'b'}"


@given(const_sets, const_sets, st.integers(0, 6), st.integers(0, 6))
def test_constant_set_comparison_is_sound(a, b, x, y):
    assume(x in a and y in b)
    verdict = a.compare(b)
    if verdict == "eq":
        assert x == y
    elif verdict == "neq":
        assert x != y
