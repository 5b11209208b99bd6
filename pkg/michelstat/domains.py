"""Non-relational value lattices: intervals, booleans and finite constant sets.

Every abstract value implements the :class:`AbstractValue` protocol so the
memory layer can join, meet and widen cells without knowing their kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, TypeVar

from .settings import MUTEZ_MAX

INF = math.inf
Bound = int | float

MUTEZ_OVERFLOW = "mutez-overflow"
SHIFT_OVERFLOW = "shift-overflow"
SHIFT_LIMIT = 256

V = TypeVar("V", bound="AbstractValue")


class AbstractValue(Protocol):
    @property
    def is_bottom(self) -> bool: ...

    def leq(self: V, other: V) -> bool: ...

    def join(self: V, other: V) -> V: ...

    def meet(self: V, other: V) -> V: ...

    def widen(self: V, other: V) -> V: ...

    def narrow(self: V, other: V) -> V: ...


# ---------------------------------------------------------------------------
# Intervals


@dataclass(frozen=True)
class Interval:
    """Closed integer interval with infinite bounds; ``lo > hi`` is bottom."""

    lo: Bound
    hi: Bound

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            object.__setattr__(self, "lo", INF)
            object.__setattr__(self, "hi", -INF)

    @classmethod
    def of(cls, lo: Bound, hi: Bound | None = None) -> "Interval":
        return cls(lo, lo if hi is None else hi)

    @classmethod
    def hull(cls, values: Iterable[Bound]) -> "Interval":
        items = list(values)
        return cls(min(items), max(items)) if items else BOTTOM

    @property
    def is_bottom(self) -> bool:
        return self.lo > self.hi

    @property
    def is_const(self) -> bool:
        return not self.is_bottom and self.lo == self.hi

    @property
    def is_finite(self) -> bool:
        return not self.is_bottom and math.isfinite(self.lo) and math.isfinite(self.hi)

    def __contains__(self, value: object) -> bool:
        return isinstance(value, (int, float)) and self.lo <= value <= self.hi

    def __str__(self) -> str:
        if self.is_bottom:
            return "⊥"
        return f"[{_show(self.lo)}, {_show(self.hi)}]"

    def leq(self, other: "Interval") -> bool:
        return self.is_bottom or (other.lo <= self.lo and self.hi <= other.hi)

    def join(self, other: "Interval") -> "Interval":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def widen(self, other: "Interval") -> "Interval":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        lo = self.lo if other.lo >= self.lo else -INF
        hi = self.hi if other.hi <= self.hi else INF
        return Interval(lo, hi)

    def narrow(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        lo = other.lo if self.lo == -INF else self.lo
        hi = other.hi if self.hi == INF else self.hi
        return Interval(lo, hi)

    def add(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        return Interval(_add(self.lo, other.lo), _add(self.hi, other.hi))

    def neg(self) -> "Interval":
        return BOTTOM if self.is_bottom else Interval(-self.hi, -self.lo)

    def sub(self, other: "Interval") -> "Interval":
        return self.add(other.neg())

    def mul(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        corners = [_mul(a, b) for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Interval.hull(corners)


BOTTOM = Interval(INF, -INF)
TOP = Interval(-INF, INF)
NONNEG = Interval(0, INF)
TAG = Interval(0, 1)

KIND_RANGES = {
    "int": TOP,
    "timestamp": TOP,
    "nat": NONNEG,
    "mutez": Interval(0, MUTEZ_MAX),
    "tag": TAG,
}


def kind_range(kind: str) -> Interval:
    return KIND_RANGES.get(kind, TOP)


def _show(bound: Bound) -> str:
    if bound == INF:
        return "+oo"
    if bound == -INF:
        return "-oo"
    return str(int(bound))


def _add(a: Bound, b: Bound) -> Bound:
    if math.isinf(a) and math.isinf(b) and a != b:
        # -oo + +oo only arises from an unbounded operand; keep the sound side.
        return a
    return a + b


def _mul(a: Bound, b: Bound) -> Bound:
    if a == 0 or b == 0:
        return 0
    return a * b


def _floordiv(a: Bound, b: Bound) -> Bound | None:
    """floor(a / b) for b > 0, with limits at infinity; None when undefined."""

    if math.isinf(b):
        if math.isinf(a):
            return None
        return 0 if a >= 0 else -1
    if math.isinf(a):
        return a
    return int(a) // int(b)


def _bit_ceiling(bound: Bound) -> Bound:
    return INF if math.isinf(bound) else (1 << int(bound).bit_length()) - 1


# ---------------------------------------------------------------------------
# Transfer functions


def itv_binop(op: str, kind: str, left: Interval, right: Interval) -> tuple[Interval, frozenset[str]]:
    """Abstract ``left op right`` for a result of integer ``kind``.

    Returns the result restricted to non-failing executions together with the
    runtime-error alarms some concrete pair may raise. A bottom result with an
    alarm means every concrete pair fails.
    """

    if left.is_bottom or right.is_bottom:
        return BOTTOM, frozenset()
    alarms: set[str] = set()
    if op == "add":
        raw = left.add(right)
    elif op == "sub":
        raw = left.sub(right)
    elif op == "mul":
        raw = left.mul(right)
    elif op == "ediv":
        quotient, _, _ = itv_ediv(left, right)
        raw = quotient
    elif op in {"lsl", "lsr"}:
        shifts = right.meet(Interval(0, SHIFT_LIMIT))
        if right.hi > SHIFT_LIMIT:
            alarms.add(SHIFT_OVERFLOW)
        if shifts.is_bottom:
            return BOTTOM, frozenset(alarms)
        raw = _shift(op, left.meet(NONNEG), shifts)
    elif op in {"and", "or", "xor"}:
        raw = _bitwise(op, left, right)
    else:
        raise ValueError(f"Unknown interval operator '{op}'")

    legal = kind_range(kind)
    if kind == "mutez" and not raw.leq(legal):
        alarms.add(MUTEZ_OVERFLOW)
    return raw.meet(legal), frozenset(alarms)


def itv_ediv(left: Interval, right: Interval) -> tuple[Interval, Interval, Interval]:
    """Euclidean division: ``(quotient, remainder, option tag)``.

    The remainder is always in ``[0, |divisor| - 1]``; the tag interval holds 0
    when the divisor may be zero (None) and 1 when it may be non-zero (Some).
    """

    if left.is_bottom or right.is_bottom:
        return BOTTOM, BOTTOM, BOTTOM
    positive = right.meet(Interval(1, INF))
    negative = right.meet(Interval(-INF, -1))
    tag = Interval(0 if 0 in right else 1, 1 if not (positive.is_bottom and negative.is_bottom) else 0)
    if tag.hi == 0:
        return BOTTOM, BOTTOM, tag

    quotient = BOTTOM
    for part, sign in ((positive, 1), (negative.neg(), -1)):
        if part.is_bottom:
            continue
        corners = [_floordiv(a, b) for a in (left.lo, left.hi) for b in (part.lo, part.hi)]
        if any(corner is None for corner in corners):
            bound = max(abs(left.lo), abs(left.hi))
            piece = Interval(-bound, bound)
        else:
            piece = Interval.hull(corners)  # type: ignore[arg-type]
        quotient = quotient.join(piece if sign == 1 else piece.neg())

    divisor_max = max(abs(right.lo), abs(right.hi))
    remainder = Interval(0, divisor_max - 1)
    if left.lo >= 0:
        remainder = remainder.meet(Interval(0, left.hi))
    return quotient, remainder, tag


def _shift(op: str, value: Interval, shifts: Interval) -> Interval:
    if value.is_bottom:
        return BOTTOM
    if op == "lsl":
        hi = INF if math.isinf(value.hi) else int(value.hi) << int(shifts.hi)
        return Interval(int(value.lo) << int(shifts.lo), hi)
    hi = INF if math.isinf(value.hi) else int(value.hi) >> int(shifts.lo)
    return Interval(int(value.lo) >> int(shifts.hi), hi)


def _bitwise(op: str, left: Interval, right: Interval) -> Interval:
    if left.is_const and right.is_const:
        a, b = int(left.lo), int(right.lo)
        return Interval.of(a & b if op == "and" else a | b if op == "or" else a ^ b)
    if op == "and":
        # nat & nat, or int & nat: bounded by the natural operand(s).
        upper = right.hi if left.lo < 0 else min(left.hi, right.hi)
        return Interval(0, upper)
    ceiling = _bit_ceiling(max(left.hi, right.hi))
    if op == "or":
        return Interval(max(left.lo, right.lo), ceiling)
    return Interval(0, ceiling)


def itv_unop(op: str, value: Interval) -> Interval:
    """NEG, ABS, NOT (bitwise on integers) and INT."""

    if value.is_bottom:
        return BOTTOM
    if op == "neg":
        return value.neg()
    if op == "abs":
        if value.lo >= 0:
            return value
        if value.hi <= 0:
            return value.neg()
        return Interval(0, max(-value.lo, value.hi))
    if op == "not":
        return Interval(_add(-value.hi, -1), _add(-value.lo, -1))
    if op == "int":
        return value
    raise ValueError(f"Unknown interval operator '{op}'")


def itv_compare(left: Interval, right: Interval) -> Interval:
    """The outcomes of COMPARE in ``{-1, 0, 1}`` over two intervals."""

    if left.is_bottom or right.is_bottom:
        return BOTTOM
    outcomes = []
    if left.lo < right.hi:
        outcomes.append(-1)
    if not left.meet(right).is_bottom:
        outcomes.append(0)
    if left.hi > right.lo:
        outcomes.append(1)
    return Interval.hull(outcomes)


NEGATED = {"eq": "neq", "neq": "eq", "lt": "ge", "ge": "lt", "gt": "le", "le": "gt"}
FLIPPED = {"eq": "eq", "neq": "neq", "lt": "gt", "gt": "lt", "le": "ge", "ge": "le"}


def holds(rel: str, cmp: int) -> bool:
    """Whether a COMPARE result ``cmp`` satisfies ``rel``."""

    return {
        "eq": cmp == 0,
        "neq": cmp != 0,
        "lt": cmp < 0,
        "gt": cmp > 0,
        "le": cmp <= 0,
        "ge": cmp >= 0,
    }[rel]


def itv_assume(rel: str, left: Interval, right: Interval) -> tuple[Interval, Interval]:
    """Refine both operands by ``left rel right``; both bottom when unsatisfiable."""

    if left.is_bottom or right.is_bottom:
        return BOTTOM, BOTTOM
    if rel == "eq":
        both = left.meet(right)
        new_left, new_right = both, both
    elif rel == "neq":
        new_left, new_right = _exclude(left, right), _exclude(right, left)
    elif rel == "lt":
        new_left = left.meet(Interval(-INF, _add(right.hi, -1)))
        new_right = right.meet(Interval(_add(left.lo, 1), INF))
    elif rel == "le":
        new_left = left.meet(Interval(-INF, right.hi))
        new_right = right.meet(Interval(left.lo, INF))
    elif rel in {"gt", "ge"}:
        new_right, new_left = itv_assume(FLIPPED[rel], right, left)
    else:
        raise ValueError(f"Unknown relation '{rel}'")
    if new_left.is_bottom or new_right.is_bottom:
        return BOTTOM, BOTTOM
    return new_left, new_right


def _exclude(value: Interval, other: Interval) -> Interval:
    if not other.is_const:
        return value
    point = other.lo
    if value.lo == point:
        return Interval(value.lo + 1, value.hi)
    if value.hi == point:
        return Interval(value.lo, value.hi - 1)
    return value


def widen_itv(old: Interval, new: Interval, kind: str = "int") -> Interval:
    """Standard interval widening followed by the kind's legal range."""

    return old.widen(new).meet(kind_range(kind))


ZERO = Interval(0, 0)


def refine_by_test(rel: str, value: Interval) -> Interval:
    """The part of an integer ``value`` for which ``value rel 0`` holds."""

    return itv_assume(rel, value, ZERO)[0]


def itv_test(rel: str, value: Interval) -> "BoolAbs":
    """EQ/NEQ/LT/GT/LE/GE applied to an integer (usually a COMPARE result)."""

    if value.is_bottom:
        return BOOL_BOTTOM
    can_true = not refine_by_test(rel, value).is_bottom
    can_false = not refine_by_test(NEGATED[rel], value).is_bottom
    return BoolAbs(can_true, can_false)


# ---------------------------------------------------------------------------
# Booleans


@dataclass(frozen=True)
class BoolAbs:
    can_true: bool
    can_false: bool

    @classmethod
    def of(cls, value: bool) -> "BoolAbs":
        return cls(value, not value)

    @property
    def is_bottom(self) -> bool:
        return not (self.can_true or self.can_false)

    @property
    def is_top(self) -> bool:
        return self.can_true and self.can_false

    def __str__(self) -> str:
        if self.is_top:
            return "⊤"
        if self.is_bottom:
            return "⊥"
        return "True" if self.can_true else "False"

    def leq(self, other: "BoolAbs") -> bool:
        return (not self.can_true or other.can_true) and (not self.can_false or other.can_false)

    def join(self, other: "BoolAbs") -> "BoolAbs":
        return BoolAbs(self.can_true or other.can_true, self.can_false or other.can_false)

    def meet(self, other: "BoolAbs") -> "BoolAbs":
        return BoolAbs(self.can_true and other.can_true, self.can_false and other.can_false)

    widen = join

    def narrow(self, other: "BoolAbs") -> "BoolAbs":
        return self.meet(other)

    def negate(self) -> "BoolAbs":
        return BoolAbs(self.can_false, self.can_true)

    def combine(self, op: str, other: "BoolAbs") -> "BoolAbs":
        if self.is_bottom or other.is_bottom:
            return BOOL_BOTTOM
        table = {"and": lambda a, b: a and b, "or": lambda a, b: a or b, "xor": lambda a, b: a != b}[op]
        outcomes = {
            table(a, b)
            for a in (True, False)
            if (self.can_true if a else self.can_false)
            for b in (True, False)
            if (other.can_true if b else other.can_false)
        }
        return BoolAbs(True in outcomes, False in outcomes)


BOOL_BOTTOM = BoolAbs(False, False)
BOOL_TOP = BoolAbs(True, True)


# ---------------------------------------------------------------------------
# Finite sets of constants (strings, unit, and the address powerset)

DEFAULT_CONST_CAP = 8


@dataclass(frozen=True)
class ConstSet:
    """A finite set of constants, or ``⊤`` when ``values`` is ``None``."""

    values: frozenset | None = None
    cap: int = field(default=DEFAULT_CONST_CAP, compare=False)

    @classmethod
    def of(cls, *values: object, cap: int = DEFAULT_CONST_CAP) -> "ConstSet":
        return cls(frozenset(values), cap)

    @property
    def is_bottom(self) -> bool:
        return self.values is not None and not self.values

    @property
    def is_top(self) -> bool:
        return self.values is None

    @property
    def singleton(self) -> object | None:
        if self.values is not None and len(self.values) == 1:
            return next(iter(self.values))
        return None

    def __contains__(self, value: object) -> bool:
        return self.values is None or value in self.values

    def __str__(self) -> str:
        if self.values is None:
            return "⊤"
        if not self.values:
            return "⊥"
        return "{" + ", ".join(sorted(repr(v) for v in self.values)) + "}"

    def leq(self, other: "ConstSet") -> bool:
        if other.values is None:
            return True
        return self.values is not None and self.values <= other.values

    def join(self, other: "ConstSet") -> "ConstSet":
        if self.values is None or other.values is None:
            return ConstSet(None, self.cap)
        union = self.values | other.values
        if len(union) > min(self.cap, other.cap):
            return ConstSet(None, self.cap)
        return ConstSet(union, self.cap)

    def meet(self, other: "ConstSet") -> "ConstSet":
        if self.values is None:
            return ConstSet(other.values, self.cap)
        if other.values is None:
            return self
        return ConstSet(self.values & other.values, self.cap)

    # The cap bounds every ascending chain, so join is already a widening.
    def widen(self, other: "ConstSet") -> "ConstSet":
        return self.join(other)

    def narrow(self, other: "ConstSet") -> "ConstSet":
        return other if self.values is None else self

    def compare(self, other: "ConstSet") -> str:
        """``eq``/``neq``/``unknown`` verdict of equality between two sets."""

        if self.singleton is not None and other.singleton is not None:
            return "eq" if self.singleton == other.singleton else "neq"
        if self.values is not None and other.values is not None and not self.values & other.values:
            return "neq"
        return "unknown"
