"""Symbolic constants, equality classes and the address reduced product.

Variables are opaque hashable keys (the memory layer uses ``CellVar``). An
expression is a variable, a :class:`Const` or an :class:`Op` node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Union

from .domains import BOOL_TOP, NEGATED, BoolAbs, ConstSet

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_CAP = 16
RELATIONS = frozenset(NEGATED)


@dataclass(frozen=True)
class Const:
    value: object
    kind: str


@dataclass(frozen=True)
class Op:
    name: str
    args: tuple["Expr", ...]


@dataclass(frozen=True, order=True)
class Snapshot:
    """The value a variable had before it was reassigned from itself."""

    var: Hashable = field(compare=False)
    serial: int = 0
    label: str = ""

    def __str__(self) -> str:
        return f"{self.label}#{self.serial}"


Expr = Union[Const, Op, Hashable]


@dataclass(frozen=True)
class Relation:
    """``left rel right``, or a map fact ``mem``/``nmem`` with (map, key)."""

    rel: str
    left: Expr
    right: Expr


def is_var(expr: Expr) -> bool:
    return not isinstance(expr, (Const, Op))


def variables(expr: Expr) -> Iterator[Hashable]:
    if isinstance(expr, Op):
        for arg in expr.args:
            yield from variables(arg)
    elif not isinstance(expr, Const):
        yield expr


def mentions(expr: Expr, var: Hashable) -> bool:
    return any(leaf == var for leaf in variables(expr))


def depth(expr: Expr) -> int:
    if isinstance(expr, Op):
        return 1 + max((depth(arg) for arg in expr.args), default=0)
    return 0


def substitute(expr: Expr, mapping: Mapping[Hashable, Expr]) -> Expr:
    if isinstance(expr, Op):
        return Op(expr.name, tuple(substitute(arg, mapping) for arg in expr.args))
    if isinstance(expr, Const):
        return expr
    return mapping.get(expr, expr)


def normalize(expr: Expr, representative: Callable[[Hashable], Hashable]) -> Expr:
    """Replace each variable by its equality-class representative."""

    if isinstance(expr, Op):
        return Op(expr.name, tuple(normalize(arg, representative) for arg in expr.args))
    if isinstance(expr, Const):
        return expr
    return representative(expr)


def render(expr: Expr) -> str:
    if isinstance(expr, Const):
        return repr(expr.value) if isinstance(expr.value, str) else str(expr.value)
    if isinstance(expr, Op):
        return f"{expr.name}({', '.join(render(arg) for arg in expr.args)})"
    return str(expr)


# ---------------------------------------------------------------------------
# Symbolic constant environment


@dataclass(frozen=True)
class SymEnv:
    """Bindings ``var -> expression``; an unbound variable is ⊤.

    ``facts`` holds map facts (``nmem`` relations) known on every path.
    """

    bindings: Mapping[Hashable, Expr] = field(default_factory=dict)
    facts: frozenset[Relation] = frozenset()
    depth_cap: int = DEFAULT_DEPTH_CAP
    serial: int = 0

    def binding(self, var: Hashable) -> Expr | None:
        return self.bindings.get(var)

    def value_of(self, var: Hashable) -> Expr:
        """The expression denoting ``var``: its binding, or the variable itself."""
        return self.bindings.get(var, var)

    def resolve(self, expr: Expr) -> Expr:
        return substitute(expr, self.bindings)

    def lookup(self, expr: Expr) -> list[Hashable]:
        """Variables whose value is syntactically ``expr``."""
        if is_var(expr):
            found = [expr]
        else:
            found = []
        found.extend(var for var, bound in self.bindings.items() if bound == expr and var != expr)
        return found

    def assign(self, dst: Hashable, expr: Expr | None) -> "SymEnv":
        """Bind ``dst`` to ``expr`` (expressed over current variables); ``None`` is ⊤."""

        bindings = dict(self.bindings)
        facts = self.facts
        serial = self.serial
        new_value = None if expr is None else substitute(expr, bindings)
        old_value = bindings.pop(dst, None)
        referenced = (new_value is not None and mentions(new_value, dst)) or any(
            mentions(bound, dst) for bound in bindings.values()
        ) or any(mentions(fact.left, dst) or mentions(fact.right, dst) for fact in facts)
        if referenced:
            if old_value is not None:
                replacement: Expr = old_value
            else:
                serial += 1
                replacement = Snapshot(dst, serial, str(dst))
            mapping = {dst: replacement}
            if new_value is not None:
                new_value = substitute(new_value, mapping)
            bindings = {var: substitute(bound, mapping) for var, bound in bindings.items()}
            facts = frozenset(
                Relation(f.rel, substitute(f.left, mapping), substitute(f.right, mapping)) for f in facts
            )
        if new_value is not None and not (is_var(new_value) and new_value == dst):
            bindings[dst] = new_value
        env = SymEnv(bindings, facts, self.depth_cap, serial)
        return env._capped()

    def forget(self, var: Hashable, alias: Hashable | None = None) -> "SymEnv":
        """Remove ``var``; bindings that mention it keep their meaning when possible.

        ``var`` is replaced by its own binding, else by ``alias`` (a live
        variable known equal to it); bindings with no replacement become ⊤.
        """

        bindings = dict(self.bindings)
        own = bindings.pop(var, None)
        replacement = own if own is not None else alias
        result: dict[Hashable, Expr] = {}
        for target, bound in bindings.items():
            if not mentions(bound, var):
                result[target] = bound
            elif replacement is not None:
                rewritten = substitute(bound, {var: replacement})
                if not (is_var(rewritten) and rewritten == target):
                    result[target] = rewritten
        facts = set()
        for fact in self.facts:
            if not (mentions(fact.left, var) or mentions(fact.right, var)):
                facts.add(fact)
            elif replacement is not None:
                mapping = {var: replacement}
                facts.add(Relation(fact.rel, substitute(fact.left, mapping), substitute(fact.right, mapping)))
        return SymEnv(result, frozenset(facts), self.depth_cap, self.serial)._capped()

    def rename(self, mapping: Mapping[Hashable, Hashable]) -> "SymEnv":
        if not mapping:
            return self
        bindings = {mapping.get(var, var): substitute(bound, mapping) for var, bound in self.bindings.items()}
        facts = frozenset(
            Relation(f.rel, substitute(f.left, mapping), substitute(f.right, mapping)) for f in self.facts
        )
        return SymEnv(bindings, facts, self.depth_cap, self.serial)

    def restrict(self, live: Callable[[Hashable], bool]) -> "SymEnv":
        """Drop bindings of dead variables and bindings mentioning dead ones."""

        def ok(expr: Expr) -> bool:
            return all(live(leaf) or isinstance(leaf, Snapshot) for leaf in variables(expr))

        bindings = {var: bound for var, bound in self.bindings.items() if live(var) and ok(bound)}
        facts = frozenset(f for f in self.facts if ok(f.left) and ok(f.right))
        return SymEnv(bindings, facts, self.depth_cap, self.serial)

    def add_fact(self, fact: Relation) -> "SymEnv":
        return SymEnv(self.bindings, self.facts | {fact}, self.depth_cap, self.serial)

    def has_fact(self, fact: Relation) -> bool:
        return fact in self.facts

    def leq(self, other: "SymEnv") -> bool:
        return all(self.bindings.get(var) == bound for var, bound in other.bindings.items()) and (
            other.facts <= self.facts
        )

    def join(self, other: "SymEnv") -> "SymEnv":
        bindings = {
            var: bound for var, bound in self.bindings.items() if other.bindings.get(var) == bound
        }
        return SymEnv(bindings, self.facts & other.facts, self.depth_cap, max(self.serial, other.serial))

    # Bindings only disappear along a join chain.
    widen = join

    def _capped(self) -> "SymEnv":
        if all(depth(bound) <= self.depth_cap for bound in self.bindings.values()):
            return self
        bindings = {var: bound for var, bound in self.bindings.items() if depth(bound) <= self.depth_cap}
        logger.debug("Dropped %d symbolic binding(s) over the depth cap", len(self.bindings) - len(bindings))
        return SymEnv(bindings, self.facts, self.depth_cap, self.serial)

    def resolve_guard(self, var: Hashable, branch: bool) -> list[Relation]:
        """Primitive relations implied by ``var`` being ``branch``."""

        return _relations(self.bindings.get(var), branch)

    def render(self) -> list[str]:
        return [f"{var} = {render(bound)}" for var, bound in sorted(self.bindings.items(), key=lambda kv: str(kv[0]))]


def _relations(expr: Expr | None, branch: bool) -> list[Relation]:
    if not isinstance(expr, Op):
        return []
    if expr.name == "not":
        return _relations(expr.args[0], not branch)
    if expr.name in {"and", "or"}:
        # a AND b true, or a OR b false: both conjuncts hold.
        if (expr.name == "and") == branch:
            return _relations(expr.args[0], branch) + _relations(expr.args[1], branch)
        return []
    if expr.name in {"mem"}:
        return [Relation("mem" if branch else "nmem", expr.args[0], expr.args[1])]
    if expr.name in RELATIONS:
        rel = expr.name if branch else NEGATED[expr.name]
        inner = expr.args[0]
        if isinstance(inner, Op) and inner.name == "compare":
            return [Relation(rel, inner.args[0], inner.args[1])]
        return [Relation(rel, inner, Const(0, "int"))]
    return []


def sym_resolve_guard(env: SymEnv, var: Hashable, branch: bool) -> list[Relation]:
    return env.resolve_guard(var, branch)


# ---------------------------------------------------------------------------
# Equality classes


@dataclass(frozen=True)
class EqClasses:
    """A partition of some variables into classes of definitely-equal ones."""

    classes: frozenset[frozenset[Hashable]] = frozenset()

    def _find(self, var: Hashable) -> frozenset[Hashable] | None:
        for cls in self.classes:
            if var in cls:
                return cls
        return None

    def members(self, var: Hashable) -> frozenset[Hashable]:
        found = self._find(var)
        return found if found is not None else frozenset({var})

    def same(self, x: Hashable, y: Hashable) -> bool:
        return x == y or y in self.members(x)

    def representative(self, var: Hashable) -> Hashable:
        return min(self.members(var), key=str)

    def merge(self, x: Hashable, y: Hashable) -> "EqClasses":
        if self.same(x, y):
            return self
        cx, cy = self.members(x), self.members(y)
        kept = frozenset(cls for cls in self.classes if cls is not cx and cls is not cy and cls != cx and cls != cy)
        return EqClasses(kept | {cx | cy})

    def forget(self, var: Hashable) -> "EqClasses":
        cls = self._find(var)
        if cls is None:
            return self
        rest = cls - {var}
        kept = frozenset(c for c in self.classes if c != cls)
        return EqClasses(kept | {rest} if len(rest) > 1 else kept)

    def rename(self, mapping: Mapping[Hashable, Hashable]) -> "EqClasses":
        if not mapping:
            return self
        renamed = (frozenset(mapping.get(v, v) for v in cls) for cls in self.classes)
        return EqClasses(frozenset(cls for cls in renamed if len(cls) > 1))

    def restrict(self, live: Callable[[Hashable], bool]) -> "EqClasses":
        kept = (frozenset(v for v in cls if live(v)) for cls in self.classes)
        return EqClasses(frozenset(cls for cls in kept if len(cls) > 1))

    def pairs(self) -> Iterable[tuple[Hashable, Hashable]]:
        for cls in self.classes:
            ordered = sorted(cls, key=str)
            for first, second in zip(ordered, ordered[1:]):
                yield first, second

    def leq(self, other: "EqClasses") -> bool:
        """More equalities is more precise: every class of ``other`` fits in one of ours."""
        return all(any(cls <= mine for mine in self.classes) for cls in other.classes)

    def join(self, other: "EqClasses") -> "EqClasses":
        meets = (a & b for a in self.classes for b in other.classes)
        return EqClasses(frozenset(cls for cls in meets if len(cls) > 1))

    widen = join

    def meet(self, other: "EqClasses") -> "EqClasses":
        result = self
        for x, y in other.pairs():
            result = result.merge(x, y)
        return result


def eq_merge(p: EqClasses, x: Hashable, y: Hashable) -> EqClasses:
    return p.merge(x, y)


def eq_forget(p: EqClasses, x: Hashable) -> EqClasses:
    return p.forget(x)


def eq_same(p: EqClasses, x: Hashable, y: Hashable) -> bool:
    return p.same(x, y)


# ---------------------------------------------------------------------------
# Addresses

IS_SENDER = BoolAbs(True, False)
NOT_SENDER = BoolAbs(False, True)


@dataclass(frozen=True)
class AddrAbs:
    """Powerset of address constants × relation to the current sender.

    ``sender`` is a boolean abstraction of "this address equals $sender".
    """

    consts: ConstSet = field(default_factory=ConstSet)
    sender: BoolAbs = BOOL_TOP

    def __post_init__(self) -> None:
        if self.consts.is_bottom or self.sender.is_bottom:
            object.__setattr__(self, "consts", ConstSet(frozenset(), self.consts.cap))
            object.__setattr__(self, "sender", BoolAbs(False, False))

    @classmethod
    def of(cls, *addresses: str, cap: int | None = None) -> "AddrAbs":
        consts = ConstSet.of(*addresses) if cap is None else ConstSet.of(*addresses, cap=cap)
        return cls(consts, BOOL_TOP)

    @classmethod
    def current_sender(cls) -> "AddrAbs":
        return cls(ConstSet(), IS_SENDER)

    @property
    def is_bottom(self) -> bool:
        return self.consts.is_bottom

    def __str__(self) -> str:
        if self.is_bottom:
            return "⊥"
        rel = {IS_SENDER: "= $sender", NOT_SENDER: "≠ $sender"}.get(self.sender, "")
        consts = "" if self.consts.is_top else str(self.consts)
        return " ".join(part for part in (consts, rel) if part) or "⊤"

    def leq(self, other: "AddrAbs") -> bool:
        return self.is_bottom or (self.consts.leq(other.consts) and self.sender.leq(other.sender))

    def join(self, other: "AddrAbs") -> "AddrAbs":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        return AddrAbs(self.consts.join(other.consts), self.sender.join(other.sender))

    def meet(self, other: "AddrAbs") -> "AddrAbs":
        return AddrAbs(self.consts.meet(other.consts), self.sender.meet(other.sender))

    def widen(self, other: "AddrAbs") -> "AddrAbs":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        return AddrAbs(self.consts.widen(other.consts), self.sender.widen(other.sender))

    def narrow(self, other: "AddrAbs") -> "AddrAbs":
        return AddrAbs(self.consts.narrow(other.consts), self.sender.narrow(other.sender))

    def assume_eq_sender(self) -> "AddrAbs":
        return AddrAbs(self.consts, self.sender.meet(IS_SENDER))

    def assume_neq_sender(self) -> "AddrAbs":
        return AddrAbs(self.consts, self.sender.meet(NOT_SENDER))

    def forget_sender(self) -> "AddrAbs":
        """The same addresses seen from a call by another, unknown sender."""
        return self if self.is_bottom else AddrAbs(self.consts, BOOL_TOP)

    def compare(self, other: "AddrAbs") -> str:
        return addr_compare(self, other)


def addr_join(a: AddrAbs, b: AddrAbs) -> AddrAbs:
    return a.join(b)


def addr_assume_eq_sender(a: AddrAbs) -> AddrAbs:
    return a.assume_eq_sender()


def addr_assume_neq_sender(a: AddrAbs) -> AddrAbs:
    return a.assume_neq_sender()


def addr_compare(a: AddrAbs, b: AddrAbs) -> str:
    """``eq``, ``neq`` or ``unknown``."""

    if a.is_bottom or b.is_bottom:
        return "unknown"
    if a.sender == IS_SENDER and b.sender == IS_SENDER:
        return "eq"
    if {a.sender, b.sender} == {IS_SENDER, NOT_SENDER}:
        return "neq"
    verdict = a.consts.compare(b.consts)
    return verdict
