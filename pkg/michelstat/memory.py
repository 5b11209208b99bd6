"""Stack cells as variables, type decomposition and container summaries.

A stack cell of type ``T`` is represented by one :class:`CellVar` per scalar
leaf of ``T`` (see :func:`decompose`). Structural instructions only rename
cells; values live in :attr:`State.values`, next to the symbolic bindings and
equality classes of the same variables. ``None`` stands for the bottom state.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Mapping

from .domains import (
    BOOL_BOTTOM,
    BOOL_TOP,
    BOTTOM,
    FLIPPED,
    NONNEG,
    BoolAbs,
    ConstSet,
    Interval,
    itv_assume,
    kind_range,
)
from .mtypes import MType, is_split_map
from .settings import AnalysisConfig
from .symbolic import (
    IS_SENDER,
    NOT_SENDER,
    AddrAbs,
    Const,
    EqClasses,
    Expr,
    Op,
    Relation,
    SymEnv,
    normalize,
)
from .values import Left

logger = logging.getLogger(__name__)

Path = tuple[str, ...]
Value = Any  # Interval | BoolAbs | ConstSet | AddrAbs

SCALAR_KINDS = {
    "int": "int",
    "nat": "nat",
    "mutez": "mutez",
    "timestamp": "timestamp",
    "bool": "bool",
    "string": "string",
    "unit": "unit",
    "address": "address",
}
NUMERIC_KINDS = frozenset({"int", "nat", "mutez", "timestamp", "tag"})
CONTEXT_KINDS = {
    "sender": "address",
    "source": "address",
    "self": "address",
    "amount": "mutez",
    "balance": "mutez",
    "now": "timestamp",
}
# Paths below one of these steps may be empty (None branch, empty container...).
GUARDED_STEPS = frozenset(
    {
        "some-content",
        "left-content",
        "right-content",
        "list-elems",
        "opslist-elems",
        "set-elems",
        "map-keys",
        "map-vals",
        "map-sender-val",
        "map-nonsender-val",
    }
)


@dataclass(frozen=True)
class CellVar:
    root: int | str
    path: Path = ()

    def __str__(self) -> str:
        if isinstance(self.root, int):
            head = f"s{self.root}"
        elif self.root in CONTEXT_KINDS:
            head = f"${self.root}"
        else:
            head = self.root
        return ".".join((head,) + self.path)

    def child(self, *steps: str) -> "CellVar":
        return CellVar(self.root, self.path + steps)

    @property
    def guarded(self) -> bool:
        return any(step in GUARDED_STEPS for step in self.path)


CONTEXT_VARS = {name: CellVar(name) for name in CONTEXT_KINDS}


@lru_cache(maxsize=None)
def decompose(ty: MType, split: bool = False) -> tuple[tuple[Path, str], ...]:
    """Every scalar leaf of ``ty`` as ``(path, kind)``."""

    return tuple(_leaves(ty, split, ()))


def _leaves(ty: MType, split: bool, prefix: Path) -> Iterable[tuple[Path, str]]:
    prim = ty.prim
    if prim in SCALAR_KINDS:
        yield prefix, SCALAR_KINDS[prim]
    elif prim == "pair":
        yield from _leaves(ty.args[0], split, prefix + ("fst",))
        yield from _leaves(ty.args[1], split, prefix + ("snd",))
    elif prim == "option":
        yield prefix + ("option-tag",), "tag"
        yield from _leaves(ty.args[0], split, prefix + ("some-content",))
    elif prim == "or":
        yield prefix + ("union-tag",), "tag"
        yield from _leaves(ty.args[0], split, prefix + ("left-content",))
        yield from _leaves(ty.args[1], split, prefix + ("right-content",))
    elif prim == "list":
        ops = ty.args[0].prim == "operation"
        yield from _leaves(ty.args[0], split, prefix + ("opslist-elems" if ops else "list-elems",))
        yield prefix + ("opslist-len" if ops else "list-len",), "nat"
    elif prim == "set":
        yield from _leaves(ty.args[0], split, prefix + ("set-elems",))
        yield prefix + ("set-card",), "nat"
    elif prim == "map":
        yield from _leaves(ty.args[0], split, prefix + ("map-keys",))
        if split and is_split_map(ty):
            yield prefix + ("map-sender-present",), "tag"
            yield prefix + ("map-sender-val",), "mutez"
            yield prefix + ("map-nonsender-val",), "mutez"
        else:
            yield from _leaves(ty.args[1], split, prefix + ("map-vals",))
        yield prefix + ("map-card",), "nat"
    elif prim == "contract":
        yield prefix + ("contract-addr",), "address"
        yield prefix + ("contract-entry",), "string"
    elif prim == "operation":
        yield prefix + ("op-target",), "address"
        yield prefix + ("op-entry",), "string"
        yield prefix + ("op-amount",), "mutez"
    else:  # pragma: no cover - MType rejects unknown constructors
        raise ValueError(f"cannot decompose {ty}")


def is_guarded(path: Path) -> bool:
    return any(step in GUARDED_STEPS for step in path)


def len_step(ty: MType) -> str:
    if ty.prim == "list":
        return "opslist-len" if ty.args[0].prim == "operation" else "list-len"
    return "set-card" if ty.prim == "set" else "map-card"


def elems_step(ty: MType) -> str:
    if ty.prim == "list":
        return "opslist-elems" if ty.args[0].prim == "operation" else "list-elems"
    return "set-elems" if ty.prim == "set" else "map-keys"


# ---------------------------------------------------------------------------
# Scalar value factories


def top_of(kind: str, cap: int = 8) -> Value:
    if kind in NUMERIC_KINDS:
        return kind_range(kind)
    if kind == "bool":
        return BOOL_TOP
    if kind == "unit":
        return ConstSet.of((), cap=cap)
    if kind == "string":
        return ConstSet(None, cap)
    if kind == "address":
        return AddrAbs(ConstSet(None, cap), BOOL_TOP)
    raise ValueError(f"Unknown cell kind '{kind}'")


def bottom_of(kind: str) -> Value:
    if kind in NUMERIC_KINDS:
        return BOTTOM
    if kind == "bool":
        return BOOL_BOTTOM
    if kind in {"unit", "string"}:
        return ConstSet(frozenset())
    if kind == "address":
        return AddrAbs(ConstSet(frozenset()), BOOL_BOTTOM)
    raise ValueError(f"Unknown cell kind '{kind}'")


def const_of(kind: str, value: Any, cap: int = 8) -> Value:
    if kind in NUMERIC_KINDS:
        return Interval.of(int(value))
    if kind == "bool":
        return BoolAbs.of(bool(value))
    if kind in {"unit", "string"}:
        return ConstSet.of(value, cap=cap)
    if kind == "address":
        return AddrAbs.of(value, cap=cap)
    raise ValueError(f"Unknown cell kind '{kind}'")


def contains(abstract: Value, value: Any, sender: str | None = None) -> bool:
    """γ-membership of one concrete scalar."""

    if isinstance(abstract, Interval):
        return int(value) in abstract
    if isinstance(abstract, BoolAbs):
        return abstract.can_true if value else abstract.can_false
    if isinstance(abstract, ConstSet):
        return value in abstract
    if isinstance(abstract, AddrAbs):
        if abstract.is_bottom or value not in abstract.consts:
            return False
        if sender is None:
            return True
        return abstract.sender.can_true if value == sender else abstract.sender.can_false
    raise TypeError(f"not an abstract value: {abstract!r}")


def join_values(a: Mapping[Path, Value], b: Mapping[Path, Value]) -> dict[Path, Value]:
    return {path: a[path].join(b[path]) for path in a}


# ---------------------------------------------------------------------------
# Abstract states


@dataclass(frozen=True)
class Cell:
    root: int | str
    type: MType

    def var(self, *path: str) -> CellVar:
        return CellVar(self.root, tuple(path))


@dataclass(frozen=True)
class State:
    """A non-bottom abstract state; the stack lists cells top first."""

    stack: tuple[Cell, ...]
    values: Mapping[CellVar, Value]
    sym: SymEnv = field(default_factory=SymEnv)
    eqs: EqClasses = field(default_factory=EqClasses)

    def value(self, var: CellVar) -> Value:
        return self.values[var]

    def top(self, index: int = 0) -> Cell:
        return self.stack[index]

    def cell(self, root: int | str) -> Cell | None:
        for cell in self.stack:
            if cell.root == root:
                return cell
        return None


MaybeState = State | None


class Memory:
    """Cell bookkeeping for one analysis instance (owns the fresh-root counter)."""

    def __init__(self, config: AnalysisConfig) -> None:
        self.config = config
        self.symbolic = config.symbolic
        self.split = config.sender_split
        self.cap = config.const_set_cap
        self._roots = itertools.count(1)
        # Types of every root ever created, so hidden (DIP, ITER) cells keep their kinds.
        self._types: dict[int | str, MType] = {}

    # -- type helpers --------------------------------------------------------

    def fresh_root(self) -> int:
        return next(self._roots)

    def leaves(self, ty: MType) -> tuple[tuple[Path, str], ...]:
        return decompose(ty, self.split)

    def split_map(self, ty: MType) -> bool:
        return self.split and is_split_map(ty)

    def kind_of(self, state: State, var: CellVar) -> str:
        if isinstance(var.root, str) and var.root in CONTEXT_KINDS and not var.path:
            return CONTEXT_KINDS[var.root]
        ty = self._types.get(var.root)
        if ty is None:
            raise KeyError(f"{var} is not a known cell")
        return dict(self.leaves(ty))[var.path]

    def new_cell(self, ty: MType) -> Cell:
        cell = Cell(self.fresh_root(), ty)
        self._types[cell.root] = ty
        return cell

    def top_values(self, ty: MType) -> dict[Path, Value]:
        return {path: top_of(kind, self.cap) for path, kind in self.leaves(ty)}

    def bottom_values(self, ty: MType) -> dict[Path, Value]:
        return {path: bottom_of(kind) for path, kind in self.leaves(ty)}

    def default_values(self, ty: MType) -> dict[Path, Value]:
        """Zero-like initial value: 0, False, "", Unit, None, Left _, empty containers."""

        prim = ty.prim
        if prim in {"int", "nat", "mutez", "timestamp"}:
            return {(): Interval.of(0)}
        if prim == "bool":
            return {(): BoolAbs.of(False)}
        if prim == "string":
            return {(): ConstSet.of("", cap=self.cap)}
        if prim == "unit":
            return {(): ConstSet.of((), cap=self.cap)}
        if prim == "address":
            return {(): top_of("address", self.cap)}
        if prim == "pair":
            return {
                **_prefixed(("fst",), self.default_values(ty.args[0])),
                **_prefixed(("snd",), self.default_values(ty.args[1])),
            }
        if prim == "option":
            return {("option-tag",): Interval.of(0), **_prefixed(("some-content",), self.bottom_values(ty.args[0]))}
        if prim == "or":
            return {
                ("union-tag",): Interval.of(0),
                **_prefixed(("left-content",), self.default_values(ty.args[0])),
                **_prefixed(("right-content",), self.bottom_values(ty.args[1])),
            }
        values = self.bottom_values(ty)
        values[(len_step(ty),)] = Interval.of(0)
        if self.split_map(ty):
            values[("map-sender-present",)] = Interval.of(0)
        return values

    def abstract_value(self, value: Any, ty: MType) -> dict[Path, Value]:
        """The best abstraction of one concrete value (the sender is unknown)."""

        prim = ty.prim
        if prim in SCALAR_KINDS:
            return {(): const_of(SCALAR_KINDS[prim], value, self.cap)}
        if prim == "pair":
            return {
                **_prefixed(("fst",), self.abstract_value(value[0], ty.args[0])),
                **_prefixed(("snd",), self.abstract_value(value[1], ty.args[1])),
            }
        if prim == "option":
            if value is None:
                return {("option-tag",): Interval.of(0), **_prefixed(("some-content",), self.bottom_values(ty.args[0]))}
            return {("option-tag",): Interval.of(1), **_prefixed(("some-content",), self.abstract_value(value.value, ty.args[0]))}
        if prim == "or":
            left = isinstance(value, Left)
            return {
                ("union-tag",): Interval.of(0 if left else 1),
                **_prefixed(
                    ("left-content",),
                    self.abstract_value(value.value, ty.args[0]) if left else self.bottom_values(ty.args[0]),
                ),
                **_prefixed(
                    ("right-content",),
                    self.bottom_values(ty.args[1]) if left else self.abstract_value(value.value, ty.args[1]),
                ),
            }
        if prim == "contract":
            return {
                ("contract-addr",): const_of("address", value.address, self.cap),
                ("contract-entry",): const_of("string", value.entrypoint, self.cap),
            }
        if prim == "operation":
            return {
                ("op-target",): const_of("address", value.target, self.cap),
                ("op-entry",): const_of("string", value.entrypoint, self.cap),
                ("op-amount",): Interval.of(value.amount),
            }
        values = self.bottom_values(ty)
        values[(len_step(ty),)] = Interval.of(len(value))
        if prim in {"list", "set"}:
            step = (elems_step(ty),)
            for item in value:
                values = {**values, **_join_into(values, step, self.abstract_value(item, ty.args[0]))}
            return values
        for key, item in value.items():
            values = {**values, **_join_into(values, ("map-keys",), self.abstract_value(key, ty.args[0]))}
            if self.split_map(ty):
                for step in ("map-sender-val", "map-nonsender-val"):
                    values[(step,)] = values[(step,)].join(Interval.of(item))
            else:
                values = {**values, **_join_into(values, ("map-vals",), self.abstract_value(item, ty.args[1]))}
        if self.split_map(ty):
            values[("map-sender-present",)] = Interval(0, 1 if value else 0)
        return values

    # -- state construction ----------------------------------------------------

    def context_state(self, values: Mapping[str, Value]) -> State:
        return State((), {CONTEXT_VARS[name]: value for name, value in values.items()})

    def push(
        self,
        state: State,
        ty: MType,
        values: Mapping[Path, Value] | None = None,
        exprs: Mapping[Path, Expr | None] | None = None,
        copies: Mapping[Path, CellVar] | None = None,
    ) -> MaybeState:
        """Push a fresh cell of type ``ty``; missing components are ⊤."""

        cell = self.new_cell(ty)
        root = cell.root
        new_values = dict(state.values)
        for path, kind in self.leaves(ty):
            value = (values or {}).get(path)
            if value is None:
                value = top_of(kind, self.cap)
            elif isinstance(value, Interval):
                value = value.meet(kind_range(kind))
            if value.is_bottom and not is_guarded(path):
                return None
            new_values[CellVar(root, path)] = value
        result = replace(state, stack=(cell,) + state.stack, values=new_values)
        if self.symbolic:
            sym, eqs = result.sym, result.eqs
            for path, expr in (exprs or {}).items():
                sym = sym.assign(CellVar(root, path), expr)
            for path, source in (copies or {}).items():
                target = CellVar(root, path)
                sym = sym.assign(target, source)
                eqs = eqs.merge(target, source)
            result = replace(result, sym=sym, eqs=eqs)
        return result

    def cell_values(self, state: State, cell: Cell, prefix: Path = ()) -> dict[Path, Value]:
        """Values of the leaves of ``cell`` under ``prefix``, keyed by the path after it."""

        size = len(prefix)
        return {
            path[size:]: state.values[CellVar(cell.root, path)]
            for path, _ in self.leaves(cell.type)
            if path[:size] == prefix
        }

    def cell_vars(self, cell: Cell, prefix: Path = ()) -> dict[Path, CellVar]:
        size = len(prefix)
        return {
            path[size:]: CellVar(cell.root, path)
            for path, _ in self.leaves(cell.type)
            if path[:size] == prefix
        }

    def pop(self, state: State, count: int = 1) -> tuple[State, tuple[Cell, ...]]:
        """Detach the top cells from the stack; their variables stay live."""

        return replace(state, stack=state.stack[count:]), state.stack[:count]

    def forget(self, state: State, cells: Iterable[Cell]) -> State:
        doomed = [CellVar(cell.root, path) for cell in cells for path, _ in self.leaves(cell.type)]
        return self.forget_vars(state, doomed)

    def forget_vars(self, state: State, doomed: list[CellVar]) -> State:
        if not doomed:
            return state
        values = dict(state.values)
        for var in doomed:
            values.pop(var, None)
        sym, eqs = state.sym, state.eqs
        if self.symbolic:
            dead = set(doomed)
            for var in doomed:
                alias = next((m for m in sorted(eqs.members(var), key=str) if m not in dead), None)
                sym = sym.forget(var, alias)
            for var in doomed:
                eqs = eqs.forget(var)
        return State(state.stack, values, sym, eqs)

    def drop(self, state: State, count: int = 1) -> State:
        state, cells = self.pop(state, count)
        return self.forget(state, cells)

    def dup(self, state: State, depth: int) -> MaybeState:
        """DUP n: fresh cell, component-wise copy, equalities recorded."""

        source = state.stack[depth - 1]
        copies = self.cell_vars(source)
        return self.push(state, source.type, self.cell_values(state, source), copies=copies)

    def permute(self, state: State, order: list[int]) -> State:
        return replace(state, stack=tuple(state.stack[i] for i in order) + state.stack[len(order):])

    def rename(self, state: State, mapping: Mapping[CellVar, CellVar]) -> State:
        if not mapping:
            return state
        values = {mapping.get(var, var): value for var, value in state.values.items()}
        sym, eqs = state.sym, state.eqs
        if self.symbolic:
            sym, eqs = sym.rename(mapping), eqs.rename(mapping)
        return State(state.stack, values, sym, eqs)

    def rebase(self, state: State, cell: Cell, prefix: Path, ty: MType, keep: bool = False) -> tuple[State, Cell]:
        """Turn the component of the (already popped) ``cell`` under ``prefix`` into a new cell.

        Leaves outside ``prefix`` are forgotten unless ``keep``. The new cell
        is pushed on top of the stack.
        """

        new = self.new_cell(ty)
        size = len(prefix)
        mapping: dict[CellVar, CellVar] = {}
        others: list[CellVar] = []
        for path, _ in self.leaves(cell.type):
            var = CellVar(cell.root, path)
            if path[:size] == prefix:
                mapping[var] = CellVar(new.root, path[size:])
            elif not keep:
                others.append(var)
        state = self.forget_vars(state, others)
        state = self.rename(state, mapping)
        return replace(state, stack=(new,) + state.stack), new

    def combine(self, state: State, parts: list[tuple[Path, Cell]], ty: MType) -> tuple[State, Cell]:
        """Build a new (already pushed) cell of type ``ty`` from popped cells placed at paths."""

        new = self.new_cell(ty)
        mapping = {
            CellVar(cell.root, path): CellVar(new.root, prefix + path)
            for prefix, cell in parts
            for path, _ in self.leaves(cell.type)
        }
        state = self.rename(state, mapping)
        return replace(state, stack=(new,) + state.stack), new

    def set_values(self, state: State, cell: Cell, values: Mapping[Path, Value], prefix: Path = ()) -> MaybeState:
        """Overwrite leaves under ``prefix`` (fresh information, no equalities kept)."""

        new_values = dict(state.values)
        doomed = []
        for path, value in values.items():
            var = CellVar(cell.root, prefix + path)
            if value.is_bottom and not is_guarded(prefix + path):
                return None
            new_values[var] = value
            doomed.append(var)
        result = replace(state, values=new_values)
        if self.symbolic:
            sym, eqs = result.sym, result.eqs
            for var in doomed:
                sym = sym.assign(var, None)
                eqs = eqs.forget(var)
            result = replace(result, sym=sym, eqs=eqs)
        return result

    def check_strong(self, state: MaybeState, cell: Cell) -> MaybeState:
        """Bottom when a leaf that must hold a value of ``cell`` is ⊥."""

        if state is None:
            return None
        for path, _ in self.leaves(cell.type):
            if not is_guarded(path) and state.values[CellVar(cell.root, path)].is_bottom:
                return None
        return state

    # -- refinement ----------------------------------------------------------

    def refine(self, state: MaybeState, var: CellVar, value: Value) -> MaybeState:
        """Meet ``var`` (and every variable known equal to it) with ``value``."""

        if state is None:
            return None
        targets = state.eqs.members(var) if self.symbolic else frozenset({var})
        values = dict(state.values)
        for target in targets:
            if target not in values:
                continue
            refined = values[target].meet(value)
            if refined.is_bottom and not target.guarded:
                return None
            values[target] = refined
        return replace(state, values=values)

    def merge(self, state: MaybeState, x: CellVar, y: CellVar) -> MaybeState:
        if state is None or not self.symbolic or x == y:
            return state
        both = state.values[x].meet(state.values[y])
        state = replace(state, eqs=state.eqs.merge(x, y))
        return self.refine(state, x, both)

    def resolve(self, state: State, expr: Expr) -> list[CellVar] | Const:
        """Live variables denoting ``expr``, or the constant itself."""

        if isinstance(expr, Const):
            return expr
        found = [var for var in state.sym.lookup(expr) if var in state.values]
        return found

    def assume(self, state: MaybeState, relation: Relation) -> MaybeState:
        """Refine ``state`` by a primitive relation produced by a guard."""

        if state is None:
            return None
        if relation.rel == "mem":
            return state
        if relation.rel == "nmem":
            return replace(state, sym=state.sym.add_fact(relation)) if self.symbolic else state
        lefts = self.resolve(state, relation.left)
        rights = self.resolve(state, relation.right)
        if isinstance(lefts, Const):
            if isinstance(rights, Const) or not rights:
                return state
            return self.assume(state, Relation(FLIPPED[relation.rel], relation.right, relation.left))
        if not lefts:
            return state
        if isinstance(rights, Const):
            return self._assume_const(state, relation.rel, lefts, rights)
        if not rights:
            return state
        return self._assume_vars(state, relation, lefts, rights)

    def _assume_const(self, state: State, rel: str, lefts: list[CellVar], const: Const) -> MaybeState:
        kind = self.kind_of(state, lefts[0])
        other = const_of(kind, const.value, self.cap)
        refined = _refine_pair(rel, state.values[lefts[0]], other)[0]
        if refined is None:
            return state
        for var in lefts:
            state = self.refine(state, var, refined)
            if state is None:
                return None
        return state

    def _assume_vars(self, state: State, relation: Relation, lefts: list[CellVar], rights: list[CellVar]) -> MaybeState:
        x, y = lefts[0], rights[0]
        new_x, new_y = _refine_pair(relation.rel, state.values[x], state.values[y])
        result: MaybeState = state
        if new_x is not None:
            for var in lefts:
                result = self.refine(result, var, new_x)
        if new_y is not None:
            for var in rights:
                result = self.refine(result, var, new_y)
        if result is None:
            return None
        if relation.rel == "eq":
            result = self.merge(result, x, y)
        elif self.symbolic and relation.rel in {"lt", "le", "gt", "ge", "neq"}:
            result = replace(result, sym=result.sym.add_fact(relation))
        return result

    def known(self, state: State, rel: str, a: CellVar, b: CellVar) -> bool:
        """Whether ``a rel b`` was established by a guard on every path."""

        if not self.symbolic:
            return False
        if state.eqs.same(a, b) and rel in {"eq", "le", "ge"}:
            return True
        rep = state.eqs.representative
        ea = normalize(state.sym.value_of(a), rep)
        eb = normalize(state.sym.value_of(b), rep)
        if ea == eb and rel in {"eq", "le", "ge"}:
            return True
        implied = {"ge": {"ge", "gt", "eq"}, "le": {"le", "lt", "eq"}, "gt": {"gt"}, "lt": {"lt"}, "eq": {"eq"}, "neq": {"neq", "lt", "gt"}}[rel]
        for fact in state.sym.facts:
            left, right = normalize(fact.left, rep), normalize(fact.right, rep)
            if (left, right) == (ea, eb) and fact.rel in implied:
                return True
            if (left, right) == (eb, ea) and FLIPPED[fact.rel] in implied:
                return True
        return False

    # -- joins -----------------------------------------------------------------

    def align(self, a: State, b: State) -> tuple[State, State]:
        """Rename both stacks to the same roots, depth by depth."""

        mapping_a: dict[CellVar, CellVar] = {}
        mapping_b: dict[CellVar, CellVar] = {}
        stack: list[Cell] = []
        for cell_a, cell_b in zip(a.stack, b.stack):
            if cell_a.root == cell_b.root:
                stack.append(cell_a)
                continue
            root = self.new_cell(cell_a.type).root
            for path, _ in self.leaves(cell_a.type):
                mapping_a[CellVar(cell_a.root, path)] = CellVar(root, path)
                mapping_b[CellVar(cell_b.root, path)] = CellVar(root, path)
            stack.append(Cell(root, cell_a.type))
        a = replace(self.rename(a, mapping_a), stack=tuple(stack))
        b = replace(self.rename(b, mapping_b), stack=tuple(stack))
        return a, b

    def join(self, a: MaybeState, b: MaybeState) -> MaybeState:
        return self._combine(a, b, "join")

    def widen(self, a: MaybeState, b: MaybeState) -> MaybeState:
        return self._combine(a, b, "widen")

    def _combine(self, a: MaybeState, b: MaybeState, how: str) -> MaybeState:
        if a is None:
            return b
        if b is None:
            return a
        a, b = self.align(a, b)
        values = {}
        for var, value in a.values.items():
            other = b.values[var]
            if how == "join":
                values[var] = value.join(other)
            else:
                widened = value.widen(other)
                if isinstance(widened, Interval):
                    widened = widened.meet(kind_range(self.kind_of(a, var)))
                values[var] = widened
        return State(a.stack, values, a.sym.join(b.sym), a.eqs.join(b.eqs))

    def narrow(self, a: MaybeState, b: MaybeState) -> MaybeState:
        if a is None or b is None:
            return None
        a, b = self.align(a, b)
        values = {var: value.narrow(b.values[var]) for var, value in a.values.items()}
        return State(a.stack, values, b.sym, b.eqs)

    def leq(self, a: MaybeState, b: MaybeState) -> bool:
        if a is None:
            return True
        if b is None:
            return False
        a, b = self.align(a, b)
        return all(value.leq(b.values[var]) for var, value in a.values.items()) and (
            not self.symbolic or (a.sym.leq(b.sym) and a.eqs.leq(b.eqs))
        )

    def restrict(self, state: State) -> State:
        """Drop symbolic information about variables that are no longer live."""

        if not self.symbolic:
            return state
        live = state.values.__contains__
        return replace(state, sym=state.sym.restrict(live), eqs=state.eqs.restrict(live))

    # -- maps, sets and lists ------------------------------------------------------

    def mapref(self, state: State, cell: Cell) -> Expr:
        return state.sym.value_of(cell.var(len_step(cell.type)))

    def absent(self, state: State, cell: Cell, key: Cell) -> bool:
        """Whether ``key`` is known not to be in the map/set ``cell``."""

        if state.values[cell.var(len_step(cell.type))].hi <= 0:
            return True
        if not self.symbolic:
            return False
        rep = state.eqs.representative
        mapref = normalize(self.mapref(state, cell), rep)
        key_expr = normalize(state.sym.value_of(key.var()), rep)
        for fact in state.sym.facts:
            if fact.rel == "nmem" and normalize(fact.left, rep) == mapref and normalize(fact.right, rep) == key_expr:
                return True
        return False

    def sender_relation(self, state: State, key: Cell) -> str:
        """``eq``/``neq``/``unknown``: how a map key relates to $sender."""

        value = state.values[key.var()]
        if value.sender == IS_SENDER:
            return "eq"
        if value.sender == NOT_SENDER:
            return "neq"
        return "unknown"

    def map_mem(self, state: State) -> MaybeState:
        """MEM on a set or map: key on top, container below."""

        state, (key, container) = self.pop(state, 2)
        result = self._membership(state, container, key)
        expr = Op("mem", (self.mapref(state, container), key.var())) if key.type.is_scalar else None
        pushed = self.push(state, MType("bool"), {(): result}, exprs={(): expr})
        return None if pushed is None else self.forget(pushed, (key, container))

    def _membership(self, state: State, container: Cell, key: Cell) -> BoolAbs:
        card = state.values[container.var(len_step(container.type))]
        if self.absent(state, container, key):
            return BoolAbs.of(False)
        if self.split_map(container.type) and self.sender_relation(state, key) == "eq":
            present = state.values[container.var("map-sender-present")]
            return BoolAbs(1 in present, 0 in present)
        keys = self.cell_values(state, container, (elems_step(container.type),))
        disjoint = any(value.meet(state.values[key.var(*path)]).is_bottom for path, value in keys.items())
        if disjoint:
            return BoolAbs.of(False)
        return BOOL_TOP

    def map_get(self, state: State) -> MaybeState:
        """GET: key on top, map below; pushes an option of the value type."""

        state, (key, container) = self.pop(state, 2)
        value_type = container.type.args[1]
        result_type = MType("option", (value_type,))
        tag_expr: Expr | None = None
        content_expr: Expr | None = None
        if self.symbolic and key.type.is_scalar:
            mapref = self.mapref(state, container)
            tag_expr = Op("mem", (mapref, key.var()))
            if value_type.is_scalar:
                content_expr = Op("get", (mapref, key.var()))
        copies: dict[Path, CellVar] = {}
        membership = self._membership(state, container, key)
        if self.split_map(container.type):
            relation = self.sender_relation(state, key)
            present = state.values[container.var("map-sender-present")]
            sender_val = state.values[container.var("map-sender-val")]
            other_val = state.values[container.var("map-nonsender-val")]
            card = state.values[container.var("map-card")]
            if relation == "eq":
                tag = present
                content = sender_val
                copies = {("option-tag",): container.var("map-sender-present")}
                if not sender_val.is_bottom:
                    copies[("some-content",)] = container.var("map-sender-val")
            elif relation == "neq":
                others_possible = card.hi - present.lo >= 1
                tag = Interval(0, 1 if others_possible else 0)
                content = other_val
            else:
                tag = TAG_TOP
                content = (sender_val if present.hi >= 1 else BOTTOM).join(other_val)
            if not membership.can_true:
                tag = tag.meet(Interval.of(0))
            values = {("option-tag",): tag, ("some-content",): content}
        else:
            values = {
                ("option-tag",): Interval(0 if membership.can_false else 1, 1 if membership.can_true else 0),
                **_prefixed(("some-content",), self.cell_values(state, container, ("map-vals",))),
            }
        if values[("option-tag",)].hi < 1:
            values = {**values, **_prefixed(("some-content",), self.bottom_values(value_type))}
        exprs = {("option-tag",): tag_expr}
        if content_expr is not None and ("some-content",) not in copies:
            exprs[("some-content",)] = content_expr
        pushed = self.push(state, result_type, values, exprs=exprs, copies=copies)
        if pushed is None:
            return None
        if content_expr is not None and ("some-content",) in copies:
            # The copy keeps the sender-side equality; the read expression is recorded too.
            pushed = replace(pushed, sym=pushed.sym.assign(pushed.top().var("some-content"), content_expr))
        return self.forget(pushed, (key, container))

    def update(self, state: State) -> tuple[MaybeState, bool]:
        """UPDATE on sets and maps. Returns the new state and the decrease witness.

        Stack: key, then the bool flag (sets) or option value (maps), then the container.
        """

        container = state.stack[2]
        if container.type.prim == "set":
            return self._set_update(state), False
        if self.split_map(container.type):
            return self.smap_update(state)
        return self._plain_map_update(state), False

    def _card_insert(self, card: Interval, absent: bool) -> Interval:
        if absent:
            return card.add(Interval.of(1))
        return Interval(max(card.lo, 1), card.hi + 1)

    @staticmethod
    def _card_remove(card: Interval, absent: bool) -> Interval:
        if absent:
            return card
        return Interval(max(card.lo - 1, 0), card.hi)

    def _set_update(self, state: State) -> MaybeState:
        state, (key, flag, container) = self.pop(state, 3)
        flag_value: BoolAbs = state.values[flag.var()]
        absent = self.absent(state, container, key)
        card = state.values[container.var("set-card")]
        elems = self.cell_values(state, container, ("set-elems",))
        key_values = self.cell_values(state, key)
        results: list[dict[Path, Value]] = []
        if flag_value.can_true:
            results.append(
                {
                    ("set-card",): self._card_insert(card, absent),
                    **_prefixed(("set-elems",), join_values(elems, key_values)),
                }
            )
        if flag_value.can_false:
            results.append({("set-card",): self._card_remove(card, absent), **_prefixed(("set-elems",), elems)})
        merged = results[0] if len(results) == 1 else join_values(results[0], results[1])
        pushed = self.push(state, container.type, merged)
        return None if pushed is None else self.forget(pushed, (key, flag, container))

    def _plain_map_update(self, state: State) -> MaybeState:
        state, (key, change, container) = self.pop(state, 3)
        tag: Interval = state.values[change.var("option-tag")]
        absent = self.absent(state, container, key)
        card = state.values[container.var("map-card")]
        keys = self.cell_values(state, container, ("map-keys",))
        vals = self.cell_values(state, container, ("map-vals",))
        results: list[dict[Path, Value]] = []
        if tag.hi >= 1:
            results.append(
                {
                    ("map-card",): self._card_insert(card, absent),
                    **_prefixed(("map-keys",), join_values(keys, self.cell_values(state, key))),
                    **_prefixed(("map-vals",), join_values(vals, self.cell_values(state, change, ("some-content",)))),
                }
            )
        if tag.lo <= 0:
            results.append(
                {
                    ("map-card",): self._card_remove(card, absent),
                    **_prefixed(("map-keys",), keys),
                    **_prefixed(("map-vals",), vals),
                }
            )
        merged = results[0] if len(results) == 1 else join_values(results[0], results[1])
        pushed = self.push(state, container.type, merged)
        return None if pushed is None else self.forget(pushed, (key, change, container))

    def smap_update(self, state: State) -> tuple[MaybeState, bool]:
        """UPDATE on a sender-split map, dispatching on the key's relation to $sender."""

        key = state.stack[0]
        relation = self.sender_relation(state, key)
        if relation == "eq":
            return self._smap_sender_update(state), False
        if relation == "neq":
            return self._smap_other_update(state)
        as_sender = self.refine(state, key.var(), AddrAbs(ConstSet(None, self.cap), IS_SENDER))
        as_other = self.refine(state, key.var(), AddrAbs(ConstSet(None, self.cap), NOT_SENDER))
        witness = False
        other_result: MaybeState = None
        if as_other is not None:
            other_result, witness = self._smap_other_update(as_other)
        sender_result = self._smap_sender_update(as_sender) if as_sender is not None else None
        return self.join(sender_result, other_result), witness

    def _smap_sender_update(self, state: State) -> MaybeState:
        state, (key, change, container) = self.pop(state, 3)
        tag: Interval = state.values[change.var("option-tag")]
        present: Interval = state.values[container.var("map-sender-present")]
        card: Interval = state.values[container.var("map-card")]
        base = {
            ("map-nonsender-val",): state.values[container.var("map-nonsender-val")],
        }
        keys = self.cell_values(state, container, ("map-keys",))
        results: list[dict[Path, Value]] = []
        copies: dict[Path, CellVar] = {}
        if tag.hi >= 1:
            if present.hi <= 0:
                new_card = card.add(Interval.of(1))
            elif present.lo >= 1:
                new_card = card
            else:
                new_card = Interval(max(card.lo, 1), card.hi + 1)
            results.append(
                {
                    **base,
                    ("map-card",): new_card,
                    ("map-sender-present",): Interval.of(1),
                    ("map-sender-val",): state.values[change.var("some-content")],
                    **_prefixed(("map-keys",), join_values(keys, self.cell_values(state, key))),
                }
            )
            if tag.lo >= 1:
                copies[("map-sender-val",)] = change.var("some-content")
        if tag.lo <= 0:
            if present.lo >= 1:
                new_card = card.sub(Interval.of(1)).meet(NONNEG)
            elif present.hi <= 0:
                new_card = card
            else:
                new_card = Interval(max(card.lo - 1, 0), card.hi)
            results.append(
                {
                    **base,
                    ("map-card",): new_card,
                    ("map-sender-present",): Interval.of(0),
                    ("map-sender-val",): BOTTOM,
                    **_prefixed(("map-keys",), keys),
                }
            )
        merged = results[0] if len(results) == 1 else join_values(results[0], results[1])
        pushed = self.push(state, container.type, merged, copies=copies)
        return None if pushed is None else self.forget(pushed, (key, change, container))

    def _smap_other_update(self, state: State) -> tuple[MaybeState, bool]:
        state, (key, change, container) = self.pop(state, 3)
        tag: Interval = state.values[change.var("option-tag")]
        present: Interval = state.values[container.var("map-sender-present")]
        card: Interval = state.values[container.var("map-card")]
        old: Interval = state.values[container.var("map-nonsender-val")]
        absent = self.absent(state, container, key)
        keys = self.cell_values(state, container, ("map-keys",))
        base = {
            ("map-sender-present",): present,
            ("map-sender-val",): state.values[container.var("map-sender-val")],
        }
        witness = False
        results: list[dict[Path, Value]] = []
        if tag.hi >= 1:
            new_value: Interval = state.values[change.var("some-content")]
            witness = not (absent or self._non_decreasing(state, container, key, change, old, new_value))
            results.append(
                {
                    **base,
                    ("map-card",): self._card_insert(card, absent),
                    ("map-nonsender-val",): old.join(new_value),
                    **_prefixed(("map-keys",), join_values(keys, self.cell_values(state, key))),
                }
            )
        if tag.lo <= 0:
            others_possible = card.hi - present.lo >= 1
            witness = witness or (others_possible and not absent)
            results.append(
                {
                    **base,
                    ("map-card",): self._card_remove(card, absent),
                    ("map-nonsender-val",): old,
                    **_prefixed(("map-keys",), keys),
                }
            )
        merged = results[0] if len(results) == 1 else join_values(results[0], results[1])
        pushed = self.push(state, container.type, merged)
        if witness:
            logger.debug("Possible decrease of a non-sender balance: old %s, new %s", old, merged[("map-nonsender-val",)])
        return (None if pushed is None else self.forget(pushed, (key, change, container))), witness

    def _non_decreasing(
        self, state: State, container: Cell, key: Cell, change: Cell, old: Interval, new: Interval
    ) -> bool:
        """Whether the value written for a non-sender key is provably ≥ the value it replaces."""

        if old.is_bottom or new.lo >= old.hi:
            return True
        if not self.symbolic:
            return False
        rep = state.eqs.representative
        previous = normalize(Op("get", (self.mapref(state, container), state.sym.value_of(key.var()))), rep)
        written = normalize(state.sym.value_of(change.var("some-content")), rep)
        if written == previous:
            return True
        if isinstance(written, Op) and written.name == "add" and previous in written.args:
            # mutez operands are never negative.
            return True
        return False

    def size(self, state: State) -> MaybeState:
        state, (container,) = self.pop(state, 1)
        if container.type.prim == "string":
            value = NONNEG
            source = None
        else:
            source = container.var(len_step(container.type))
            value = state.values[source]
        pushed = self.push(state, MType("nat"), {(): value}, copies={(): source} if source else None)
        return None if pushed is None else self.forget(pushed, (container,))

    def cons(self, state: State) -> MaybeState:
        state, (head, lst) = self.pop(state, 2)
        step = elems_step(lst.type)
        length = state.values[lst.var(len_step(lst.type))]
        values = {
            (len_step(lst.type),): length.add(Interval.of(1)),
            **_prefixed((step,), join_values(self.cell_values(state, lst, (step,)), self.cell_values(state, head))),
        }
        pushed = self.push(state, lst.type, values)
        return None if pushed is None else self.forget(pushed, (head, lst))

    def element_values(self, state: State, container: Cell) -> dict[Path, Value]:
        """Abstract value of one element (a pair for maps) of a container."""

        ty = container.type
        if ty.prim in {"list", "set"}:
            return self.cell_values(state, container, (elems_step(ty),))
        keys = _prefixed(("fst",), self.cell_values(state, container, ("map-keys",)))
        if self.split_map(ty):
            present = state.values[container.var("map-sender-present")]
            sender_val = state.values[container.var("map-sender-val")] if present.hi >= 1 else BOTTOM
            return {**keys, ("snd",): sender_val.join(state.values[container.var("map-nonsender-val")])}
        return {**keys, **_prefixed(("snd",), self.cell_values(state, container, ("map-vals",)))}

    def length(self, state: State, container: Cell) -> Interval:
        return state.values[container.var(len_step(container.type))]

    def collapse_sender(self, values: Mapping[Path, Value], ty: MType, prefix: Path = ()) -> dict[Path, Value]:
        """Forget which split-map entry belonged to the previous sender.

        Address leaves lose their sender relation; every split map merges its
        sender entry into the summary so that a new, unknown sender may own any key.
        """

        result = dict(values)
        for path, value in values.items():
            if isinstance(value, AddrAbs):
                result[path] = value.forget_sender()
        for path, kind in self.leaves(ty):
            if path and path[-1] == "map-sender-present":
                base = path[:-1]
                present = result[path]
                card = result[base + ("map-card",)]
                sender_val = result[base + ("map-sender-val",)] if present.hi >= 1 else BOTTOM
                merged = sender_val.join(result[base + ("map-nonsender-val",)])
                result[base + ("map-sender-val",)] = merged
                result[base + ("map-nonsender-val",)] = merged
                result[path] = Interval(0, 1 if card.hi >= 1 else 0)
        return result

    # -- concretization ----------------------------------------------------------

    def covers(self, values: Mapping[Path, Value], value: Any, ty: MType, sender: str | None = None) -> bool:
        """Whether the concrete ``value`` of type ``ty`` is in γ(``values``)."""

        return _covers(self, values, (), value, ty, sender)


TAG_TOP = Interval(0, 1)


def _prefixed(prefix: Path, values: Mapping[Path, Value]) -> dict[Path, Value]:
    return {prefix + path: value for path, value in values.items()}


def _join_into(values: Mapping[Path, Value], prefix: Path, extra: Mapping[Path, Value]) -> dict[Path, Value]:
    return {prefix + path: values[prefix + path].join(value) for path, value in extra.items()}


def _refine_pair(rel: str, left: Value, right: Value) -> tuple[Value | None, Value | None]:
    """Refined operands of ``left rel right``; ``None`` means no information."""

    if isinstance(left, Interval) and isinstance(right, Interval):
        return itv_assume(rel, left, right)
    if rel == "eq":
        both = left.meet(right)
        return both, both
    if rel != "neq":
        return None, None
    if isinstance(left, AddrAbs):
        new_left = left.assume_neq_sender() if right.sender == IS_SENDER else left
        new_right = right.assume_neq_sender() if left.sender == IS_SENDER else right
        return _exclude_const(new_left, right), _exclude_const(new_right, left)
    if isinstance(left, BoolAbs) and not right.is_top:
        return left.meet(right.negate()), right.meet(left.negate()) if not left.is_top else right
    if isinstance(left, ConstSet):
        return _exclude_const(left, right), _exclude_const(right, left)
    return None, None


def _exclude_const(value: Value, other: Value) -> Value:
    if isinstance(value, AddrAbs):
        point = other.consts.singleton
        if point is not None and value.consts.values is not None:
            return AddrAbs(ConstSet(value.consts.values - {point}, value.consts.cap), value.sender)
        return value
    point = other.singleton
    if point is not None and value.values is not None:
        return ConstSet(value.values - {point}, value.cap)
    return value


def _covers(memory: Memory, values: Mapping[Path, Value], prefix: Path, value: Any, ty: MType, sender: str | None) -> bool:
    prim = ty.prim
    if prim in SCALAR_KINDS:
        return contains(values[prefix], value, sender)
    if prim == "pair":
        return _covers(memory, values, prefix + ("fst",), value[0], ty.args[0], sender) and _covers(
            memory, values, prefix + ("snd",), value[1], ty.args[1], sender
        )
    if prim == "option":
        if value is None:
            return 0 in values[prefix + ("option-tag",)]
        return 1 in values[prefix + ("option-tag",)] and _covers(
            memory, values, prefix + ("some-content",), value.value, ty.args[0], sender
        )
    if prim == "or":
        if isinstance(value, Left):
            return 0 in values[prefix + ("union-tag",)] and _covers(
                memory, values, prefix + ("left-content",), value.value, ty.args[0], sender
            )
        return 1 in values[prefix + ("union-tag",)] and _covers(
            memory, values, prefix + ("right-content",), value.value, ty.args[1], sender
        )
    if prim == "contract":
        return contains(values[prefix + ("contract-addr",)], value.address, sender) and contains(
            values[prefix + ("contract-entry",)], value.entrypoint
        )
    if prim == "operation":
        return (
            contains(values[prefix + ("op-target",)], value.target, sender)
            and contains(values[prefix + ("op-entry",)], value.entrypoint)
            and value.amount in values[prefix + ("op-amount",)]
        )
    if len(value) not in values[prefix + (len_step(ty),)]:
        return False
    if prim in {"list", "set"}:
        step = prefix + (elems_step(ty),)
        return all(_covers(memory, values, step, item, ty.args[0], sender) for item in value)
    for key, item in value.items():
        if not _covers(memory, values, prefix + ("map-keys",), key, ty.args[0], sender):
            return False
        if memory.split_map(ty):
            if sender is not None and key == sender:
                if 1 not in values[prefix + ("map-sender-present",)] or item not in values[prefix + ("map-sender-val",)]:
                    return False
            elif sender is not None:
                if item not in values[prefix + ("map-nonsender-val",)]:
                    return False
            elif item not in values[prefix + ("map-sender-val",)].join(values[prefix + ("map-nonsender-val",)]):
                return False
        elif not _covers(memory, values, prefix + ("map-vals",), item, ty.args[1], sender):
            return False
    if memory.split_map(ty) and sender is not None and sender not in value:
        return 0 in values[prefix + ("map-sender-present",)]
    return True


__all__ = ["CONTEXT_VARS", "Cell", "CellVar", "Memory", "State", "decompose"]
