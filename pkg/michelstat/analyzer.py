"""Abstract execution of typed scripts: transfer functions, fixpoints and call drivers."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

from .domains import (
    BOTTOM,
    INF,
    MUTEZ_OVERFLOW,
    NONNEG,
    TOP,
    BoolAbs,
    ConstSet,
    Interval,
    itv_binop,
    itv_compare,
    itv_ediv,
    itv_test,
    itv_unop,
    kind_range,
)
from .memory import (
    CONTEXT_VARS,
    SCALAR_KINDS,
    Cell,
    CellVar,
    MaybeState,
    Memory,
    Path,
    State,
    Value,
    bottom_of,
    elems_step,
    len_step,
    top_of,
)
from .mtypes import MType
from .parser import Instr, Seq, Span
from .settings import AnalysisConfig
from .symbolic import IS_SENDER, AddrAbs, Const, Op
from .typechecker import Entrypoint, TypedScript
from .values import compare_values, is_implicit

logger = logging.getLogger(__name__)

ALWAYS_FAIL = "always-fail"
OWNER_DECREASE = "owner-decrease-violation"

ARITH = {"ADD": "add", "SUB": "sub", "MUL": "mul", "LSL": "lsl", "LSR": "lsr"}
BITWISE = {"AND": "and", "OR": "or", "XOR": "xor"}
TESTS = {"EQ": "eq", "NEQ": "neq", "LT": "lt", "GT": "gt", "LE": "le", "GE": "ge"}
CONTEXT_OPS = {
    "SENDER": "sender",
    "SOURCE": "source",
    "AMOUNT": "amount",
    "BALANCE": "balance",
    "NOW": "now",
    "SELF_ADDRESS": "self",
}


class AnalysisTimeout(RuntimeError):
    """The per-contract analysis deadline passed."""


@dataclass(frozen=True)
class Alarm:
    category: str
    span: Span
    entrypoint: str
    detail: str = ""


@dataclass
class EntryResult:
    name: str
    post: MaybeState
    storage: dict[Path, Value] | None
    operations: dict[Path, Value] | None
    failure_reachable: bool = False

    @property
    def always_fails(self) -> bool:
        return self.post is None


@dataclass
class AnalysisResult:
    script: TypedScript
    config: AnalysisConfig
    entrypoints: dict[str, EntryResult]
    invariant: dict[Path, Value] | None
    alarms: list[Alarm]
    decreases: list[Alarm]
    iterations: int = 1
    warnings: list[str] = field(default_factory=list)

    @property
    def always_fails(self) -> bool:
        return bool(self.entrypoints) and all(entry.always_fails for entry in self.entrypoints.values())

    @property
    def multi_call(self) -> bool:
        return self.config.multi_call


class Analyzer:
    """One analysis instance for one script (not thread-safe: owns a name counter).

    ``world`` maps originated addresses to the scripts deployed there; transfers
    to them are analyzed abstractly when the target is determined.
    """

    def __init__(
        self,
        script: TypedScript,
        config: AnalysisConfig | None = None,
        world: Mapping[str, TypedScript] | None = None,
    ) -> None:
        self.script = script
        self.config = config or AnalysisConfig()
        self.memory = Memory(self.config)
        self.world = dict(world or {})
        self.world_storage: dict[str, dict[Path, Value]] = {}
        self.warnings: list[str] = []
        self._alarms: dict[tuple[str, Span], Alarm] = {}
        self._decreases: dict[Span, Alarm] = {}
        self._entry = "default"
        self._failure_reachable = False
        self._deadline: float | None = None

    # -- alarms ------------------------------------------------------------

    @property
    def alarms(self) -> list[Alarm]:
        return sorted(self._alarms.values(), key=lambda a: (a.span, a.category))

    @property
    def decreases(self) -> list[Alarm]:
        return sorted(self._decreases.values(), key=lambda a: a.span)

    def _alarm(self, category: str, span: Span, detail: str) -> None:
        key = (category, span)
        if key not in self._alarms:
            logger.debug("Alarm %s at %s: %s", category, span, detail)
            self._alarms[key] = Alarm(category, span, self._entry, detail)

    def _decrease(self, span: Span, detail: str) -> None:
        if span not in self._decreases:
            self._decreases[span] = Alarm(OWNER_DECREASE, span, self._entry, detail)

    def _tick(self) -> None:
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise AnalysisTimeout(f"analysis exceeded {self.config.timeout} s")

    # -- sequences and instructions ------------------------------------------

    def exec_seq(self, state: MaybeState, seq: Seq) -> MaybeState:
        for instr in seq:
            if state is None:
                return None
            state = self.exec_instr(state, instr)
        return state

    def exec_instr(self, state: MaybeState, instr: Instr) -> MaybeState:
        """Abstract transfer function of one instruction; ``None`` is ⊥."""

        if state is None:
            return None
        self._tick()
        op = instr.op
        mem = self.memory
        n = 1 if instr.n is None else instr.n

        if op == "PUSH":
            ty = instr.stack_out[0]
            exprs = {(): Const(instr.value, SCALAR_KINDS[ty.prim])} if ty.is_scalar else None
            return mem.push(state, ty, mem.abstract_value(instr.value, ty), exprs=exprs)
        if op == "UNIT":
            return mem.push(state, instr.stack_out[0])
        if op == "DROP":
            return mem.drop(state, n)
        if op == "DUP":
            return mem.dup(state, n)
        if op == "SWAP":
            return mem.permute(state, [1, 0])
        if op == "DIG":
            return mem.permute(state, [n] + list(range(n)))
        if op == "DUG":
            return mem.permute(state, list(range(1, n + 1)) + [0])
        if op == "DIP":
            state, saved = mem.pop(state, n)
            inner = self.exec_seq(state, instr.body[0])
            return None if inner is None else replace(inner, stack=saved + inner.stack)
        if op == "PAIR":
            state, (first, second) = mem.pop(state, 2)
            return mem.combine(state, [(("fst",), first), (("snd",), second)], instr.stack_out[0])[0]
        if op == "UNPAIR":
            state, (pair,) = mem.pop(state, 1)
            first_type, second_type = pair.type.args
            state, _ = mem.rebase(state, pair, ("snd",), second_type, keep=True)
            return mem.rebase(state, pair, ("fst",), first_type)[0]
        if op in {"CAR", "CDR"}:
            state, (pair,) = mem.pop(state, 1)
            return mem.rebase(state, pair, ("fst",) if op == "CAR" else ("snd",), instr.stack_out[0])[0]
        if op == "SOME":
            return self._wrap(state, instr.stack_out[0], "some-content", {("option-tag",): Interval.of(1)})
        if op == "NONE":
            return mem.push(state, instr.stack_out[0], mem.default_values(instr.stack_out[0]))
        if op in {"LEFT", "RIGHT"}:
            ty = instr.stack_out[0]
            left = op == "LEFT"
            other = ("right-content",) if left else ("left-content",)
            extra = {("union-tag",): Interval.of(0 if left else 1)}
            extra.update({other + path: value for path, value in mem.bottom_values(ty.args[1 if left else 0]).items()})
            return self._wrap(state, ty, "left-content" if left else "right-content", extra)
        if op in {"NIL", "EMPTY_SET", "EMPTY_MAP"}:
            return mem.push(state, instr.stack_out[0], mem.default_values(instr.stack_out[0]))
        if op == "CONS":
            return mem.cons(state)
        if op == "SIZE":
            return mem.size(state)
        if op == "MEM":
            return mem.map_mem(state)
        if op == "GET":
            return mem.map_get(state)
        if op == "UPDATE":
            result, witness = mem.update(state)
            if witness:
                self._decrease(instr.span, "a key other than $sender may lose tokens")
            return result
        if op in ARITH:
            return self._arith(state, instr, ARITH[op])
        if op in BITWISE:
            return self._bitwise(state, instr, BITWISE[op])
        if op == "EDIV":
            return self._ediv(state, instr)
        if op in {"NEG", "ABS", "INT", "NOT"}:
            return self._unary(state, instr)
        if op == "ISNAT":
            state, (arg,) = mem.pop(state, 1)
            value: Interval = state.values[arg.var()]
            tag = Interval(0 if value.lo < 0 else 1, 1 if value.hi >= 0 else 0)
            content = value.meet(NONNEG) if tag.hi >= 1 else BOTTOM
            return self._push_forget(state, instr.stack_out[0], {("option-tag",): tag, ("some-content",): content}, [arg])
        if op == "COMPARE":
            return self._compare(state, instr)
        if op in TESTS:
            return self._test(state, TESTS[op])
        if op in CONTEXT_OPS:
            source = CONTEXT_VARS[CONTEXT_OPS[op]]
            return mem.push(state, instr.stack_out[0], {(): state.values[source]}, copies={(): source})
        if op == "CONTRACT":
            return self._contract(state, instr)
        if op == "TRANSFER_TOKENS":
            return self._transfer(state, instr)
        if op == "FAILWITH":
            self._failure_reachable = True
            return None
        if op in {"IF", "IF_NONE", "IF_LEFT", "IF_CONS"}:
            return self.exec_if_family(state, instr)
        if op in {"LOOP", "LOOP_LEFT", "ITER", "MAP"}:
            return self.fix_loop(state, instr)
        raise ValueError(f"unsupported instruction {op} at {instr.span}")

    def _wrap(self, state: State, ty: MType, step: str, extra: Mapping[Path, Value]) -> MaybeState:
        mem = self.memory
        state, (inner,) = mem.pop(state, 1)
        state, cell = mem.combine(state, [((step,), inner)], ty)
        return mem.set_values(state, cell, extra)

    def _push_forget(
        self,
        state: State,
        ty: MType,
        values: Mapping[Path, Value],
        consumed: list[Cell],
        exprs: Mapping[Path, Any] | None = None,
    ) -> MaybeState:
        pushed = self.memory.push(state, ty, values, exprs=exprs)
        return None if pushed is None else self.memory.forget(pushed, consumed)

    # -- arithmetic --------------------------------------------------------------

    def _arith(self, state: State, instr: Instr, name: str) -> MaybeState:
        mem = self.memory
        state, (a, b) = mem.pop(state, 2)
        ty = instr.stack_out[0]
        left, right = state.values[a.var()], state.values[b.var()]
        value, alarms = itv_binop(name, ty.prim, left, right)
        if name == "sub" and ty.prim == "mutez" and mem.known(state, "ge", a.var(), b.var()):
            alarms = alarms - {MUTEZ_OVERFLOW}
        for alarm in sorted(alarms):
            self._alarm(alarm, instr.span, f"{instr.op} on {left} and {right}")
        if value.is_bottom:
            return None
        return self._push_forget(state, ty, {(): value}, [a, b], exprs={(): Op(name, (a.var(), b.var()))})

    def _bitwise(self, state: State, instr: Instr, name: str) -> MaybeState:
        mem = self.memory
        state, (a, b) = mem.pop(state, 2)
        left, right = state.values[a.var()], state.values[b.var()]
        ty = instr.stack_out[0]
        if ty.prim == "bool":
            value: Value = left.combine(name, right)
        else:
            value, _ = itv_binop(name, ty.prim, left, right)
        return self._push_forget(state, ty, {(): value}, [a, b], exprs={(): Op(name, (a.var(), b.var()))})

    def _ediv(self, state: State, instr: Instr) -> MaybeState:
        state, (a, b) = self.memory.pop(state, 2)
        quotient, remainder, tag = itv_ediv(state.values[a.var()], state.values[b.var()])
        ty = instr.stack_out[0]
        content = ty.args[0]
        if tag.hi < 1:
            quotient, remainder = BOTTOM, BOTTOM
        values = {
            ("option-tag",): tag,
            ("some-content", "fst"): quotient.meet(kind_range(content.args[0].prim)),
            ("some-content", "snd"): remainder.meet(kind_range(content.args[1].prim)),
        }
        return self._push_forget(state, ty, values, [a, b])

    def _unary(self, state: State, instr: Instr) -> MaybeState:
        state, (arg,) = self.memory.pop(state, 1)
        value = state.values[arg.var()]
        ty = instr.stack_out[0]
        name = instr.op.lower()
        if isinstance(value, BoolAbs):
            result: Value = value.negate()
        else:
            result = itv_unop(name, value)
        expr = arg.var() if name == "int" else Op(name, (arg.var(),))
        return self._push_forget(state, ty, {(): result}, [arg], exprs={(): expr})

    # -- comparisons -------------------------------------------------------------

    def _compare(self, state: State, instr: Instr) -> MaybeState:
        state, (a, b) = self.memory.pop(state, 2)
        value = self._compare_at(state, a, b, a.type, ())
        exprs = {(): Op("compare", (a.var(), b.var()))} if a.type.is_scalar else None
        return self._push_forget(state, instr.stack_out[0], {(): value}, [a, b], exprs=exprs)

    def _compare_at(self, state: State, a: Cell, b: Cell, ty: MType, path: Path) -> Interval:
        if ty.prim == "pair":
            first = self._compare_at(state, a, b, ty.args[0], path + ("fst",))
            if first == Interval.of(0):
                return self._compare_at(state, a, b, ty.args[1], path + ("snd",))
            if 0 not in first:
                return first
            return first.join(self._compare_at(state, a, b, ty.args[1], path + ("snd",)))
        return compare_abstract(state.values[CellVar(a.root, path)], state.values[CellVar(b.root, path)])

    def _test(self, state: State, rel: str) -> MaybeState:
        mem = self.memory
        state, (cmp,) = mem.pop(state, 1)
        value = itv_test(rel, state.values[cmp.var()])
        verdict = self._verdict(state, cmp)
        if verdict is not None and rel in {"eq", "neq"}:
            value = value.meet(BoolAbs.of((verdict == "eq") == (rel == "eq")))
        return self._push_forget(state, MType("bool"), {(): value}, [cmp], exprs={(): Op(rel, (cmp.var(),))})

    def _verdict(self, state: State, cmp: Cell) -> str | None:
        """Equality verdict of a COMPARE over addresses or strings, through its binding."""

        expr = state.sym.binding(cmp.var())
        if not (isinstance(expr, Op) and expr.name == "compare"):
            return None
        operands = []
        for arg in expr.args:
            found = self.memory.resolve(state, arg)
            if isinstance(found, Const):
                operands.append(found)
            elif found:
                operands.append(state.values[found[0]])
            else:
                return None
        left, right = operands
        if isinstance(left, Const) and isinstance(right, Const):
            return None
        if isinstance(left, Const):
            left = _const_like(right, left.value)
        if isinstance(right, Const):
            right = _const_like(left, right.value)
        if isinstance(left, (AddrAbs, ConstSet)) and type(left) is type(right):
            verdict = left.compare(right)
            return None if verdict == "unknown" else verdict
        return None

    # -- contracts and operations ---------------------------------------------------

    def _contract(self, state: State, instr: Instr) -> MaybeState:
        mem = self.memory
        state, (address,) = mem.pop(state, 1)
        addr: AddrAbs = state.values[address.var()]
        wanted = instr.types[0]
        entry = instr.entrypoint or "default"
        tag = Interval(0, 1)
        consts = addr.consts.values
        if consts is not None and all(is_implicit(a) for a in consts) and (wanted.prim != "unit" or entry != "default"):
            tag = Interval.of(0)
        values = {
            ("option-tag",): tag,
            ("some-content", "contract-addr"): addr if tag.hi >= 1 else bottom_of("address"),
            ("some-content", "contract-entry"): ConstSet.of(entry, cap=self.config.const_set_cap)
            if tag.hi >= 1
            else bottom_of("string"),
        }
        copies = {("some-content", "contract-addr"): address.var()} if tag.hi >= 1 else None
        pushed = mem.push(state, instr.stack_out[0], values, copies=copies)
        return None if pushed is None else mem.forget(pushed, [address])

    def _transfer(self, state: State, instr: Instr) -> MaybeState:
        mem = self.memory
        state, (arg, amount, target) = mem.pop(state, 3)
        values = {
            ("op-target",): state.values[target.var("contract-addr")],
            ("op-entry",): state.values[target.var("contract-entry")],
            ("op-amount",): state.values[amount.var()],
        }
        copies = {("op-target",): target.var("contract-addr"), ("op-amount",): amount.var()}
        pushed = mem.push(state, instr.stack_out[0], values, copies=copies)
        return None if pushed is None else mem.forget(pushed, [arg, amount, target])

    # -- branches ------------------------------------------------------------------

    def _guard(self, state: State, var: CellVar, value: Value, branch: bool) -> MaybeState:
        """Refine a guard cell to ``value`` and assume the relations it stands for."""

        mem = self.memory
        relations = state.sym.resolve_guard(var, branch) if mem.symbolic else []
        refined = mem.refine(state, var, value)
        for relation in relations:
            refined = mem.assume(refined, relation)
        return refined

    def _split_bool(self, state: State) -> tuple[MaybeState, MaybeState]:
        mem = self.memory
        popped, (cond,) = mem.pop(state, 1)
        outcomes = []
        for branch in (True, False):
            refined = self._guard(popped, cond.var(), BoolAbs.of(branch), branch)
            outcomes.append(None if refined is None else mem.forget(refined, [cond]))
        return outcomes[0], outcomes[1]

    def _split_tagged(self, state: State, tag_step: str, contents: tuple[str | None, str]) -> tuple[MaybeState, MaybeState]:
        """Split on an option or union tag: 0 selects ``contents[0]``, 1 ``contents[1]``.

        A ``None`` content step means the branch has nothing to unwrap.
        """

        mem = self.memory
        popped, (cell,) = mem.pop(state, 1)
        tag = cell.var(tag_step)
        outcomes: list[MaybeState] = []
        for index, step in enumerate(contents):
            refined = self._guard(popped, tag, Interval.of(index), index == 1)
            if refined is None:
                outcomes.append(None)
            elif step is None:
                outcomes.append(mem.forget(refined, [cell]))
            else:
                content_type = self._content_type(cell.type, step)
                unwrapped, new = mem.rebase(refined, cell, (step,), content_type)
                outcomes.append(mem.check_strong(unwrapped, new))
        return outcomes[0], outcomes[1]

    @staticmethod
    def _content_type(ty: MType, step: str) -> MType:
        if step == "right-content":
            return ty.args[1]
        return ty.args[0]

    def _split_cons(self, state: State) -> tuple[MaybeState, MaybeState]:
        mem = self.memory
        popped, (lst,) = mem.pop(state, 1)
        length = lst.var(len_step(lst.type))
        cons_state = mem.refine(popped, length, Interval(1, INF))
        if cons_state is not None:
            step = elems_step(lst.type)
            tail_values = {
                **{(step,) + path: value for path, value in mem.cell_values(cons_state, lst, (step,)).items()},
                (len_step(lst.type),): cons_state.values[length].sub(Interval.of(1)).meet(NONNEG),
            }
            cons_state = mem.push(cons_state, lst.type, tail_values)
            if cons_state is not None:
                cons_state = mem.push(cons_state, lst.type.args[0], mem.cell_values(cons_state, lst, (step,)))
            if cons_state is not None:
                cons_state = mem.forget(cons_state, [lst])
        nil_state = mem.refine(popped, length, Interval.of(0))
        if nil_state is not None:
            nil_state = mem.forget(nil_state, [lst])
        return cons_state, nil_state

    def branches(self, state: State, instr: Instr) -> tuple[MaybeState, MaybeState]:
        """States entering the two bodies of an IF-family instruction."""

        op = instr.op
        if op == "IF":
            return self._split_bool(state)
        if op == "IF_NONE":
            return self._split_tagged(state, "option-tag", (None, "some-content"))
        if op == "IF_LEFT":
            return self._split_tagged(state, "union-tag", ("left-content", "right-content"))
        return self._split_cons(state)

    def exec_if_family(self, state: State, instr: Instr) -> MaybeState:
        first, second = self.branches(state, instr)
        then_out = self.exec_seq(first, instr.body[0])
        else_out = self.exec_seq(second, instr.body[1])
        return self.memory.join(then_out, else_out)

    # -- loops -------------------------------------------------------------------

    def fix_loop(self, state: State, instr: Instr) -> MaybeState:
        if instr.op == "LOOP":
            return self._guarded_loop(state, instr.body[0], self._split_bool)
        if instr.op == "LOOP_LEFT":
            split = lambda s: self._split_tagged(s, "union-tag", ("left-content", "right-content"))  # noqa: E731
            return self._guarded_loop(state, instr.body[0], split)
        return self._iteration(state, instr)

    def _guarded_loop(
        self, state: State, body: Seq, split: Callable[[State], tuple[MaybeState, MaybeState]]
    ) -> MaybeState:
        """LOOP/LOOP_LEFT: each edge into the head is refined by the guard before the join."""

        mem = self.memory
        enter, leave = split(state)

        def step(inv: MaybeState) -> tuple[MaybeState, MaybeState]:
            out = self.exec_seq(inv, body)
            if out is None:
                return None, None
            again, done = split(out)
            return mem.join(enter, again), done

        inv = enter
        exit_state: MaybeState = None
        for iteration in range(self.config.max_iterations):
            self._tick()
            new_inv, exit_state = step(inv)
            if mem.leq(new_inv, inv):
                break
            if iteration >= self.config.widening_delay:
                logger.debug("Widening loop head after %d iteration(s)", iteration + 1)
                inv = mem.widen(inv, new_inv)
            else:
                inv = mem.join(inv, new_inv)
        else:
            inv = self._havoc(mem.join(inv, new_inv))
            new_inv, exit_state = step(inv)
        for _ in range(self.config.narrow):
            new_inv, _ = step(inv)
            inv = mem.narrow(inv, new_inv)
            _, exit_state = step(inv)
        return mem.join(leave, exit_state)

    def _havoc(self, state: MaybeState) -> MaybeState:
        if state is None:
            return None
        mem = self.memory
        logger.warning("Loop did not stabilize after %d iterations; using ⊤", self.config.max_iterations)
        values = dict(state.values)
        for cell in state.stack:
            for path, value in mem.top_values(cell.type).items():
                values[CellVar(cell.root, path)] = value
        return State(state.stack, values)

    def _iteration(self, state: State, instr: Instr) -> MaybeState:
        """ITER and MAP: exact unrolling for short containers, widening otherwise."""

        mem = self.memory
        rest, (container,) = mem.pop(state, 1)
        element_type = self._element_type(container.type)
        length = mem.length(rest, container)
        body = instr.body[0]
        collecting = instr.op == "MAP"
        outputs: dict[Path, Value] | None = None

        def run(inv: State) -> MaybeState:
            nonlocal outputs
            entered = mem.push(inv, element_type, mem.element_values(inv, container))
            out = self.exec_seq(entered, body)
            if out is None or not collecting:
                return out
            produced = mem.cell_values(out, out.top())
            outputs = produced if outputs is None else {p: v.join(produced[p]) for p, v in outputs.items()}
            return mem.drop(out, 1)

        if length.hi <= self.config.unroll_limit:
            exit_state: MaybeState = rest if 0 in length else None
            current: MaybeState = rest
            for count in range(1, int(length.hi) + 1):
                current = run(current) if current is not None else None
                if count >= length.lo:
                    exit_state = mem.join(exit_state, current)
        else:
            inv = rest
            for iteration in range(self.config.max_iterations):
                self._tick()
                new_inv = mem.join(rest, run(inv))
                if mem.leq(new_inv, inv):
                    break
                inv = mem.widen(inv, new_inv) if iteration >= self.config.widening_delay else mem.join(inv, new_inv)
            else:
                inv = self._havoc(inv)
                run(inv)
            for _ in range(self.config.narrow):
                inv = mem.narrow(inv, mem.join(rest, run(inv)))
            exit_state = inv
        if exit_state is None:
            return None
        if collecting:
            result_type = instr.stack_out[0]
            exit_state = self._mapped(exit_state, container, result_type, outputs)
            if exit_state is None:
                return None
        return mem.forget(exit_state, [container])

    def _element_type(self, ty: MType) -> MType:
        if ty.prim == "map":
            return MType("pair", ty.args)
        return ty.args[0]

    def _mapped(self, state: State, container: Cell, result_type: MType, outputs: dict[Path, Value] | None) -> MaybeState:
        """The container built by MAP from the joined body outputs."""

        mem = self.memory
        out_type = result_type.args[-1]
        produced = outputs if outputs is not None else mem.bottom_values(out_type)
        length = mem.length(state, container)
        if result_type.prim == "list":
            values = {("list-elems",) + path: value for path, value in produced.items()}
            values[(len_step(result_type),)] = length
            return mem.push(state, result_type, values)
        values = {("map-keys",) + path: value for path, value in mem.cell_values(state, container, ("map-keys",)).items()}
        values[("map-card",)] = length
        if mem.split_map(result_type):
            if mem.split_map(container.type):
                present = state.values[container.var("map-sender-present")]
            else:
                present = Interval(0, 1 if length.hi >= 1 else 0)
            values[("map-sender-present",)] = present
            values[("map-sender-val",)] = produced[()] if present.hi >= 1 else BOTTOM
            values[("map-nonsender-val",)] = produced[()]
        else:
            values.update({("map-vals",) + path: value for path, value in produced.items()})
        return mem.push(state, result_type, values)

    # -- entry points ---------------------------------------------------------------

    def _context(self) -> State:
        cap = self.config.const_set_cap
        return self.memory.context_state(
            {
                "sender": AddrAbs.current_sender(),
                "source": top_of("address", cap),
                "self": AddrAbs.of(self.config.self_address, cap=cap),
                "amount": Interval(0, self.config.max_amount),
                "balance": kind_range("mutez"),
                "now": TOP,
            }
        )

    def _parameter_values(self, ty: MType, path: tuple[str, ...]) -> dict[Path, Value]:
        mem = self.memory
        if not path:
            return mem.top_values(ty)
        left = path[0] == "left"
        inner = self._parameter_values(ty.args[0 if left else 1], path[1:])
        other = mem.bottom_values(ty.args[1 if left else 0])
        chosen, dropped = ("left-content", "right-content") if left else ("right-content", "left-content")
        return {
            ("union-tag",): Interval.of(0 if left else 1),
            **{(chosen,) + p: v for p, v in inner.items()},
            **{(dropped,) + p: v for p, v in other.items()},
        }

    def initial_storage(self, storage: Any = None) -> dict[Path, Value]:
        """S0: a concrete storage value, ⊤ under ``arbitrary_storage``, else the default."""

        ty = self.script.storage_type
        if storage is not None:
            return self.memory.abstract_value(storage, ty)
        if self.config.arbitrary_storage:
            return self.memory.top_values(ty)
        return self.memory.default_values(ty)

    def entry_state(self, entry: Entrypoint, storage: Mapping[Path, Value]) -> MaybeState:
        """The state before the code runs: the parameter of ``entry`` paired with ``storage``."""

        values = {("fst",) + p: v for p, v in self._parameter_values(self.script.parameter_type, entry.path).items()}
        values.update({("snd",) + p: v for p, v in storage.items()})
        return self.memory.push(self._context(), self.script.input_type, values)

    def analyze_entrypoint(self, entry: Entrypoint, storage: Mapping[Path, Value]) -> EntryResult:
        """Analyze one call of ``entry`` with a ⊤ argument from the abstract ``storage``."""

        mem = self.memory
        self._entry = entry.name
        self._failure_reachable = False
        post = self.exec_seq(self.entry_state(entry, storage), self.script.code)
        failed = self._failure_reachable
        if post is None:
            logger.info("Entry point %s never returns normally", entry.name)
            return EntryResult(entry.name, None, None, None, failed)
        top = post.top()
        return EntryResult(
            entry.name,
            post,
            mem.cell_values(post, top, ("snd",)),
            mem.cell_values(post, top, ("fst",)),
            failed,
        )

    def _calls(self, storage: Mapping[Path, Value]) -> tuple[dict[str, EntryResult], dict[Path, Value] | None]:
        results = {}
        produced: dict[Path, Value] | None = None
        for entry in self.script.entrypoints:
            result = self.analyze_entrypoint(entry, storage)
            results[entry.name] = result
            if result.storage is None:
                continue
            out = self.memory.collapse_sender(result.storage, self.script.storage_type)
            produced = out if produced is None else join_storage(produced, out)
            if result.operations is not None:
                self.exec_operations_abs(result.operations)
        return results, produced

    def analyze(self, storage: Any = None) -> AnalysisResult:
        """Run the configured analysis (single call, or the multi-call fixpoint)."""

        self._deadline = time.monotonic() + self.config.timeout if self.config.timeout else None
        initial = self.initial_storage(storage)
        if self.config.multi_call:
            return self.analyze_multicall(initial)
        results, produced = self._calls(initial)
        return self._result(results, produced, iterations=1)

    def analyze_multicall(self, initial: Mapping[Path, Value]) -> AnalysisResult:
        """Least fixpoint over storages reachable by any sequence of calls from ``initial``."""

        ty = self.script.storage_type
        mem = self.memory
        invariant = dict(initial)
        results: dict[str, EntryResult] = {}
        iterations = 0
        for iterations in range(1, self.config.max_iterations + 1):
            self._tick()
            before = dict(self.world_storage)
            results, produced = self._calls(invariant)
            candidate = invariant if produced is None else join_storage(invariant, produced)
            if leq_storage(candidate, invariant) and self._world_stable(before):
                break
            if iterations > self.config.widening_delay:
                logger.debug("Widening storage invariant at call iteration %d", iterations)
                invariant = widen_storage(invariant, candidate, mem.leaves(ty))
                self._widen_world(before)
            else:
                invariant = candidate
        else:
            logger.warning("Storage fixpoint did not stabilize; using ⊤")
            invariant = mem.top_values(ty)
            for address in self.world_storage:
                self.world_storage[address] = mem.top_values(self.world[address].storage_type)
            results, _ = self._calls(invariant)
        for _ in range(self.config.narrow):
            _, produced = self._calls(invariant)
            refined = dict(initial) if produced is None else join_storage(dict(initial), produced)
            invariant = {path: value.narrow(refined[path]) for path, value in invariant.items()}
            results, _ = self._calls(invariant)
        logger.info("Storage invariant stable after %d call iteration(s)", iterations)
        return self._result(results, invariant, iterations=iterations)

    def _world_stable(self, before: Mapping[str, Mapping[Path, Value]]) -> bool:
        """Whether no known callee storage grew since ``before``."""

        return all(
            address in before and leq_storage(storage, before[address]) for address, storage in self.world_storage.items()
        )

    def _widen_world(self, before: Mapping[str, Mapping[Path, Value]]) -> None:
        for address, storage in self.world_storage.items():
            if address in before:
                leaves = self.memory.leaves(self.world[address].storage_type)
                self.world_storage[address] = widen_storage(before[address], storage, leaves)

    def _result(
        self,
        results: dict[str, EntryResult],
        storage: dict[Path, Value] | None,
        iterations: int,
    ) -> AnalysisResult:
        return AnalysisResult(
            self.script,
            self.config,
            results,
            storage,
            self.alarms,
            self.decreases,
            iterations,
            list(self.warnings),
        )

    def is_post_fixpoint(self, invariant: Mapping[Path, Value]) -> bool:
        """Whether one more call of any entry point stays within ``invariant``."""

        _, produced = self._calls(invariant)
        return produced is None or leq_storage(produced, invariant)

    # -- emitted operations --------------------------------------------------------

    def exec_operations_abs(self, operations: Mapping[Path, Value]) -> None:
        """Account for the transfers of an operation-list summary."""

        if operations[("opslist-len",)].hi <= 0:
            return
        target: AddrAbs = operations[("opslist-elems", "op-target")]
        entry: ConstSet = operations[("opslist-elems", "op-entry")]
        if target.is_bottom:
            return
        if target.sender == IS_SENDER:
            # The caller of an entry point may be an originated contract too, but its
            # reaction is outside this script's model: the transfer only pays it.
            return
        consts = target.consts.values
        if consts is not None:
            callees = [a for a in consts if a != self.config.self_address and not is_implicit(a)]
            known = [a for a in callees if a in self.world]
            if len(callees) == 1 and known and entry.singleton is not None:
                self._call_callee(known[0], str(entry.singleton))
                return
            if not callees:
                return
        else:
            known = list(self.world)
        for address in known:
            message = f"operation target not determined; storage of {address} set to ⊤"
            if message not in self.warnings:
                logger.warning("%s", message)
                self.warnings.append(message)
            self.world_storage[address] = self.memory.top_values(self.world[address].storage_type)

    def _call_callee(self, address: str, entry_name: str) -> None:
        script = self.world[address]
        callee = Analyzer(script, replace(self.config, self_address=address, multi_call=False))
        storage = self.world_storage.get(address) or callee.initial_storage()
        try:
            entry = script.entrypoint(entry_name)
        except ValueError:
            if entry_name != "default":
                raise
            entry = Entrypoint("default", script.parameter_type, ())
        result = callee.analyze_entrypoint(entry, storage)
        if result.storage is not None:
            out = callee.memory.collapse_sender(result.storage, script.storage_type)
            self.world_storage[address] = join_storage(storage, out)
        for alarm in callee.alarms:
            key = (alarm.category, alarm.span)
            self._alarms.setdefault(key, replace(alarm, entrypoint=f"{address}%{alarm.entrypoint}"))


def compare_abstract(left: Value, right: Value) -> Interval:
    """COMPARE outcomes between two abstract scalars."""

    if left.is_bottom or right.is_bottom:
        return BOTTOM
    if isinstance(left, Interval):
        return itv_compare(left, right)
    if isinstance(left, BoolAbs):
        outcomes = {
            compare_values(a, b)
            for a in (True, False)
            if (left.can_true if a else left.can_false)
            for b in (True, False)
            if (right.can_true if b else right.can_false)
        }
        return Interval.hull(outcomes)
    if isinstance(left, AddrAbs):
        verdict = left.compare(right)
        if verdict == "eq":
            return Interval.of(0)
        left_consts, right_consts = left.consts, right.consts
        if verdict == "neq" and (left_consts.values is None or right_consts.values is None):
            return Interval(-1, 1)
        left, right = left_consts, right_consts
    if left.values is None or right.values is None:
        return Interval(-1, 1)
    return Interval.hull(compare_values(a, b) for a in left.values for b in right.values)


def _const_like(sample: Value, value: Any) -> Value:
    if isinstance(sample, AddrAbs):
        return AddrAbs.of(value)
    return ConstSet.of(value)


def join_storage(a: Mapping[Path, Value], b: Mapping[Path, Value]) -> dict[Path, Value]:
    return {path: value.join(b[path]) for path, value in a.items()}


def leq_storage(a: Mapping[Path, Value], b: Mapping[Path, Value]) -> bool:
    return all(value.leq(b[path]) for path, value in a.items())


def widen_storage(old: Mapping[Path, Value], new: Mapping[Path, Value], leaves: tuple[tuple[Path, str], ...]) -> dict[Path, Value]:
    kinds = dict(leaves)
    widened = {}
    for path, value in old.items():
        result = value.widen(new[path])
        if isinstance(result, Interval):
            result = result.meet(kind_range(kinds[path]))
        widened[path] = result
    return widened


def analyze(script: TypedScript, config: AnalysisConfig | None = None, storage: Any = None, **kwargs: Any) -> AnalysisResult:
    return Analyzer(script, config, **kwargs).analyze(storage)


__all__ = [
    "ALWAYS_FAIL",
    "Alarm",
    "AnalysisResult",
    "AnalysisTimeout",
    "Analyzer",
    "EntryResult",
    "OWNER_DECREASE",
    "analyze",
    "compare_abstract",
]
