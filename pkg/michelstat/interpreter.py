"""Reference big-step interpreter, used as the oracle for the analyzer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .mtypes import MType
from .parser import NO_SPAN, Instr, Seq, Span
from .settings import MUTEZ_MAX
from .typechecker import TypedScript
from .values import (
    ContractRef,
    Left,
    Right,
    Some,
    Transfer,
    compare_values,
    format_value,
    is_implicit,
)

logger = logging.getLogger(__name__)

SHIFT_LIMIT = 256
DEFAULT_MAX_STEPS = 100_000
DEFAULT_MAX_OPERATIONS = 1_000


class ContractFailure(Exception):
    """A call stopped on FAILWITH or a checked runtime error.

    ``kind`` is one of ``failwith``, ``mutez-overflow``, ``shift-overflow``,
    ``operation-limit`` or ``unknown-target``.
    """

    def __init__(
        self,
        kind: str,
        payload: Any = None,
        span: Span = NO_SPAN,
        payload_type: MType | None = None,
    ) -> None:
        self.kind = kind
        self.payload = payload
        self.span = span
        self.payload_type = payload_type
        super().__init__(self.describe())

    def describe(self) -> str:
        if self.kind == "failwith" and self.payload_type is not None:
            return f"failwith {format_value(self.payload, self.payload_type)} at {self.span}"
        detail = f" ({self.payload})" if self.payload is not None else ""
        return f"{self.kind}{detail} at {self.span}"


class ExecutionLimit(RuntimeError):
    """The interpreter step budget was exhausted (e.g. a diverging LOOP)."""


@dataclass(frozen=True)
class CallContext:
    sender: str = "tz1SENDER"
    source: str = "tz1SENDER"
    amount: int = 0
    balance: int = 0
    now: int = 0
    self_address: str = "KT1SELF"
    # Originated contracts visible to CONTRACT, by address.
    contracts: Mapping[str, TypedScript] = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class Account:
    script: TypedScript
    storage: Any
    balance: int = 0


World = dict[str, Account]


def parameter_value(script: TypedScript, entrypoint: str, arg: Any) -> Any:
    """Wrap an entry-point argument into the full parameter value."""

    for entry in script.entrypoints:
        if entry.name == entrypoint:
            value = arg
            for step in reversed(entry.path):
                value = Left(value) if step == "left" else Right(value)
            return value
    if entrypoint == "default":
        return arg
    script.entrypoint(entrypoint)  # raises with the list of known names
    raise AssertionError("unreachable")


def run_contract(
    script: TypedScript,
    entrypoint: str,
    arg: Any,
    storage: Any,
    ctx: CallContext,
    *,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> tuple[tuple[Transfer, ...], Any]:
    """Run one call and return ``(operations, new_storage)``.

    Raises
    ------
    ContractFailure
        On FAILWITH or a checked runtime error.
    ExecutionLimit
        When more than ``max_steps`` instructions are executed.
    """

    machine = _Machine(ctx, max_steps)
    stack: list[Any] = [(parameter_value(script, entrypoint, arg), storage)]
    machine.run(script.code, stack)
    operations, new_storage = stack[0]
    return tuple(operations), new_storage


def run_operations(
    pending: Sequence[Transfer],
    world: Mapping[str, Account],
    *,
    source: str | None = None,
    now: int = 0,
    max_operations: int = DEFAULT_MAX_OPERATIONS,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> World:
    """Execute ``pending`` depth-first and return the new world.

    The input ``world`` is never modified: on failure the exception propagates
    and the caller still holds the untouched snapshot.
    """

    updated: World = dict(world)
    queue = list(pending)
    executed = 0
    origin = source if source is not None else (queue[0].sender if queue else None)
    contracts = {address: account.script for address, account in updated.items()}
    while queue:
        op = queue.pop(0)
        executed += 1
        if executed > max_operations:
            raise ContractFailure("operation-limit", max_operations)
        account = updated.get(op.target)
        if account is None:
            if is_implicit(op.target):
                logger.debug("Transfer of %s to implicit account %s", op.amount, op.target)
                continue
            raise ContractFailure("unknown-target", op.target)
        ctx = CallContext(
            sender=op.sender,
            source=origin or op.sender,
            amount=op.amount,
            balance=account.balance,
            now=now,
            self_address=op.target,
            contracts=contracts,
        )
        emitted, storage = run_contract(account.script, op.entrypoint, op.arg, account.storage, ctx, max_steps=max_steps)
        updated[op.target] = replace(account, storage=storage)
        # Callee emissions run before the remaining siblings.
        queue[:0] = emitted
    return updated


def _check_mutez(value: int, span: Span) -> int:
    if not 0 <= value <= MUTEZ_MAX:
        raise ContractFailure("mutez-overflow", value, span)
    return value


def _ediv(a: int, b: int) -> Any:
    if b == 0:
        return None
    remainder = a % abs(b)
    return Some(((a - remainder) // b, remainder))


class _Machine:
    def __init__(self, ctx: CallContext, max_steps: int) -> None:
        self.ctx = ctx
        self.max_steps = max_steps
        self.steps = 0

    def run(self, seq: Seq, stack: list[Any]) -> None:
        for instr in seq:
            self.steps += 1
            if self.steps > self.max_steps:
                raise ExecutionLimit(f"step budget of {self.max_steps} exhausted at {instr.span}")
            self.step(instr, stack)

    def step(self, instr: Instr, stack: list[Any]) -> None:
        op, span = instr.op, instr.span
        pop, push = stack.pop, stack.append

        if op == "PUSH":
            push(instr.value)
        elif op == "UNIT":
            push(())
        elif op == "DROP":
            del stack[len(stack) - (1 if instr.n is None else instr.n):]
        elif op == "DUP":
            push(stack[-(1 if instr.n is None else instr.n)])
        elif op == "SWAP":
            stack[-1], stack[-2] = stack[-2], stack[-1]
        elif op == "DIG":
            push(pop(-1 - (1 if instr.n is None else instr.n)))
        elif op == "DUG":
            n = 1 if instr.n is None else instr.n
            top = pop()
            stack.insert(len(stack) - n, top)
        elif op == "DIP":
            n = 1 if instr.n is None else instr.n
            saved = stack[len(stack) - n:]
            del stack[len(stack) - n:]
            self.run(instr.body[0], stack)
            stack.extend(saved)
        elif op == "PAIR":
            first = pop()
            push((first, pop()))
        elif op == "UNPAIR":
            first, second = pop()
            push(second)
            push(first)
        elif op == "CAR":
            push(pop()[0])
        elif op == "CDR":
            push(pop()[1])
        elif op == "SOME":
            push(Some(pop()))
        elif op == "NONE":
            push(None)
        elif op == "LEFT":
            push(Left(pop()))
        elif op == "RIGHT":
            push(Right(pop()))
        elif op == "NIL":
            push(())
        elif op == "EMPTY_SET":
            push(frozenset())
        elif op == "EMPTY_MAP":
            push({})
        elif op == "CONS":
            head = pop()
            push((head,) + pop())
        elif op == "SIZE":
            push(len(pop()))
        elif op == "MEM":
            key = pop()
            push(key in pop())
        elif op == "GET":
            key = pop()
            container = pop()
            push(Some(container[key]) if key in container else None)
        elif op == "UPDATE":
            key, change, container = pop(), pop(), pop()
            if isinstance(container, frozenset):
                push(container | {key} if change else container - {key})
            else:
                updated = dict(container)
                if change is None:
                    updated.pop(key, None)
                else:
                    updated[key] = change.value
                push(updated)
        elif op in {"ADD", "SUB", "MUL"}:
            a, b = pop(), pop()
            result = a + b if op == "ADD" else a - b if op == "SUB" else a * b
            if instr.stack_out is not None and instr.stack_out[0].prim == "mutez":
                result = _check_mutez(result, span)
            push(result)
        elif op == "EDIV":
            a, b = pop(), pop()
            push(_ediv(a, b))
        elif op in {"LSL", "LSR"}:
            a, b = pop(), pop()
            if b > SHIFT_LIMIT:
                raise ContractFailure("shift-overflow", b, span)
            push(a << b if op == "LSL" else a >> b)
        elif op in {"AND", "OR", "XOR"}:
            a, b = pop(), pop()
            if isinstance(a, bool):
                push(a and b if op == "AND" else a or b if op == "OR" else a != b)
            else:
                push(a & b if op == "AND" else a | b if op == "OR" else a ^ b)
        elif op == "NOT":
            a = pop()
            push((not a) if isinstance(a, bool) else ~a)
        elif op == "NEG":
            push(-pop())
        elif op == "ABS":
            push(abs(pop()))
        elif op == "ISNAT":
            a = pop()
            push(Some(a) if a >= 0 else None)
        elif op == "INT":
            pass
        elif op == "COMPARE":
            a, b = pop(), pop()
            push(compare_values(a, b))
        elif op in {"EQ", "NEQ", "LT", "GT", "LE", "GE"}:
            push(_TESTS[op](pop()))
        elif op == "SENDER":
            push(self.ctx.sender)
        elif op == "SOURCE":
            push(self.ctx.source)
        elif op == "SELF_ADDRESS":
            push(self.ctx.self_address)
        elif op == "AMOUNT":
            push(self.ctx.amount)
        elif op == "BALANCE":
            push(self.ctx.balance)
        elif op == "NOW":
            push(self.ctx.now)
        elif op == "CONTRACT":
            push(self.lookup(pop(), instr))
        elif op == "TRANSFER_TOKENS":
            arg, amount, target = pop(), pop(), pop()
            arg_type = instr.stack_in[0] if instr.stack_in else MType("unit")
            push(Transfer(target.address, target.entrypoint, amount, arg, arg_type, self.ctx.self_address))
        elif op == "FAILWITH":
            payload_type = instr.stack_in[0] if instr.stack_in else None
            raise ContractFailure("failwith", pop(), span, payload_type)
        elif op == "IF":
            self.run(instr.body[0] if pop() else instr.body[1], stack)
        elif op == "IF_NONE":
            top = pop()
            if top is None:
                self.run(instr.body[0], stack)
            else:
                push(top.value)
                self.run(instr.body[1], stack)
        elif op == "IF_LEFT":
            top = pop()
            push(top.value)
            self.run(instr.body[0] if isinstance(top, Left) else instr.body[1], stack)
        elif op == "IF_CONS":
            top = pop()
            if top:
                push(top[1:])
                push(top[0])
                self.run(instr.body[0], stack)
            else:
                self.run(instr.body[1], stack)
        elif op == "LOOP":
            while pop():
                self.run(instr.body[0], stack)
        elif op == "LOOP_LEFT":
            top = pop()
            while isinstance(top, Left):
                push(top.value)
                self.run(instr.body[0], stack)
                top = pop()
            push(top.value)
        elif op == "ITER":
            for item in _elements(pop()):
                push(item)
                self.run(instr.body[0], stack)
        elif op == "MAP":
            container = pop()
            results = []
            for item in _elements(container):
                push(item)
                self.run(instr.body[0], stack)
                results.append(pop())
            if isinstance(container, dict):
                push(dict(zip(sorted(container), results)))
            else:
                push(tuple(results))
        else:  # pragma: no cover - rejected by the typechecker
            raise ValueError(f"unsupported instruction {op}")

    def lookup(self, address: str, instr: Instr) -> Any:
        wanted = instr.types[0]
        name = instr.entrypoint or "default"
        if is_implicit(address):
            return Some(ContractRef(address)) if wanted.prim == "unit" and name == "default" else None
        script = self.ctx.contracts.get(address)
        if script is None:
            return None
        for entry in script.entrypoints:
            if entry.name == name and entry.type == wanted:
                return Some(ContractRef(address, name))
        if name == "default" and script.parameter_type == wanted:
            return Some(ContractRef(address, "default"))
        return None


_TESTS = {
    "EQ": lambda v: v == 0,
    "NEQ": lambda v: v != 0,
    "LT": lambda v: v < 0,
    "GT": lambda v: v > 0,
    "LE": lambda v: v <= 0,
    "GE": lambda v: v >= 0,
}


def _elements(container: Any) -> list[Any]:
    if isinstance(container, dict):
        return [(key, container[key]) for key in sorted(container)]
    if isinstance(container, frozenset):
        return sorted(container)
    return list(container)
