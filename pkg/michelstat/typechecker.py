"""Static typing of parsed scripts.

Every instruction of the result carries its input and output stack types
(``stack_in`` / ``stack_out``, top of stack first). ``stack_out`` is ``None``
after an instruction that never returns (FAILWITH, or branches that all fail).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .mtypes import (
    ADDRESS,
    BOOL,
    INT,
    MUTEZ,
    NAT,
    OPERATION,
    OPERATIONS,
    TIMESTAMP,
    UNIT,
    MType,
    contains_operation,
    contract,
    is_comparable,
    is_key_type,
    list_,
    map_,
    option,
    or_,
    pair,
    set_,
)
from .parser import NO_SPAN, Instr, Script, Seq, Span
from .values import DataError, from_data

logger = logging.getLogger(__name__)

Stack = tuple[MType, ...]

ADD_TYPES = {
    ("nat", "nat"): NAT, ("nat", "int"): INT, ("int", "nat"): INT, ("int", "int"): INT,
    ("timestamp", "int"): TIMESTAMP, ("int", "timestamp"): TIMESTAMP, ("mutez", "mutez"): MUTEZ,
}
SUB_TYPES = {
    ("nat", "nat"): INT, ("nat", "int"): INT, ("int", "nat"): INT, ("int", "int"): INT,
    ("timestamp", "int"): TIMESTAMP, ("timestamp", "timestamp"): INT, ("mutez", "mutez"): MUTEZ,
}
MUL_TYPES = {
    ("nat", "nat"): NAT, ("nat", "int"): INT, ("int", "nat"): INT, ("int", "int"): INT,
    ("mutez", "nat"): MUTEZ, ("nat", "mutez"): MUTEZ,
}
EDIV_TYPES = {
    ("nat", "nat"): (NAT, NAT), ("nat", "int"): (INT, NAT), ("int", "nat"): (INT, NAT),
    ("int", "int"): (INT, NAT), ("mutez", "nat"): (MUTEZ, MUTEZ), ("mutez", "mutez"): (NAT, MUTEZ),
}
SHIFT_TYPES = {("nat", "nat"): NAT}
AND_TYPES = {("nat", "nat"): NAT, ("bool", "bool"): BOOL, ("int", "nat"): NAT}
OR_TYPES = {("nat", "nat"): NAT, ("bool", "bool"): BOOL}
BINARY = {
    "ADD": ADD_TYPES, "SUB": SUB_TYPES, "MUL": MUL_TYPES, "LSL": SHIFT_TYPES, "LSR": SHIFT_TYPES,
    "AND": AND_TYPES, "OR": OR_TYPES, "XOR": OR_TYPES,
}
UNARY = {
    "NEG": {"nat": INT, "int": INT},
    "ABS": {"int": NAT},
    "ISNAT": {"int": option(NAT)},
    "INT": {"nat": INT},
    "NOT": {"bool": BOOL, "nat": INT, "int": INT},
    "EQ": {"int": BOOL}, "NEQ": {"int": BOOL}, "LT": {"int": BOOL},
    "GT": {"int": BOOL}, "LE": {"int": BOOL}, "GE": {"int": BOOL},
}
CONTEXT = {
    "SENDER": ADDRESS, "SOURCE": ADDRESS, "SELF_ADDRESS": ADDRESS,
    "AMOUNT": MUTEZ, "BALANCE": MUTEZ, "NOW": TIMESTAMP,
}


class MichelsonTypeError(ValueError):
    def __init__(self, message: str, span: Span = NO_SPAN) -> None:
        super().__init__(f"{span}: {message}" if span != NO_SPAN else message)
        self.span = span


@dataclass(frozen=True)
class Entrypoint:
    name: str
    type: MType
    path: tuple[str, ...]


@dataclass(frozen=True)
class TypedScript:
    storage_type: MType
    parameter_type: MType
    entrypoints: tuple[Entrypoint, ...]
    code: Seq
    code_span: Span = field(default=NO_SPAN, compare=False)

    @property
    def input_type(self) -> MType:
        return pair(self.parameter_type, self.storage_type)

    def entrypoint(self, name: str) -> Entrypoint:
        for entry in self.entrypoints:
            if entry.name == name:
                return entry
        known = ", ".join(entry.name for entry in self.entrypoints)
        raise ValueError(f"Unknown entry point '{name}'. Known entry points: {known}")


def entrypoints_of(parameter: MType) -> tuple[Entrypoint, ...]:
    """The leaves of the parameter's ``or`` tree, named by their field annotation."""

    if parameter.prim != "or":
        return (Entrypoint(parameter.annot or "default", parameter, ()),)
    leaves: list[Entrypoint] = []

    def walk(ty: MType, path: tuple[str, ...]) -> None:
        if ty.prim == "or":
            walk(ty.args[0], path + ("left",))
            walk(ty.args[1], path + ("right",))
        else:
            leaves.append(Entrypoint(ty.annot or "_".join(path), ty, path))

    walk(parameter, ())
    names = [leaf.name for leaf in leaves]
    if len(set(names)) != len(names):
        raise MichelsonTypeError(f"duplicate entry point names in parameter: {names}")
    return tuple(leaves)


def typecheck(script: Script) -> TypedScript:
    """Annotate ``script`` with stack types; raises :class:`MichelsonTypeError`."""

    for section, ty in (("storage", script.storage), ("parameter", script.parameter)):
        if contains_operation(ty):
            raise MichelsonTypeError(f"{section} type may not contain operations or contracts")
        _check_wellformed(ty)
    start: Stack = (pair(script.parameter, script.storage),)
    code, out = _Checker().seq(script.code, start)
    expected: Stack = (pair(OPERATIONS, script.storage),)
    if out is not None and out != expected:
        raise MichelsonTypeError(
            f"final stack is [{_show(out)}], expected [{_show(expected)}]", script.code_span
        )
    typed = TypedScript(
        storage_type=script.storage,
        parameter_type=script.parameter,
        entrypoints=entrypoints_of(script.parameter),
        code=code,
        code_span=script.code_span,
    )
    logger.debug("Typechecked script with entry points %s", [e.name for e in typed.entrypoints])
    return typed


def _check_wellformed(ty: MType) -> None:
    if ty.prim in {"set", "map"} and not is_key_type(ty.args[0]):
        raise MichelsonTypeError(f"{ty.prim} keys must be comparable scalars, found {ty.args[0]}")
    for arg in ty.args:
        _check_wellformed(arg)


def _show(stack: Stack) -> str:
    return " : ".join(str(ty) for ty in stack)


class _Checker:
    def seq(self, seq: Seq, stack: Stack) -> tuple[Seq, Stack | None]:
        typed: list[Instr] = []
        current: Stack | None = stack
        for instr in seq:
            if current is None:
                raise MichelsonTypeError("unreachable instruction after FAILWITH", instr.span)
            annotated, current = self.instr(instr, current)
            typed.append(annotated)
        return tuple(typed), current

    def instr(self, instr: Instr, stack: Stack) -> tuple[Instr, Stack | None]:
        body: tuple[Seq, ...] = instr.body
        value: object = None
        out: Stack | None
        op, span = instr.op, instr.span

        def need(count: int) -> None:
            if len(stack) < count:
                raise MichelsonTypeError(f"{op} needs {count} stack element(s), found {len(stack)}", span)

        def expect(ty: MType, actual: MType, what: str = "operand") -> None:
            if ty != actual:
                raise MichelsonTypeError(f"{op}: {what} has type {actual}, expected {ty}", span)

        def prim_at(index: int, *prims: str) -> MType:
            need(index + 1)
            if stack[index].prim not in prims:
                raise MichelsonTypeError(
                    f"{op}: expected {' or '.join(prims)} at depth {index}, found {stack[index]}", span
                )
            return stack[index]

        if op == "PUSH":
            ty = instr.types[0]
            if contains_operation(ty):
                raise MichelsonTypeError("PUSH cannot build operations or contracts", span)
            _check_wellformed(ty)
            try:
                value = from_data(instr.data, ty)  # type: ignore[arg-type]
            except DataError as exc:
                raise MichelsonTypeError(str(exc), span) from exc
            out = (ty,) + stack
        elif op == "UNIT":
            out = (UNIT,) + stack
        elif op == "DROP":
            n = 1 if instr.n is None else instr.n
            need(n)
            out = stack[n:]
        elif op == "DUP":
            n = 1 if instr.n is None else instr.n
            if n < 1:
                raise MichelsonTypeError("DUP 0 is not allowed", span)
            need(n)
            out = (stack[n - 1],) + stack
        elif op == "SWAP":
            need(2)
            out = (stack[1], stack[0]) + stack[2:]
        elif op == "DIG":
            n = 1 if instr.n is None else instr.n
            need(n + 1)
            out = (stack[n],) + stack[:n] + stack[n + 1:]
        elif op == "DUG":
            n = 1 if instr.n is None else instr.n
            need(n + 1)
            out = stack[1:n + 1] + (stack[0],) + stack[n + 1:]
        elif op == "DIP":
            n = 1 if instr.n is None else instr.n
            need(n)
            inner, rest = self.seq(instr.body[0], stack[n:])
            body = (inner,)
            out = None if rest is None else stack[:n] + rest
        elif op == "PAIR":
            need(2)
            out = (pair(stack[0], stack[1]),) + stack[2:]
        elif op == "UNPAIR":
            top = prim_at(0, "pair")
            out = top.args + stack[1:]
        elif op in {"CAR", "CDR"}:
            top = prim_at(0, "pair")
            out = (top.args[0 if op == "CAR" else 1],) + stack[1:]
        elif op == "SOME":
            need(1)
            out = (option(stack[0]),) + stack[1:]
        elif op == "NONE":
            out = (option(instr.types[0]),) + stack
        elif op == "LEFT":
            need(1)
            out = (or_(stack[0], instr.types[0]),) + stack[1:]
        elif op == "RIGHT":
            need(1)
            out = (or_(instr.types[0], stack[0]),) + stack[1:]
        elif op == "NIL":
            out = (list_(instr.types[0]),) + stack
        elif op == "EMPTY_SET":
            if not is_key_type(instr.types[0]):
                raise MichelsonTypeError(f"set elements must be comparable scalars, found {instr.types[0]}", span)
            out = (set_(instr.types[0]),) + stack
        elif op == "EMPTY_MAP":
            if not is_key_type(instr.types[0]):
                raise MichelsonTypeError(f"map keys must be comparable scalars, found {instr.types[0]}", span)
            out = (map_(instr.types[0], instr.types[1]),) + stack
        elif op == "CONS":
            need(2)
            lst = prim_at(1, "list")
            expect(lst.args[0], stack[0], "list element")
            out = stack[1:]
        elif op == "SIZE":
            prim_at(0, "list", "set", "map", "string")
            out = (NAT,) + stack[1:]
        elif op == "MEM":
            container = prim_at(1, "set", "map")
            expect(container.args[0], stack[0], "key")
            out = (BOOL,) + stack[2:]
        elif op == "GET":
            container = prim_at(1, "map")
            expect(container.args[0], stack[0], "key")
            out = (option(container.args[1]),) + stack[2:]
        elif op == "UPDATE":
            container = prim_at(2, "set", "map")
            expect(container.args[0], stack[0], "key")
            if container.prim == "set":
                expect(BOOL, stack[1], "membership flag")
            else:
                expect(option(container.args[1]), stack[1], "new value")
            out = stack[2:]
        elif op in BINARY:
            need(2)
            result = BINARY[op].get((stack[0].prim, stack[1].prim))
            if result is None:
                raise MichelsonTypeError(f"{op} is not defined on {stack[0]} and {stack[1]}", span)
            out = (result,) + stack[2:]
        elif op == "EDIV":
            need(2)
            result_pair = EDIV_TYPES.get((stack[0].prim, stack[1].prim))
            if result_pair is None:
                raise MichelsonTypeError(f"EDIV is not defined on {stack[0]} and {stack[1]}", span)
            out = (option(pair(*result_pair)),) + stack[2:]
        elif op in UNARY:
            need(1)
            result = UNARY[op].get(stack[0].prim)
            if result is None:
                raise MichelsonTypeError(f"{op} is not defined on {stack[0]}", span)
            out = (result,) + stack[1:]
        elif op == "COMPARE":
            need(2)
            if stack[0] != stack[1] or not is_comparable(stack[0]):
                raise MichelsonTypeError(f"cannot compare {stack[0]} with {stack[1]}", span)
            out = (INT,) + stack[2:]
        elif op in CONTEXT:
            out = (CONTEXT[op],) + stack
        elif op == "CONTRACT":
            prim_at(0, "address")
            out = (option(contract(instr.types[0])),) + stack[1:]
        elif op == "TRANSFER_TOKENS":
            need(3)
            expect(MUTEZ, stack[1], "amount")
            target = prim_at(2, "contract")
            expect(target.args[0], stack[0], "argument")
            out = (OPERATION,) + stack[3:]
        elif op == "FAILWITH":
            need(1)
            if contains_operation(stack[0]):
                raise MichelsonTypeError("FAILWITH argument may not contain operations", span)
            out = None
        elif op == "IF":
            prim_at(0, "bool")
            body, out = self.branches(instr, stack[1:], stack[1:])
        elif op == "IF_NONE":
            top = prim_at(0, "option")
            body, out = self.branches(instr, stack[1:], (top.args[0],) + stack[1:])
        elif op == "IF_LEFT":
            top = prim_at(0, "or")
            body, out = self.branches(instr, (top.args[0],) + stack[1:], (top.args[1],) + stack[1:])
        elif op == "IF_CONS":
            top = prim_at(0, "list")
            body, out = self.branches(instr, (top.args[0], top) + stack[1:], stack[1:])
        elif op == "LOOP":
            prim_at(0, "bool")
            inner, after = self.seq(instr.body[0], stack[1:])
            if after is not None and after != stack:
                raise MichelsonTypeError(f"LOOP body must end with [{_show(stack)}], found [{_show(after)}]", span)
            body, out = (inner,), stack[1:]
        elif op == "LOOP_LEFT":
            top = prim_at(0, "or")
            inner, after = self.seq(instr.body[0], (top.args[0],) + stack[1:])
            if after is not None and after != stack:
                raise MichelsonTypeError(f"LOOP_LEFT body must end with [{_show(stack)}]", span)
            body, out = (inner,), (top.args[1],) + stack[1:]
        elif op == "ITER":
            top = prim_at(0, "list", "set", "map")
            element = pair(*top.args) if top.prim == "map" else top.args[0]
            inner, after = self.seq(instr.body[0], (element,) + stack[1:])
            if after is not None and after != stack[1:]:
                raise MichelsonTypeError(f"ITER body must end with [{_show(stack[1:])}]", span)
            body, out = (inner,), stack[1:]
        elif op == "MAP":
            top = prim_at(0, "list", "map")
            element = pair(*top.args) if top.prim == "map" else top.args[0]
            inner, after = self.seq(instr.body[0], (element,) + stack[1:])
            if after is None:
                # The body always fails: the result type is the input type.
                result = top
            else:
                if len(after) != len(stack) or after[1:] != stack[1:]:
                    raise MichelsonTypeError("MAP body must preserve the stack below its result", span)
                result = list_(after[0]) if top.prim == "list" else map_(top.args[0], after[0])
            body, out = (inner,), (result,) + stack[1:]
        else:  # pragma: no cover - the parser rejects anything else
            raise MichelsonTypeError(f"unsupported instruction {op}", span)

        annotated = replace(instr, body=body, stack_in=stack, stack_out=out, value=value)
        return annotated, out

    def branches(self, instr: Instr, then_in: Stack, else_in: Stack) -> tuple[tuple[Seq, Seq], Stack | None]:
        then_body, then_out = self.seq(instr.body[0], then_in)
        else_body, else_out = self.seq(instr.body[1], else_in)
        if then_out is not None and else_out is not None and then_out != else_out:
            raise MichelsonTypeError(
                f"{instr.op} branches end with different stacks: [{_show(then_out)}] vs [{_show(else_out)}]",
                instr.span,
            )
        return (then_body, else_body), then_out if then_out is not None else else_out


__all__ = [
    "Entrypoint",
    "MichelsonTypeError",
    "TypedScript",
    "entrypoints_of",
    "typecheck",
]
