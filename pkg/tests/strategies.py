"""Hypothesis strategies: random well-typed contracts and concrete inputs for them."""

from __future__ import annotations

from dataclasses import dataclass

import hypothesis.strategies as st

from michelstat.interpreter import CallContext
from michelstat.mtypes import BOOL, INT, MUTEZ, NAT, MType, list_, option, or_, pair, render_type
from michelstat.parser import parse
from michelstat.settings import MUTEZ_MAX
from michelstat.typechecker import ADD_TYPES, EDIV_TYPES, MUL_TYPES, SUB_TYPES, TypedScript, typecheck
from michelstat.values import Left, Right

SENDERS = ("tz1alice", "tz1bob", "tz1carol")

INTERESTING = {
    "nat": (0, 1, 2, 7, 31, 255, 256, 257, 2**63, 2**64),
    "int": (-1000, -5, -1, 0, 1, 3, 1000),
    "mutez": (0, 1, 1000, 2**62, MUTEZ_MAX - 1, MUTEZ_MAX),
}
ARITH_TABLES = {"ADD": ADD_TYPES, "SUB": SUB_TYPES, "MUL": MUL_TYPES}
RELATIONS = ("EQ", "NEQ", "LT", "GT", "LE", "GE")
NUMERIC = ("int", "nat", "mutez")

PARAMETER_TYPES = (NAT, INT, MUTEZ, BOOL, pair(NAT, MUTEZ), pair(INT, INT), or_(NAT, INT))
STORAGE_TYPES = (NAT, INT, MUTEZ, pair(NAT, INT))


def load(source: str) -> TypedScript:
    return typecheck(parse(source))


@dataclass(frozen=True)
class GeneratedScript:
    source: str
    parameter: MType
    storage: MType

    @property
    def script(self) -> TypedScript:
        return load(self.source)


def _numeric(ty: MType) -> bool:
    return ty.prim in {"int", "nat", "mutez"}


@st.composite
def constants(draw: st.DrawFn, prim: str) -> int:
    if prim == "int":
        return draw(st.sampled_from(INTERESTING["int"]) | st.integers(-300, 300))
    return draw(st.sampled_from(INTERESTING[prim]) | st.integers(0, 300))


def _flatten(stack: list[MType], code: list[str]) -> None:
    while stack[0].prim in {"pair", "or"}:
        top = stack.pop(0)
        if top.prim == "pair":
            code.append("UNPAIR")
            stack[:0] = list(top.args)
        else:
            # or nat int
            code.append("IF_LEFT { INT } {}")
            stack.insert(0, INT)


def _to_nat(prim: str) -> str:
    """Code turning a numeric top of type ``prim`` into a nat."""

    if prim == "int":
        return "ABS"
    if prim == "mutez":
        return "PUSH mutez 1; SWAP; EDIV; IF_NONE { PUSH nat 0 } { CAR }"
    return ""


@st.composite
def _step(draw: st.DrawFn, stack: list[MType], code: list[str], depth: int = 0) -> None:
    """Append one well-typed fragment to ``code`` and update ``stack`` in place."""

    top = stack[0]
    second = stack[1] if len(stack) > 1 else None
    options = ["push", "context"]
    if len(stack) < 8:
        options += ["dup", "none", "nil"]
    if second is not None:
        options += ["swap", "dig", "dug", "drop", "pair"]
        for name, table in ARITH_TABLES.items():
            if (top.prim, second.prim) in table:
                options.append(name)
        if (top.prim, second.prim) in EDIV_TYPES:
            options.append("ediv")
        if top.prim == second.prim == "nat":
            options += ["shift", "and"]
        if top == second and top.prim in {"int", "nat", "mutez", "bool"}:
            options += ["compare", "test"]
        if top.prim == second.prim == "mutez":
            options.append("guarded-sub")
        if second.prim == "list" and second.args[0] == top:
            options.append("cons")
        if depth < 2:
            options.append("dip")
    if top.prim in {"pair"}:
        options.append("unpair")
    if top.prim in {"nat", "int"}:
        options += ["unary", "iter"]
    if top.prim == "nat":
        options += ["loop", "loop-left"]
    if _numeric(top):
        options += ["assert", "some", "inject", "set", "map-get"]
    if top.prim == "bool":
        options += ["if", "not"]
    if top.prim == "option" and _numeric(top.args[0]):
        options.append("if-none")
    if top.prim == "or" and all(_numeric(arg) for arg in top.args):
        options.append("if-left")
    if top.prim == "list" and _numeric(top.args[0]):
        options += ["if-cons", "size"]
        if top.args[0].prim in {"nat", "int"}:
            options.append("map")
        if second == top.args[0]:
            options.append("fold")

    choice = draw(st.sampled_from(options))
    if choice == "push":
        prim = draw(st.sampled_from(NUMERIC))
        code.append(f"PUSH {prim} {draw(constants(prim))}")
        stack.insert(0, MType(prim))
    elif choice == "context":
        code.append(draw(st.sampled_from(("AMOUNT", "BALANCE"))))
        stack.insert(0, MUTEZ)
    elif choice == "dup":
        n = draw(st.integers(1, min(len(stack), 4)))
        code.append(f"DUP {n}")
        stack.insert(0, stack[n - 1])
    elif choice == "none":
        prim = draw(st.sampled_from(NUMERIC))
        code.append(f"NONE {prim}")
        stack.insert(0, option(MType(prim)))
    elif choice == "nil":
        prim = draw(st.sampled_from(NUMERIC))
        code.append(f"NIL {prim}")
        stack.insert(0, list_(MType(prim)))
    elif choice == "swap":
        code.append("SWAP")
        stack[0], stack[1] = stack[1], stack[0]
    elif choice == "dig":
        n = draw(st.integers(1, min(len(stack) - 1, 3)))
        code.append(f"DIG {n}")
        stack.insert(0, stack.pop(n))
    elif choice == "dug":
        n = draw(st.integers(1, min(len(stack) - 1, 3)))
        code.append(f"DUG {n}")
        stack.insert(n, stack.pop(0))
    elif choice == "drop":
        code.append("DROP")
        stack.pop(0)
    elif choice == "pair":
        code.append("PAIR")
        stack[:2] = [pair(stack[0], stack[1])]
    elif choice == "unpair":
        code.append("UNPAIR")
        stack[:1] = list(top.args)
    elif choice in ARITH_TABLES:
        code.append(choice)
        stack[:2] = [ARITH_TABLES[choice][(top.prim, second.prim)]]  # type: ignore[union-attr]
    elif choice == "ediv":
        quotient = EDIV_TYPES[(top.prim, second.prim)][0]  # type: ignore[union-attr]
        code.append(f"EDIV; IF_NONE {{ PUSH {render_type(quotient)} 0 }} {{ CAR }}")
        stack[:2] = [quotient]
    elif choice == "shift":
        code.append(draw(st.sampled_from(("LSL", "LSR"))))
        stack[:2] = [NAT]
    elif choice == "and":
        code.append(draw(st.sampled_from(("AND", "OR", "XOR"))))
        stack[:2] = [NAT]
    elif choice == "compare":
        code.append("COMPARE")
        stack[:2] = [INT]
    elif choice == "test":
        code.append(f"COMPARE; {draw(st.sampled_from(RELATIONS))}")
        stack[:2] = [BOOL]
    elif choice == "guarded-sub":
        code.append('DUP 2; DUP 2; COMPARE; LT; IF { PUSH string "low"; FAILWITH } {}; SUB')
        stack[:2] = [MUTEZ]
    elif choice == "cons":
        code.append("CONS")
        stack.pop(0)
    elif choice == "dip":
        # the protected cells stay on top; the body sees only what lies below them
        n = draw(st.integers(1, min(len(stack) - 1, 2)))
        inner = stack[n:]
        body: list[str] = []
        for _ in range(draw(st.integers(1, 2))):
            draw(_step(inner, body, depth + 1))
        count = "" if n == 1 else f" {n}"
        code.append(f"DIP{count} {{ {'; '.join(body)} }}")
        stack[n:] = inner
    elif choice == "unary":
        if top.prim == "nat":
            op = draw(st.sampled_from(("INT", "NEG")))
            code.append(op)
            stack[0] = INT
        else:
            op = draw(st.sampled_from(("ABS", "NEG", "ISNAT")))
            if op == "ISNAT":
                code.append("ISNAT; IF_NONE { PUSH nat 0 } {}")
            else:
                code.append(op)
            stack[0] = NAT if op in {"ABS", "ISNAT"} else INT
    elif choice == "iter":
        items = draw(st.lists(constants(top.prim), max_size=draw(st.sampled_from((3, 12)))))
        literal = "{ " + " ; ".join(str(i) for i in items) + " }" if items else "{}"
        code.append(f"PUSH (list {top.prim}) {literal}; ITER {{ ADD }}")
    elif choice == "loop":
        code.append(
            "PUSH nat 31; AND; DUP; INT; GT; "
            "LOOP { PUSH nat 1; SWAP; SUB; ABS; DUP; INT; GT }"
        )
    elif choice == "loop-left":
        bound = draw(st.integers(0, 40))
        code.append(
            f"LEFT nat; LOOP_LEFT {{ DUP; PUSH nat {bound}; COMPARE; LT; "
            "IF { RIGHT nat } { PUSH nat 3; ADD; LEFT nat } }"
        )
    elif choice == "assert":
        value = draw(constants(top.prim))
        rel = draw(st.sampled_from(RELATIONS))
        code.append(f'DUP; PUSH {top.prim} {value}; COMPARE; {rel}; IF {{}} {{ PUSH string "guard"; FAILWITH }}')
    elif choice == "some":
        code.append("SOME")
        stack[0] = option(top)
    elif choice == "inject":
        other = MType(draw(st.sampled_from(NUMERIC)))
        if draw(st.booleans()):
            code.append(f"LEFT {other.prim}")
            stack[0] = or_(top, other)
        else:
            code.append(f"RIGHT {other.prim}")
            stack[0] = or_(other, top)
    elif choice == "set":
        flag = draw(st.sampled_from(("True", "False")))
        lookup = draw(st.sampled_from(("SWAP; MEM", f"SWAP; DROP; PUSH {top.prim} {draw(constants(top.prim))}; MEM", "SWAP; DROP; SIZE")))
        code.append(f"EMPTY_SET {top.prim}; PUSH bool {flag}; DUP 3; UPDATE; {lookup}")
        stack[0] = NAT if lookup.endswith("SIZE") else BOOL
    elif choice == "map-get":
        stored = draw(constants("nat"))
        other = draw(constants(top.prim))
        code.append(f"EMPTY_MAP {top.prim} nat; PUSH nat {stored}; SOME; DUP 3; UPDATE")
        if draw(st.booleans()):
            code.append(f"NONE nat; PUSH {top.prim} {draw(constants(top.prim))}; UPDATE")
        lookup = draw(st.sampled_from(("SWAP; GET", f"SWAP; DROP; PUSH {top.prim} {other}; GET", "SWAP; DROP; SIZE")))
        code.append(lookup)
        stack[0] = NAT if lookup.endswith("SIZE") else option(NAT)
    elif choice == "if":
        shapes = ("values", "fail-else", "fail-then") if second is not None else ("values",)
        shape = draw(st.sampled_from(shapes))
        if shape == "values":
            prim = draw(st.sampled_from(NUMERIC))
            a, b = draw(constants(prim)), draw(constants(prim))
            code.append(f"IF {{ PUSH {prim} {a} }} {{ PUSH {prim} {b} }}")
            stack[0] = MType(prim)
        elif shape == "fail-else":
            code.append('IF {} { PUSH string "no"; FAILWITH }')
            stack.pop(0)
        else:
            code.append('IF { PUSH string "no"; FAILWITH } {}')
            stack.pop(0)
    elif choice == "not":
        code.append("NOT")
    elif choice == "if-none":
        content = top.args[0].prim
        fallback = draw(constants(content))
        some = draw(st.sampled_from(("", f"PUSH {content} {draw(constants(content))}; ADD")))
        code.append(f"IF_NONE {{ PUSH {content} {fallback} }} {{ {some} }}")
        stack[0] = top.args[0]
    elif choice == "if-left":
        left, right = (arg.prim for arg in top.args)
        code.append(f"IF_LEFT {{ {_to_nat(left)} }} {{ {_to_nat(right)} }}")
        stack[0] = NAT
    elif choice == "if-cons":
        element = top.args[0].prim
        code.append(f"IF_CONS {{ DIP {{ DROP }} }} {{ PUSH {element} {draw(constants(element))} }}")
        stack[0] = top.args[0]
    elif choice == "size":
        code.append("SIZE")
        stack[0] = NAT
    elif choice == "map":
        element = top.args[0].prim
        code.append(f"MAP {{ PUSH {element} {draw(constants(element))}; ADD }}")
    elif choice == "fold":
        code.append("ITER { ADD }")
        stack.pop(0)


def _finish(stack: list[MType], storage: MType, code: list[str], emit: bool) -> None:
    position = next((i for i, ty in enumerate(stack) if ty == storage), None)
    if position is None:
        code.append(f"PUSH {render_type(storage)} {_default_literal(storage)}")
        rest = len(stack)
    else:
        if position:
            code.append(f"DIG {position}")
        rest = len(stack) - 1
    if rest:
        code.append(f"DIP {{ DROP {rest} }}")
    if emit:
        code.append(
            "NIL operation; SENDER; CONTRACT unit; "
            "IF_NONE {} { PUSH mutez 0; UNIT; TRANSFER_TOKENS; CONS }; PAIR"
        )
    else:
        code.append("NIL operation; PAIR")


def _default_literal(ty: MType) -> str:
    if ty.prim == "pair":
        return f"(Pair {_default_literal(ty.args[0])} {_default_literal(ty.args[1])})"
    return "0"


@st.composite
def scripts(draw: st.DrawFn, max_steps: int = 12) -> GeneratedScript:
    """A random contract that always typechecks: numeric code with options, unions, containers and nested DIPs."""

    parameter = draw(st.sampled_from(PARAMETER_TYPES))
    storage = draw(st.sampled_from(STORAGE_TYPES))
    stack: list[MType] = [parameter, storage]
    code = ["UNPAIR"]
    _flatten(stack, code)
    for _ in range(draw(st.integers(0, max_steps))):
        draw(_step(stack, code))
    _finish(stack, storage, code, draw(st.booleans()))
    body = ";\n       ".join(code)
    source = f"parameter {render_type(parameter)};\nstorage {render_type(storage)};\ncode {{ {body} }}"
    return GeneratedScript(source, parameter, storage)


@st.composite
def values_of(draw: st.DrawFn, ty: MType):
    """A concrete parameter or storage value of ``ty`` (numbers, booleans, pairs and unions)."""

    prim = ty.prim
    if prim in INTERESTING:
        return draw(constants(prim))
    if prim == "bool":
        return draw(st.booleans())
    if prim == "pair":
        return (draw(values_of(ty.args[0])), draw(values_of(ty.args[1])))
    if prim == "or":
        if draw(st.booleans()):
            return Left(draw(values_of(ty.args[0])))
        return Right(draw(values_of(ty.args[1])))
    raise ValueError(f"no value strategy for {ty}")


@st.composite
def contexts(draw: st.DrawFn) -> CallContext:
    sender = draw(st.sampled_from(SENDERS))
    return CallContext(
        sender=sender,
        source=sender,
        amount=draw(constants("mutez")),
        balance=draw(constants("mutez")),
    )
