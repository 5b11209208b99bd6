"""Concrete syntax of the Michelson subset: tokens, AST, macros and printing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .mtypes import ARITY, MType, render_type


class MichelsonSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True, order=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0)


@dataclass(frozen=True)
class DInt:
    value: int


@dataclass(frozen=True)
class DStr:
    value: str


@dataclass(frozen=True)
class DPrim:
    name: str
    args: tuple["Data", ...] = ()


@dataclass(frozen=True)
class DSeq:
    items: tuple["Data", ...] = ()


Data = Union[DInt, DStr, DPrim, DSeq]


@dataclass(frozen=True)
class Instr:
    op: str
    n: int | None = None
    types: tuple[MType, ...] = ()
    data: Data | None = None
    entrypoint: str | None = None
    body: tuple[tuple["Instr", ...], ...] = ()
    span: Span = field(default=NO_SPAN, compare=False)
    # Filled by the typechecker.
    stack_in: tuple[MType, ...] | None = field(default=None, compare=False, repr=False)
    stack_out: tuple[MType, ...] | None = field(default=None, compare=False, repr=False)
    value: object = field(default=None, compare=False, repr=False)


Seq = tuple[Instr, ...]


@dataclass(frozen=True)
class Script:
    storage: MType
    parameter: MType
    code: Seq
    code_span: Span = field(default=NO_SPAN, compare=False)


NOARG_OPS = frozenset(
    {
        "UNIT", "SWAP", "PAIR", "UNPAIR", "CAR", "CDR", "SOME", "CONS", "MEM", "GET",
        "UPDATE", "SIZE", "ADD", "SUB", "MUL", "EDIV", "NEG", "ABS", "ISNAT", "INT",
        "LSL", "LSR", "AND", "OR", "XOR", "NOT", "COMPARE", "EQ", "NEQ", "LT", "GT",
        "LE", "GE", "FAILWITH", "SENDER", "SOURCE", "AMOUNT", "BALANCE", "NOW",
        "SELF_ADDRESS", "TRANSFER_TOKENS",
    }
)
COUNT_OPS = frozenset({"DROP", "DUP", "DIG", "DUG"})
TYPE_OPS = {"NONE": 1, "LEFT": 1, "RIGHT": 1, "NIL": 1, "EMPTY_SET": 1, "CONTRACT": 1, "EMPTY_MAP": 2}
BRANCH_OPS = frozenset({"IF", "IF_NONE", "IF_LEFT", "IF_CONS"})
LOOP_OPS = frozenset({"ITER", "MAP", "LOOP", "LOOP_LEFT"})
CORE_OPS = NOARG_OPS | COUNT_OPS | set(TYPE_OPS) | BRANCH_OPS | LOOP_OPS | {"PUSH", "DIP"}

CMP_SUFFIXES = ("EQ", "NEQ", "LT", "GT", "LE", "GE")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>-?\d+)
  | (?P<annot>[%@:][A-Za-z0-9_.%@]*)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}();])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if match is None:
            raise MichelsonSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = match.lastgroup or ""
        if kind == "nl":
            line += 1
            line_start = match.end()
        elif kind not in {"ws", "comment"}:
            tokens.append(Token(kind, match.group(), line, col))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0

    # token helpers -------------------------------------------------------

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        token = self.peek()
        if token is None:
            last = self.tokens[-1] if self.tokens else Token("eof", "", 1, 1)
            raise MichelsonSyntaxError("unexpected end of input", last.line, last.col + len(last.text))
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.next()
        if token.text != text:
            raise MichelsonSyntaxError(f"expected '{text}', found '{token.text}'", token.line, token.col)
        return token

    def at(self, text: str) -> bool:
        token = self.peek()
        return token is not None and token.text == text

    def skip_annotations(self) -> list[str]:
        annots = []
        while (token := self.peek()) is not None and token.kind == "annot":
            annots.append(self.next().text)
        return annots

    # sections ------------------------------------------------------------

    def script(self) -> Script:
        sections: dict[str, object] = {}
        code_span = NO_SPAN
        while self.peek() is not None:
            token = self.next()
            if token.text not in {"storage", "parameter", "code"}:
                raise MichelsonSyntaxError(
                    f"expected 'storage', 'parameter' or 'code', found '{token.text}'",
                    token.line,
                    token.col,
                )
            if token.text in sections:
                raise MichelsonSyntaxError(f"duplicate '{token.text}' section", token.line, token.col)
            if token.text == "code":
                code_span = Span(token.line, token.col)
                sections["code"] = self.block()
            else:
                sections[token.text] = self.type_app()
            if self.peek() is not None:
                self.expect(";")
        for name in ("storage", "parameter", "code"):
            if name not in sections:
                raise MichelsonSyntaxError(f"missing '{name}' section", 1, 1)
        return Script(
            storage=sections["storage"],  # type: ignore[arg-type]
            parameter=sections["parameter"],  # type: ignore[arg-type]
            code=sections["code"],  # type: ignore[arg-type]
            code_span=code_span,
        )

    # types ---------------------------------------------------------------

    def type_app(self) -> MType:
        """A type in a position where an unparenthesized application is allowed."""
        if self.at("("):
            return self.type_atom()
        token = self.next()
        return self._type_tail(token, allow_annot=True)

    def type_atom(self) -> MType:
        token = self.next()
        if token.text == "(":
            inner = self.next()
            ty = self._type_tail(inner, allow_annot=True)
            self.expect(")")
            return ty
        if token.kind != "word" or ARITY.get(token.text) != 0:
            raise MichelsonSyntaxError(f"expected a type, found '{token.text}'", token.line, token.col)
        return MType(token.text)

    def _type_tail(self, token: Token, *, allow_annot: bool) -> MType:
        if token.kind != "word" or token.text not in ARITY:
            raise MichelsonSyntaxError(f"unknown type '{token.text}'", token.line, token.col)
        annots = self.skip_annotations() if allow_annot else []
        fields = [a[1:] for a in annots if a.startswith("%") and len(a) > 1]
        args = tuple(self.type_atom() for _ in range(ARITY[token.text]))
        return MType(token.text, args, fields[0] if fields else None)

    # instructions --------------------------------------------------------

    def block(self) -> Seq:
        self.expect("{")
        instrs: list[Instr] = []
        while not self.at("}"):
            instrs.extend(self.instr())
            if not self.at("}"):
                self.expect(";")
        self.expect("}")
        return tuple(instrs)

    def instr(self) -> list[Instr]:
        if self.at("{"):
            return list(self.block())
        token = self.next()
        if token.kind != "word":
            raise MichelsonSyntaxError(f"expected an instruction, found '{token.text}'", token.line, token.col)
        op = token.text
        span = Span(token.line, token.col)
        annots = self.skip_annotations()
        if op in NOARG_OPS:
            return [Instr(op, span=span)]
        if op in COUNT_OPS:
            return [Instr(op, n=self.optional_int(), span=span)]
        if op == "DIP":
            n = self.optional_int()
            return [Instr(op, n=n, body=(self.block(),), span=span)]
        if op in TYPE_OPS:
            entrypoint = None
            if op == "CONTRACT":
                fields = [a[1:] for a in annots if a.startswith("%") and len(a) > 1]
                entrypoint = fields[0] if fields else None
            types = tuple(self.type_atom() for _ in range(TYPE_OPS[op]))
            return [Instr(op, types=types, entrypoint=entrypoint, span=span)]
        if op == "PUSH":
            ty = self.type_atom()
            return [Instr(op, types=(ty,), data=self.data_atom(), span=span)]
        if op in BRANCH_OPS:
            return [Instr(op, body=(self.block(), self.block()), span=span)]
        if op in LOOP_OPS:
            return [Instr(op, body=(self.block(),), span=span)]
        return self.macro(op, span, token)

    def optional_int(self) -> int | None:
        token = self.peek()
        if token is not None and token.kind == "int":
            self.next()
            value = int(token.text)
            if value < 0:
                raise MichelsonSyntaxError("negative stack index", token.line, token.col)
            return value
        return None

    def macro(self, op: str, span: Span, token: Token) -> list[Instr]:
        fail = (Instr("UNIT", span=span), Instr("FAILWITH", span=span))
        if op == "FAIL":
            return list(fail)
        if op == "ASSERT":
            return [Instr("IF", body=((), fail), span=span)]
        if op == "ASSERT_NONE":
            return [Instr("IF_NONE", body=((), fail), span=span)]
        if op == "ASSERT_SOME":
            return [Instr("IF_NONE", body=(fail, ()), span=span)]
        if op == "ASSERT_LEFT":
            return [Instr("IF_LEFT", body=((), fail), span=span)]
        if op == "ASSERT_RIGHT":
            return [Instr("IF_LEFT", body=(fail, ()), span=span)]
        if op == "IF_SOME":
            some, none = self.block(), self.block()
            return [Instr("IF_NONE", body=(none, some), span=span)]
        for prefix, compare in (("ASSERT_CMP", True), ("ASSERT_", False)):
            if op.startswith(prefix) and op[len(prefix):] in CMP_SUFFIXES:
                head = [Instr("COMPARE", span=span)] if compare else []
                return head + [Instr(op[len(prefix):], span=span), Instr("IF", body=((), fail), span=span)]
        if op.startswith("CMP") and op[3:] in CMP_SUFFIXES:
            return [Instr("COMPARE", span=span), Instr(op[3:], span=span)]
        for prefix, compare in (("IFCMP", True), ("IF", False)):
            if op.startswith(prefix) and op[len(prefix):] in CMP_SUFFIXES:
                then, other = self.block(), self.block()
                head = [Instr("COMPARE", span=span)] if compare else []
                return head + [Instr(op[len(prefix):], span=span), Instr("IF", body=(then, other), span=span)]
        raise MichelsonSyntaxError(f"unknown instruction '{op}'", token.line, token.col)

    # data ----------------------------------------------------------------

    def data_atom(self) -> Data:
        token = self.peek()
        if token is None:
            return self.next()  # type: ignore[return-value]  # raises
        if token.text == "(":
            self.next()
            inner = self.data_app()
            self.expect(")")
            return inner
        if token.text == "{":
            return self.data_seq()
        self.next()
        if token.kind == "int":
            return DInt(int(token.text))
        if token.kind == "string":
            return DStr(_unescape(token.text[1:-1]))
        if token.kind == "word" and token.text in {"True", "False", "Unit", "None"}:
            return DPrim(token.text)
        raise MichelsonSyntaxError(f"malformed literal '{token.text}'", token.line, token.col)

    def data_app(self) -> Data:
        token = self.peek()
        arity = {"Some": 1, "Left": 1, "Right": 1, "Pair": 2, "Elt": 2}
        if token is not None and token.kind == "word" and token.text in arity:
            self.next()
            return DPrim(token.text, tuple(self.data_atom() for _ in range(arity[token.text])))
        return self.data_atom()

    def data_seq(self) -> DSeq:
        self.expect("{")
        items: list[Data] = []
        while not self.at("}"):
            items.append(self.data_app())
            if not self.at("}"):
                self.expect(";")
        self.expect("}")
        return DSeq(tuple(items))


def _unescape(raw: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), raw)


def parse(text: str) -> Script:
    """Parse a contract source into an untyped script."""
    return _Parser(text).script()


def parse_data(text: str) -> Data:
    """Parse a stand-alone literal such as ``Pair 1 "tz1..."`` or ``{ Elt "a" 1 }``."""
    parser = _Parser(text)
    value = parser.data_app()
    if parser.peek() is not None:
        token = parser.next()
        raise MichelsonSyntaxError(f"trailing input '{token.text}'", token.line, token.col)
    return value


def parse_type(text: str) -> MType:
    parser = _Parser(text)
    ty = parser.type_app()
    if parser.peek() is not None:
        token = parser.next()
        raise MichelsonSyntaxError(f"trailing input '{token.text}'", token.line, token.col)
    return ty


# printing -----------------------------------------------------------------


def render_data(node: Data) -> str:
    if isinstance(node, DInt):
        return str(node.value)
    if isinstance(node, DStr):
        escaped = node.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(node, DSeq):
        return "{ " + " ; ".join(render_data(item) for item in node.items) + " }" if node.items else "{}"
    if not node.args:
        return node.name
    return "(" + " ".join([node.name, *(render_data(arg) for arg in node.args)]) + ")"


def _render_seq(seq: Seq, indent: int) -> str:
    if not seq:
        return "{}"
    pad = "  " * (indent + 1)
    body = " ;\n".join(pad + _render_instr(instr, indent + 1) for instr in seq)
    return "{\n" + body + " }"


def _render_instr(instr: Instr, indent: int) -> str:
    parts = [instr.op]
    if instr.entrypoint:
        parts.append(f"%{instr.entrypoint}")
    if instr.n is not None:
        parts.append(str(instr.n))
    parts.extend(render_type(ty) for ty in instr.types)
    if instr.data is not None:
        parts.append(render_data(instr.data))
    parts.extend(_render_seq(block, indent) for block in instr.body)
    return " ".join(parts)


def render_script(script: Script) -> str:
    return (
        f"parameter {render_type(script.parameter)} ;\n"
        f"storage {render_type(script.storage)} ;\n"
        f"code {_render_seq(script.code, 0)} ;\n"
    )


def iter_instrs(seq: Seq) -> Iterator[Instr]:
    for instr in seq:
        yield instr
        for block in instr.body:
            yield from iter_instrs(block)
