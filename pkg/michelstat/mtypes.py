"""Michelson types of the supported subset."""

from __future__ import annotations

from dataclasses import dataclass, field

NUMERIC = frozenset({"int", "nat", "mutez", "timestamp"})
SCALAR = NUMERIC | {"bool", "string", "unit", "address"}
ARITY = {
    "int": 0,
    "nat": 0,
    "mutez": 0,
    "timestamp": 0,
    "bool": 0,
    "string": 0,
    "unit": 0,
    "address": 0,
    "operation": 0,
    "pair": 2,
    "option": 1,
    "or": 2,
    "list": 1,
    "set": 1,
    "map": 2,
    "contract": 1,
}


@dataclass(frozen=True)
class MType:
    prim: str
    args: tuple["MType", ...] = ()
    annot: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.prim not in ARITY:
            raise ValueError(f"Unknown type constructor '{self.prim}'")
        if len(self.args) != ARITY[self.prim]:
            raise ValueError(f"Type '{self.prim}' expects {ARITY[self.prim]} argument(s)")

    def __str__(self) -> str:
        return render_type(self)

    @property
    def is_numeric(self) -> bool:
        return self.prim in NUMERIC

    @property
    def is_scalar(self) -> bool:
        return self.prim in SCALAR


def t(prim: str, *args: MType, annot: str | None = None) -> MType:
    return MType(prim, tuple(args), annot)


INT = t("int")
NAT = t("nat")
MUTEZ = t("mutez")
TIMESTAMP = t("timestamp")
BOOL = t("bool")
STRING = t("string")
UNIT = t("unit")
ADDRESS = t("address")
OPERATION = t("operation")
OPERATIONS = t("list", OPERATION)


def pair(a: MType, b: MType) -> MType:
    return t("pair", a, b)


def option(a: MType) -> MType:
    return t("option", a)


def or_(a: MType, b: MType) -> MType:
    return t("or", a, b)


def list_(a: MType) -> MType:
    return t("list", a)


def set_(a: MType) -> MType:
    return t("set", a)


def map_(k: MType, v: MType) -> MType:
    return t("map", k, v)


def contract(a: MType) -> MType:
    return t("contract", a)


def is_comparable(ty: MType) -> bool:
    if ty.prim == "pair":
        return all(is_comparable(arg) for arg in ty.args)
    return ty.is_scalar


def is_key_type(ty: MType) -> bool:
    """Set elements and map keys: scalar comparable types only."""
    return ty.is_scalar


def contains_operation(ty: MType) -> bool:
    if ty.prim in {"operation", "contract"}:
        return True
    return any(contains_operation(arg) for arg in ty.args)


def is_split_map(ty: MType) -> bool:
    return ty.prim == "map" and ty.args[0] == ADDRESS and ty.args[1] == MUTEZ


def render_type(ty: MType, *, annotations: bool = True) -> str:
    note = f" %{ty.annot}" if annotations and ty.annot else ""
    if not ty.args:
        return f"{ty.prim}{note}" if not note else f"({ty.prim}{note})"
    inner = " ".join(render_type(arg, annotations=annotations) for arg in ty.args)
    return f"({ty.prim}{note} {inner})"
