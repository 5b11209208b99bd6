"""Concrete Michelson values and conversion from parsed literals."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Any

from .mtypes import MType
from .parser import Data, DInt, DPrim, DSeq, DStr, render_data
from .settings import MUTEZ_MAX

ADDRESS_PREFIXES = ("tz1", "tz2", "tz3", "tz4", "KT1")
UNIT_VALUE: tuple[()] = ()


class DataError(ValueError):
    """A literal does not denote a value of the expected type."""


@dataclass(frozen=True)
class Some:
    value: Any


@dataclass(frozen=True)
class Left:
    value: Any


@dataclass(frozen=True)
class Right:
    value: Any


@dataclass(frozen=True)
class ContractRef:
    address: str
    entrypoint: str = "default"


@dataclass(frozen=True)
class Transfer:
    """A TRANSFER_TOKENS operation emitted by ``sender``."""

    target: str
    entrypoint: str
    amount: int
    arg: Any
    arg_type: MType
    sender: str


def is_implicit(address: str) -> bool:
    return not address.startswith("KT1")


def from_data(node: Data, ty: MType) -> Any:
    """Interpret a literal under ``ty``; raises :class:`DataError` on mismatch."""

    prim = ty.prim
    if prim in {"int", "nat", "mutez"}:
        if not isinstance(node, DInt):
            raise DataError(f"expected an integer literal for {ty}, found {render_data(node)}")
        if prim != "int" and node.value < 0:
            raise DataError(f"negative literal {node.value} for {ty}")
        if prim == "mutez" and node.value > MUTEZ_MAX:
            raise DataError(f"mutez literal {node.value} exceeds 2^63-1")
        return node.value
    if prim == "timestamp":
        if isinstance(node, DInt):
            return node.value
        if isinstance(node, DStr):
            try:
                return int(datetime.fromisoformat(node.value).timestamp())
            except ValueError as exc:
                raise DataError(f"malformed timestamp {node.value!r}") from exc
        raise DataError(f"expected a timestamp, found {render_data(node)}")
    if prim == "string":
        if not isinstance(node, DStr):
            raise DataError(f"expected a string literal, found {render_data(node)}")
        return node.value
    if prim == "address":
        if not isinstance(node, DStr) or not node.value.startswith(ADDRESS_PREFIXES):
            raise DataError(f"expected an address literal (tz1.../KT1...), found {render_data(node)}")
        return node.value
    if prim == "bool":
        if isinstance(node, DPrim) and node.name in {"True", "False"} and not node.args:
            return node.name == "True"
        raise DataError(f"expected True or False, found {render_data(node)}")
    if prim == "unit":
        if node == DPrim("Unit"):
            return UNIT_VALUE
        raise DataError(f"expected Unit, found {render_data(node)}")
    if prim == "pair":
        if isinstance(node, DPrim) and node.name == "Pair" and len(node.args) == 2:
            return (from_data(node.args[0], ty.args[0]), from_data(node.args[1], ty.args[1]))
        raise DataError(f"expected Pair, found {render_data(node)}")
    if prim == "option":
        if node == DPrim("None"):
            return None
        if isinstance(node, DPrim) and node.name == "Some" and len(node.args) == 1:
            return Some(from_data(node.args[0], ty.args[0]))
        raise DataError(f"expected Some or None, found {render_data(node)}")
    if prim == "or":
        if isinstance(node, DPrim) and node.name == "Left" and len(node.args) == 1:
            return Left(from_data(node.args[0], ty.args[0]))
        if isinstance(node, DPrim) and node.name == "Right" and len(node.args) == 1:
            return Right(from_data(node.args[0], ty.args[1]))
        raise DataError(f"expected Left or Right, found {render_data(node)}")
    if prim in {"list", "set", "map"}:
        if not isinstance(node, DSeq):
            raise DataError(f"expected a sequence for {ty}, found {render_data(node)}")
        if prim == "list":
            return tuple(from_data(item, ty.args[0]) for item in node.items)
        if prim == "set":
            elements = [from_data(item, ty.args[0]) for item in node.items]
            if len(set(elements)) != len(elements):
                raise DataError("duplicate set element")
            return frozenset(elements)
        result: dict[Any, Any] = {}
        for item in node.items:
            if not (isinstance(item, DPrim) and item.name == "Elt" and len(item.args) == 2):
                raise DataError(f"expected Elt in map literal, found {render_data(item)}")
            key = from_data(item.args[0], ty.args[0])
            if key in result:
                raise DataError(f"duplicate map key {render_data(item.args[0])}")
            result[key] = from_data(item.args[1], ty.args[1])
        return result
    raise DataError(f"values of type {ty} cannot be written as literals")


def format_value(value: Any, ty: MType) -> str:
    """Render a concrete value back into Michelson literal syntax."""

    prim = ty.prim
    if prim in {"int", "nat", "mutez", "timestamp"}:
        return str(value)
    if prim in {"string", "address"}:
        return render_data(DStr(value))
    if prim == "bool":
        return "True" if value else "False"
    if prim == "unit":
        return "Unit"
    if prim == "pair":
        return f"(Pair {format_value(value[0], ty.args[0])} {format_value(value[1], ty.args[1])})"
    if prim == "option":
        return "None" if value is None else f"(Some {format_value(value.value, ty.args[0])})"
    if prim == "or":
        if isinstance(value, Left):
            return f"(Left {format_value(value.value, ty.args[0])})"
        return f"(Right {format_value(value.value, ty.args[1])})"
    if prim == "list":
        return _format_seq(format_value(item, ty.args[0]) for item in value)
    if prim == "set":
        return _format_seq(format_value(item, ty.args[0]) for item in sorted(value))
    if prim == "map":
        return _format_seq(
            f"Elt {format_value(key, ty.args[0])} {format_value(value[key], ty.args[1])}"
            for key in sorted(value)
        )
    if prim == "contract":
        return f'"{value.address}%{value.entrypoint}"'
    if prim == "operation":
        return format_operation(value)
    raise DataError(f"cannot render values of type {ty}")


def format_operation(op: Transfer) -> str:
    return f"transfer {op.amount} to {op.target}%{op.entrypoint} ({format_value(op.arg, op.arg_type)})"


def _format_seq(items: Any) -> str:
    rendered = list(items)
    return "{ " + " ; ".join(rendered) + " }" if rendered else "{}"


def compare_values(a: Any, b: Any) -> int:
    """Total order on comparable values: lexicographic on pairs."""

    if isinstance(a, tuple) and a:
        first = compare_values(a[0], b[0])
        return first if first else compare_values(a[1], b[1])
    return (a > b) - (a < b)
