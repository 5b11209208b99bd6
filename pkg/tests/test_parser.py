from __future__ import annotations

import pytest
from hypothesis import given

from michelstat.mtypes import INT, MUTEZ, NAT, pair
from michelstat.parser import (
    DInt,
    DPrim,
    DSeq,
    DStr,
    MichelsonSyntaxError,
    Span,
    iter_instrs,
    parse,
    parse_data,
    parse_type,
    render_script,
)
from strategies import scripts

ACCUMULATOR = "parameter nat; storage nat; code { UNPAIR; ADD; NIL operation; PAIR }"


def ops(seq):
    return [instr.op for instr in seq]


def test_accumulator_sections():
    script = parse(ACCUMULATOR)
    assert script.parameter == NAT
    assert script.storage == NAT
    assert ops(script.code) == ["UNPAIR", "ADD", "NIL", "PAIR"]
    assert script.code[2].types == (parse_type("operation"),)


def test_sections_may_come_in_any_order():
    script = parse("code { CDR; NIL operation; PAIR }; storage int; parameter unit")
    assert script.storage == INT


def test_spans_point_at_instructions():
    script = parse("parameter nat;\nstorage nat;\ncode { UNPAIR;\n       ADD; NIL operation; PAIR }")
    assert script.code[1].span == Span(4, 8)
    assert script.code_span == Span(3, 1)


def test_comments_are_ignored():
    script = parse("# header\nparameter nat; # the argument\nstorage nat;\ncode { CDR; NIL operation; PAIR }")
    assert ops(script.code) == ["CDR", "NIL", "PAIR"]


def test_field_annotations_name_entrypoints():
    ty = parse_type("(or (unit %deposit) (pair %withdraw mutez address))")
    assert ty.args[0].annot == "deposit"
    assert ty.args[1].annot == "withdraw"
    # annotations do not take part in type equality
    assert ty.args[1] == parse_type("pair mutez address")


def test_counted_instructions():
    script = parse("parameter nat; storage nat; code { DUP 2; DIG 3; DUG 1; DROP 2; DIP 2 { DROP } }")
    assert [(i.op, i.n) for i in script.code] == [("DUP", 2), ("DIG", 3), ("DUG", 1), ("DROP", 2), ("DIP", 2)]
    assert ops(script.code[-1].body[0]) == ["DROP"]


def test_push_keeps_type_and_literal():
    script = parse("parameter nat; storage nat; code { PUSH (pair nat mutez) (Pair 1 2); DROP; PUSH int -3 }")
    push = script.code[0]
    assert push.types == (pair(NAT, MUTEZ),)
    assert push.data == DPrim("Pair", (DInt(1), DInt(2)))
    assert script.code[2].data == DInt(-3)


@pytest.mark.parametrize(
    ("macro", "expanded"),
    [
        ("FAIL", ["UNIT", "FAILWITH"]),
        ("ASSERT", ["IF"]),
        ("ASSERT_SOME", ["IF_NONE"]),
        ("CMPLT", ["COMPARE", "LT"]),
        ("ASSERT_CMPEQ", ["COMPARE", "EQ", "IF"]),
        ("IFCMPGE {} {}", ["COMPARE", "GE", "IF"]),
        ("IFEQ {} {}", ["EQ", "IF"]),
    ],
)
def test_macros_expand_to_core_instructions(macro, expanded):
    script = parse(f"parameter nat; storage nat; code {{ {macro} }}")
    assert ops(script.code) == expanded


def test_if_some_swaps_branches():
    script = parse("parameter nat; storage nat; code { IF_SOME { DROP } { UNIT; DROP } }")
    (instr,) = script.code
    assert instr.op == "IF_NONE"
    assert ops(instr.body[0]) == ["UNIT", "DROP"]
    assert ops(instr.body[1]) == ["DROP"]


def test_macro_instructions_share_the_macro_span():
    script = parse("parameter nat; storage nat; code { ASSERT_CMPLE }")
    assert {instr.span for instr in iter_instrs(script.code)} == {Span(1, 36)}


@pytest.mark.parametrize(
    ("source", "line", "col"),
    [
        ("parameter nat; storage nat; code { FOO }", 1, 36),
        ("parameter nat;\nstorage nat;\ncode { ADD", 3, 11),
        ("parameter nat; storage nat", 1, 1),
        ("parameter nat; storage nat; code { DROP -1 }", 1, 41),
        ("parameter nat; storage nat; code { PUSH nat ? }", 1, 45),
        ("parameter nat; parameter nat; storage nat; code {}", 1, 16),
    ],
)
def test_syntax_errors_report_position(source, line, col):
    with pytest.raises(MichelsonSyntaxError) as info:
        parse(source)
    assert (info.value.line, info.value.col) == (line, col)
    assert str(info.value).startswith(f"{line}:{col}:")


def test_parse_data_literals():
    assert parse_data('Pair 1 "tz1abc"') == DPrim("Pair", (DInt(1), DStr("tz1abc")))
    assert parse_data("{ Elt 1 True ; Elt 2 False }") == DSeq(
        (DPrim("Elt", (DInt(1), DPrim("True"))), DPrim("Elt", (DInt(2), DPrim("False"))))
    )
    assert parse_data('"a\\"b"') == DStr('a"b')


def test_parse_data_rejects_trailing_input():
    with pytest.raises(MichelsonSyntaxError):
        parse_data("1 2")


def test_rendered_script_parses_back_to_the_same_code(contracts_dir):
    wallet = parse((contracts_dir / "wallet_fixed.tz").read_text(encoding="utf-8"))
    again = parse(render_script(wallet))
    assert again.code == wallet.code
    assert again.parameter == wallet.parameter


@given(generated=scripts())
def test_rendering_is_stable_on_generated_scripts(generated):
    script = parse(generated.source)
    rendered = render_script(script)
    again = parse(rendered)
    assert again.code == script.code
    assert (again.parameter, again.storage) == (script.parameter, script.storage)
    assert render_script(again) == rendered
