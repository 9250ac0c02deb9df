from __future__ import annotations

import math
import random

import pytest

from mapverify._lexer import ParseError
from mapverify.config import EvalConfig
from mapverify.defaults import default_predicates_text
from mapverify.map_model import link_lanelets
from mapverify.predicate_lang import (
    BUILTINS, And, Call, Cmp, EvalError, GeometryContext, Not, Num, Or, Param, PredicateDef, TypecheckError,
    catalog_text, check, eval_predicate, parse_pdl, print_pdl, strip_comments, typecheck,
)
from mapverify.scenario_gen import straight_lanelet
from oracles import random_network

SLOPE = "pred is_grade_within_limit(l: lanelet, g: number) := grade_max(l) <= g;"


def grade_net(*grades):
    lanelets = [straight_lanelet(i + 1, (0.0, 30.0 * i), 0.0, 20.0, 0.0, g) for i, g in enumerate(grades)]
    return link_lanelets(lanelets)


def test_parse_slope_predicate():
    (d,) = parse_pdl(SLOPE)
    assert d == PredicateDef("is_grade_within_limit", (("l", "lanelet"), ("g", "number")),
                             Cmp("<=", Call("grade_max", (Param("l"),)), Param("g")))


def test_missing_operand_is_syntax_error():
    with pytest.raises(ParseError) as exc:
        parse_pdl("pred p(a: lanelet) := grade_max(a) <= ;")
    assert exc.value.line == 1


def test_second_definition_may_call_first():
    defs = parse_pdl(SLOPE + "\npred steep(l: lanelet) := !is_grade_within_limit(l, 0.15);")
    assert [d.name for d in defs] == ["is_grade_within_limit", "steep"]
    assert typecheck(defs) == []


def test_precedence():
    (d,) = parse_pdl("pred p(a: lanelet) := !overlaps_xy(a, a) || length(a) > 1 && length(a) < 2;")
    assert isinstance(d.body, Or) and isinstance(d.body.lhs, Not) and isinstance(d.body.rhs, And)


def test_printer_round_trip():
    defs = parse_pdl(default_predicates_text())
    assert parse_pdl(print_pdl(defs)) == defs


def test_defaults_typecheck():
    assert typecheck(parse_pdl(default_predicates_text())) == []
    assert typecheck(parse_pdl(SLOPE)) == []


def test_arity_error_names_builtin():
    diags = typecheck(parse_pdl("pred q(a: lanelet) := grade_max(a, a) <= 1;"))
    assert len(diags) == 1
    assert diags[0].predicate == "q" and "grade_max" in diags[0].reason and "arity" in diags[0].reason


def test_redefinition_after_registration_collides():
    registered = parse_pdl(SLOPE)
    diags = typecheck(parse_pdl(SLOPE), BUILTINS, registered)
    assert any("collides" in d.reason for d in diags)


@pytest.mark.parametrize("src, fragment", [
    ("pred length(l: lanelet) := true_ish(l);", "builtin"),
    ("pred p(a: lanelet, a: number) := a > 1;", "duplicate parameter"),
    ("pred p(a: lanelet) := grade_max(a);", "expected bool"),
    ("pred p(a: number) := grade_max(a) < 1;", "argument"),
    ("pred p(a: lanelet) := a < 1;", "compare"),
    ("pred p(a: lanelet) := p(a);", "p"),
    ("pred p(a: lanelet) := q(a);\npred q(a: lanelet) := length(a) > 1;", "q"),
    ("pred p(a: lanelet) := unknown(a) > 1;", "unknown"),
    ("pred p(a: lanelet) := b > 1;", "b"),
])
def test_typecheck_rejections(src, fragment):
    diags = typecheck(parse_pdl(src))
    assert diags
    assert any(fragment in str(d) for d in diags)


def test_typecheck_reports_every_problem():
    diags = typecheck(parse_pdl("pred p(a: lanelet) := grade_max(a, a) <= 1 && nope(a);"))
    assert len(diags) >= 2
    with pytest.raises(TypecheckError):
        check(parse_pdl("pred p(a: lanelet) := grade_max(a, a) <= 1;"))


def test_lanelet_equality_is_allowed():
    assert typecheck(parse_pdl("pred same(a: lanelet, b: lanelet) := a == b || a != b;")) == []


def test_eval_slope_predicate():
    (d,) = parse_pdl(SLOPE)
    ctx = GeometryContext(grade_net(0.0, 0.2))
    assert eval_predicate(d, (1, 0.15), ctx) is True
    assert eval_predicate(d, (2, 0.15), ctx) is False


def test_clearance_ok_vacuous_without_overlap():
    defs = {d.name: d for d in parse_pdl(default_predicates_text())}
    ctx = GeometryContext(grade_net(0.0, 0.0))
    assert ctx.min_clearance(1, 2) == math.inf
    assert eval_predicate(defs["clearance_ok"], (1, 2, 1.0, 4.5), ctx) is True


def test_unknown_lanelet_is_eval_error():
    (d,) = parse_pdl(SLOPE)
    with pytest.raises(EvalError):
        eval_predicate(d, (99, 0.15), GeometryContext(grade_net(0.1)))
    with pytest.raises(EvalError):
        eval_predicate(d, (1,), GeometryContext(grade_net(0.1)))


def test_trace_records_numeric_calls():
    (d,) = parse_pdl(SLOPE)
    trace: list = []
    eval_predicate(d, (1, 0.15), GeometryContext(grade_net(0.3)), trace=trace)
    assert trace == [("grade_max(1)", pytest.approx(0.3))]


def test_catalog_text_lists_every_builtin():
    text = catalog_text()
    for name, b in BUILTINS.items():
        assert f"builtin {name}(" in text
    assert set(BUILTINS) == {"grade_max", "elev_step", "min_clearance", "length", "start_z", "end_z",
                             "overlaps_xy", "is_successor"}


def test_strip_comments():
    assert strip_comments("# a\n\npred p(a: lanelet) := length(a) > 1; # tail\n") == \
        "pred p(a: lanelet) := length(a) > 1;\n"


def _random_pdl_expr(rng, depth):
    if depth <= 0 or rng.random() < 0.3:
        name = rng.choice(["grade_max", "length", "start_z", "end_z", "elev_step", "min_clearance"])
        args = [Param("a")] if BUILTINS[name].params == ("lanelet",) else [Param("a"), Param("b")]
        return Cmp(rng.choice(["<", "<=", ">", ">=", "==", "!="]), Call(name, tuple(args)),
                   rng.choice([Param("x"), Num(rng.uniform(-5, 5))]))
    r = rng.random()
    if r < 0.2:
        return Not(_random_pdl_expr(rng, depth - 1))
    if r < 0.3:
        return Call(rng.choice(["overlaps_xy", "is_successor"]), (Param("a"), Param("b")))
    op = And if r < 0.65 else Or
    return op(_random_pdl_expr(rng, depth - 1), _random_pdl_expr(rng, depth - 1))


def test_accepted_definitions_never_fail_at_runtime():
    rng = random.Random(11)
    for _ in range(150):
        d = PredicateDef("p", (("a", "lanelet"), ("b", "lanelet"), ("x", "number")), _random_pdl_expr(rng, 4))
        assert typecheck([d]) == []
        net = random_network(rng, 4)
        ctx = GeometryContext(net, EvalConfig())
        for a in net.ids:
            for b in net.ids:
                r1 = eval_predicate(d, (a, b, rng.uniform(-5, 5)), ctx)
                assert isinstance(r1, bool)
