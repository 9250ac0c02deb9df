from __future__ import annotations

import random

import pytest

from mapverify._lexer import ParseError, format_number, tokenize
from mapverify.defaults import default_rules_text, grammar_text
from mapverify.rule_lang import (
    MAX_DEPTH, BinOp, Call, Cmp, Domain, DuplicateRuleError, Not, Num, Pred, Quant, RuleDecl, ShadowingError,
    UnboundVariableError, Var, free_functions, parse_formula, parse_ruleset, print_formula, print_rule,
    print_ruleset,
)
from oracles import formula_depth, random_formula

SLOPE = "rule slope_limit: forall l in L . is_grade_within_limit(l, 0.15);"


def test_slope_rule_ast():
    (rule,) = parse_ruleset(SLOPE)
    assert rule == RuleDecl("slope_limit", Quant(
        "forall", ("l",), Domain.ALL_LANELETS, Pred("is_grade_within_limit", (Var("l"), Num(0.15)))))


def test_missing_dot_is_positioned_syntax_error():
    with pytest.raises(ParseError) as exc:
        parse_ruleset("rule bad: forall l in L is_ok(l);")
    err = exc.value
    assert (err.line, err.column) == (1, 25)
    assert "." in err.expected and "is_ok" in str(err)


def test_unbound_variable():
    with pytest.raises(UnboundVariableError) as exc:
        parse_ruleset("rule free: is_ok(l);")
    assert exc.value.variable == "l"


def test_shadowing_and_duplicates_rejected():
    with pytest.raises(ShadowingError):
        parse_ruleset("rule s: forall l in L . exists l in L . p(l);")
    with pytest.raises(ShadowingError):
        parse_ruleset("rule s: forall (a, a) in pairs(L) . p(a);")
    with pytest.raises(DuplicateRuleError):
        parse_ruleset("rule a: p(); rule a: q();")


def test_pair_domains_and_comments():
    text = """
    # clearance
    rule c: forall (a, b) in pairs(L) . clearance_ok(a, b, 1.0, 4.5);  # trailing
    rule s: forall (a, b) in succ_pairs(L) . elev_step(a, b) <= 0.05;
    """
    c, s = parse_ruleset(text)
    assert c.body.domain is Domain.PAIRS and c.body.vars == ("a", "b")
    assert s.body.domain is Domain.SUCC_PAIRS
    assert s.body.body == Cmp("<=", Call("elev_step", (Var("a"), Var("b"))), Num(0.05))


def test_precedence_and_associativity():
    f = parse_formula("a() || b() && !c() => d() => e() <=> f()")
    assert f == BinOp("<=>", BinOp("=>", BinOp("||", Pred("a"), BinOp("&&", Pred("b"), Not(Pred("c")))),
                                    BinOp("=>", Pred("d"), Pred("e"))), Pred("f"))


def test_quantifier_inside_connective_needs_parentheses():
    with pytest.raises(ParseError):
        parse_formula("p() && forall x in L . q(x)")
    assert parse_formula("p() && (forall x in L . q(x))").rhs.kind == "forall"


def test_printer_examples():
    assert print_formula(Pred("p", (Var("l"),))) == "p(l)"
    assert print_formula(BinOp("||", Not(Pred("A")), Pred("B"))) == "!A() || B()"
    assert print_formula(Not(BinOp("||", Pred("A"), Pred("B")))) == "!(A() || B())"
    assert print_formula(BinOp("=>", BinOp("=>", Pred("a"), Pred("b")), Pred("c"))) == "(a() => b()) => c()"
    assert print_formula(BinOp("=>", Pred("a"), BinOp("=>", Pred("b"), Pred("c")))) == "a() => b() => c()"


def test_numbers_print_without_exponent():
    assert format_number(1e-7) == "0.0000001"
    assert format_number(2.5e20) == "250000000000000000000.0"
    assert format_number(-3.0) == "-3.0"
    assert float(format_number(0.1 + 0.2)) == 0.1 + 0.2


def test_printed_ruleset_reparses():
    rules = parse_ruleset(default_rules_text())
    assert parse_ruleset(print_ruleset(rules)) == rules
    assert print_rule(rules[0]) == SLOPE


def test_round_trip_on_random_asts():
    rng = random.Random(2024)
    for _ in range(200):
        f = random_formula(rng, rng.randint(1, 6))
        assert formula_depth(f) <= 6
        assert parse_formula(print_formula(f)) == f


def test_free_functions():
    (rule,) = parse_ruleset(SLOPE)
    assert free_functions(rule.body) == {("is_grade_within_limit", 2)}
    f = parse_formula("forall (a, b) in pairs(L) . f(g(a), 1) < 2 && p(a) || q(b, h())")
    assert free_functions(f) == {("f", 2), ("g", 1), ("p", 1), ("q", 2), ("h", 0)}


def test_depth_limit_gives_clean_error():
    deep = "!" * (MAX_DEPTH + 5) + "p()"
    with pytest.raises(ParseError, match="nest"):
        parse_formula(deep)
    deep_parens = "(" * 500 + "p()" + ")" * 500
    with pytest.raises(ParseError):
        parse_formula(deep_parens)


@pytest.mark.parametrize("text", ["rule x: p(;", "rule : p();", "rule x: forall l in M . p(l);",
                                  "rule x: 3;", "rule x: p() q();", "rule x: p() $ q();"])
def test_syntax_errors_are_positioned(text):
    with pytest.raises(ParseError) as exc:
        parse_ruleset(text)
    assert exc.value.line == 1 and exc.value.column >= 1


def test_lexer_numbers_and_operators():
    kinds = [t.kind for t in tokenize("a<=>-1.5=>b")][:-1]
    assert kinds == ["IDENT", "<=>", "NUMBER", "=>", "IDENT"]


def test_shipped_grammar_lists_every_production():
    g = grammar_text()
    for prod in ("ruleset", "rule", "formula", "quant", "binding", "iff", "impl", "or", "and", "unary",
                 "atom", "cmp", "pred", "term"):
        assert f"\n{prod}" in "\n" + g
