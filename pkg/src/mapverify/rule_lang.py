"""Finite-domain first-order rules: AST, parser and canonical printer.

Grammar (``#`` starts a line comment)::

    ruleset   := rule* ;
    rule      := "rule" IDENT ":" formula ";" ;
    formula   := quant | iff ;
    quant     := ("forall"|"exists") binding "." formula ;
    binding   := IDENT "in" "L"
               | "(" IDENT "," IDENT ")" "in" ("pairs(L)"|"succ_pairs(L)") ;
    iff       := impl ("<=>" impl)* ;
    impl      := or ("=>" or)* ;            # right-associative
    or        := and ("||" and)* ;
    and       := unary ("&&" unary)* ;
    unary     := "!" unary | atom ;
    atom      := "(" formula ")" | cmp | pred ;
    cmp       := term ("<"|"<="|">"|">="|"=="|"!=") term ;
    pred      := IDENT "(" (term ("," term)*)? ")" ;
    term      := NUMBER | IDENT | IDENT "(" (term ("," term)*)? ")" ;
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Union

from mapverify._lexer import EOF, IDENT, NUMBER, ParseError, TokenStream, format_number

__all__ = [
    "ParseError", "RuleError", "UnboundVariableError", "ShadowingError", "DuplicateRuleError",
    "Domain", "Num", "Var", "Call", "Term", "Quant", "Not", "BinOp", "Pred", "Cmp", "Formula",
    "RuleDecl", "parse_ruleset", "parse_formula", "print_formula", "print_rule", "print_ruleset",
    "free_functions", "KEYWORDS", "CMP_OPS", "MAX_DEPTH",
]

MAX_DEPTH = 128
KEYWORDS = frozenset({"rule", "forall", "exists", "in"})
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
BIN_OPS = ("&&", "||", "=>", "<=>")


class RuleError(ValueError):
    """A syntactically valid rule breaks a scoping or naming invariant."""


class UnboundVariableError(RuleError):
    def __init__(self, variable: str, rule: str | None = None):
        self.variable = variable
        self.rule = rule
        where = f" in rule {rule!r}" if rule else ""
        super().__init__(f"unbound variable {variable!r}{where}")


class ShadowingError(RuleError):
    def __init__(self, variable: str, rule: str | None = None):
        self.variable = variable
        self.rule = rule
        where = f" in rule {rule!r}" if rule else ""
        super().__init__(f"variable {variable!r} is already bound{where}")


class DuplicateRuleError(RuleError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"duplicate rule name {name!r}")


class Domain(enum.Enum):
    ALL_LANELETS = "L"
    PAIRS = "pairs(L)"
    SUCC_PAIRS = "succ_pairs(L)"

    @property
    def arity(self) -> int:
        return 1 if self is Domain.ALL_LANELETS else 2


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Term, ...] = ()


Term = Union[Num, Var, Call]


@dataclass(frozen=True)
class Quant:
    kind: str  # "forall" | "exists"
    vars: tuple[str, ...]
    domain: Domain
    body: Formula


@dataclass(frozen=True)
class Not:
    body: Formula


@dataclass(frozen=True)
class BinOp:
    op: str  # one of BIN_OPS
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple[Term, ...] = ()


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Term
    rhs: Term


Formula = Union[Quant, Not, BinOp, Pred, Cmp]


@dataclass(frozen=True)
class RuleDecl:
    name: str
    body: Formula


# ---------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, text: str):
        self.ts = TokenStream(text, max_depth=MAX_DEPTH)

    def ruleset(self) -> list[RuleDecl]:
        out = []
        while not self.ts.at(EOF):
            out.append(self.rule())
        return out

    def rule(self) -> RuleDecl:
        self.ts.expect_keyword("rule")
        name = self.ident("rule name")
        self.ts.expect(":")
        body = self.formula()
        self.ts.expect(";")
        return RuleDecl(name, body)

    def ident(self, what: str) -> str:
        tok = self.ts.current
        if tok.kind != IDENT or tok.text in KEYWORDS:
            raise self.ts.error(f"expected {what}", {IDENT})
        self.ts.advance()
        return tok.text

    def formula(self) -> Formula:
        self.ts.enter()
        try:
            if self.ts.at_keyword("forall") or self.ts.at_keyword("exists"):
                return self.quant()
            return self.iff()
        finally:
            self.ts.leave()

    def quant(self) -> Quant:
        kind = self.ts.advance().text
        if self.ts.at("("):
            self.ts.advance()
            a = self.ident("variable")
            self.ts.expect(",")
            b = self.ident("variable")
            self.ts.expect(")")
            self.ts.expect_keyword("in")
            tok = self.ts.current
            if tok.kind == IDENT and tok.text in ("pairs", "succ_pairs"):
                self.ts.advance()
            else:
                raise self.ts.error("expected pair domain", {"pairs(L)", "succ_pairs(L)"})
            self.ts.expect("(")
            self.ts.expect_keyword("L")
            self.ts.expect(")")
            names: tuple[str, ...] = (a, b)
            domain = Domain.PAIRS if tok.text == "pairs" else Domain.SUCC_PAIRS
        else:
            names = (self.ident("variable"),)
            self.ts.expect_keyword("in")
            self.ts.expect_keyword("L")
            domain = Domain.ALL_LANELETS
        self.ts.expect(".")
        return Quant(kind, names, domain, self.formula())

    def iff(self) -> Formula:
        lhs = self.impl()
        while self.ts.at("<=>"):
            self.ts.advance()
            lhs = BinOp("<=>", lhs, self.impl())
        return lhs

    def impl(self) -> Formula:
        lhs = self.or_()
        if self.ts.at("=>"):
            self.ts.advance()
            self.ts.enter()
            try:
                return BinOp("=>", lhs, self.impl())
            finally:
                self.ts.leave()
        return lhs

    def or_(self) -> Formula:
        lhs = self.and_()
        while self.ts.at("||"):
            self.ts.advance()
            lhs = BinOp("||", lhs, self.and_())
        return lhs

    def and_(self) -> Formula:
        lhs = self.unary()
        while self.ts.at("&&"):
            self.ts.advance()
            lhs = BinOp("&&", lhs, self.unary())
        return lhs

    def unary(self) -> Formula:
        self.ts.enter()
        try:
            if self.ts.at("!"):
                self.ts.advance()
                return Not(self.unary())
            return self.atom()
        finally:
            self.ts.leave()

    def atom(self) -> Formula:
        if self.ts.at("("):
            self.ts.advance()
            inner = self.formula()
            self.ts.expect(")")
            return inner
        if not (self.ts.at(IDENT) or self.ts.at(NUMBER)):
            raise self.ts.error("expected formula", {"(", "!", IDENT, NUMBER, "forall", "exists"})
        lhs = self.term()
        if self.ts.current.kind in CMP_OPS:
            op = self.ts.advance().kind
            return Cmp(op, lhs, self.term())
        if isinstance(lhs, Call):
            return Pred(lhs.name, lhs.args)
        raise self.ts.error("expected comparison operator", set(CMP_OPS))

    def term(self) -> Term:
        tok = self.ts.current
        if tok.kind == NUMBER:
            self.ts.advance()
            return Num(float(tok.text))
        name = self.ident("term")
        if not self.ts.at("("):
            return Var(name)
        self.ts.enter()
        try:
            self.ts.advance()
            args: list[Term] = []
            if not self.ts.at(")"):
                args.append(self.term())
                while self.ts.at(","):
                    self.ts.advance()
                    args.append(self.term())
            self.ts.expect(")")
            return Call(name, tuple(args))
        finally:
            self.ts.leave()


def _check_scope(f: Formula, bound: frozenset[str], rule: str | None) -> None:
    if isinstance(f, Quant):
        if len(set(f.vars)) != len(f.vars):
            raise ShadowingError(f.vars[0], rule)
        for v in f.vars:
            if v in bound:
                raise ShadowingError(v, rule)
        _check_scope(f.body, bound | set(f.vars), rule)
    elif isinstance(f, Not):
        _check_scope(f.body, bound, rule)
    elif isinstance(f, BinOp):
        _check_scope(f.lhs, bound, rule)
        _check_scope(f.rhs, bound, rule)
    else:
        for t in f.args if isinstance(f, Pred) else (f.lhs, f.rhs):
            _check_term(t, bound, rule)


def _check_term(t: Term, bound: frozenset[str], rule: str | None) -> None:
    if isinstance(t, Var):
        if t.name not in bound:
            raise UnboundVariableError(t.name, rule)
    elif isinstance(t, Call):
        for a in t.args:
            _check_term(a, bound, rule)


def parse_ruleset(text: str) -> list[RuleDecl]:
    """Parse rule declarations and check binding, shadowing and name uniqueness.

    Raises ParseError (positioned), UnboundVariableError, ShadowingError or
    DuplicateRuleError.
    """
    seen: set[str] = set()
    rules = []
    for decl in _Parser(text).ruleset():
        if decl.name in seen:
            raise DuplicateRuleError(decl.name)
        seen.add(decl.name)
        _check_scope(decl.body, frozenset(), decl.name)
        rules.append(decl)
    return rules


def parse_formula(text: str) -> Formula:
    """Parse a single closed formula (no ``rule`` header, no trailing ``;``)."""
    p = _Parser(text)
    f = p.formula()
    if not p.ts.at(EOF):
        raise p.ts.error("unexpected trailing input", {EOF})
    _check_scope(f, frozenset(), None)
    return f


# ---------------------------------------------------------------- printing

_PREC = {"<=>": 1, "=>": 2, "||": 3, "&&": 4}


def _prec(f: Formula) -> int:
    if isinstance(f, Quant):
        return 0
    if isinstance(f, BinOp):
        return _PREC[f.op]
    if isinstance(f, Not):
        return 5
    return 6


def print_term(t: Term) -> str:
    if isinstance(t, Num):
        return format_number(t.value)
    if isinstance(t, Var):
        return t.name
    return f"{t.name}({', '.join(print_term(a) for a in t.args)})"


def _binding(q: Quant) -> str:
    if q.domain is Domain.ALL_LANELETS:
        return f"{q.vars[0]} in L"
    return f"({q.vars[0]}, {q.vars[1]}) in {q.domain.value}"


def _paren(text: str, wrap: bool) -> str:
    return f"({text})" if wrap else text


def print_formula(f: Formula) -> str:
    """Canonical text with the minimal parentheses the grammar needs."""
    if isinstance(f, Quant):
        return f"{f.kind} {_binding(f)} . {print_formula(f.body)}"
    if isinstance(f, Not):
        return "!" + _paren(print_formula(f.body), _prec(f.body) < 5)
    if isinstance(f, BinOp):
        p = _PREC[f.op]
        right_assoc = f.op == "=>"
        lp, rp = _prec(f.lhs), _prec(f.rhs)
        left = _paren(print_formula(f.lhs), lp < p or (lp == p and right_assoc))
        right = _paren(print_formula(f.rhs), rp < p or (rp == p and not right_assoc))
        return f"{left} {f.op} {right}"
    if isinstance(f, Pred):
        return f"{f.name}({', '.join(print_term(a) for a in f.args)})"
    return f"{print_term(f.lhs)} {f.op} {print_term(f.rhs)}"


def print_rule(rule: RuleDecl) -> str:
    return f"rule {rule.name}: {print_formula(rule.body)};"


def print_ruleset(rules: list[RuleDecl]) -> str:
    return "".join(print_rule(r) + "\n" for r in rules)


# ---------------------------------------------------------------- queries


def iter_subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    if isinstance(f, Quant) or isinstance(f, Not):
        yield from iter_subformulas(f.body)
    elif isinstance(f, BinOp):
        yield from iter_subformulas(f.lhs)
        yield from iter_subformulas(f.rhs)


def _iter_calls(t: Term) -> Iterator[Call]:
    if isinstance(t, Call):
        yield t
        for a in t.args:
            yield from _iter_calls(a)


def free_functions(f: Formula) -> set[tuple[str, int]]:
    """Every predicate and function application as a (name, arity) set."""
    out: set[tuple[str, int]] = set()
    for sub in iter_subformulas(f):
        if isinstance(sub, Pred):
            out.add((sub.name, len(sub.args)))
            terms: tuple[Term, ...] = sub.args
        elif isinstance(sub, Cmp):
            terms = (sub.lhs, sub.rhs)
        else:
            continue
        for t in terms:
            out.update((c.name, len(c.args)) for c in _iter_calls(t))
    return out
