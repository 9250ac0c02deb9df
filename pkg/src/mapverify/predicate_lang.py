"""Predicate definition language (PDL): parser, type checker, interpreter.

A definition composes the fixed builtin geometric functions and thresholds
them; there are no loops and a predicate may only call builtins and
predicates registered before it, so evaluation always terminates::

    file      := def* ;
    def       := "pred" IDENT "(" (param ("," param)*)? ")" ":=" expr ";" ;
    param     := IDENT ":" ("lanelet" | "number") ;
    expr      := and ("||" and)* ;
    and       := unary ("&&" unary)* ;
    unary     := "!" unary | cmp ;
    cmp       := primary (("<"|"<="|">"|">="|"=="|"!=") primary)? ;
    primary   := "(" expr ")" | NUMBER | IDENT | IDENT "(" (expr ("," expr)*)? ")" ;
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from mapverify import map_model
from mapverify._lexer import EOF, IDENT, NUMBER, ParseError, TokenStream, format_number
from mapverify.config import EvalConfig
from mapverify.map_model import LaneletNetwork, OverlapResult

LANELET = "lanelet"
NUMBER_T = "number"
BOOL = "bool"
PARAM_TYPES = (LANELET, NUMBER_T)
PDL_KEYWORDS = frozenset({"pred", LANELET, NUMBER_T})

CMP_FUNCS: dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt, "<=": operator.le, ">": operator.gt,
    ">=": operator.ge, "==": operator.eq, "!=": operator.ne,
}


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[PdlExpr, ...] = ()


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: PdlExpr
    rhs: PdlExpr


@dataclass(frozen=True)
class And:
    lhs: PdlExpr
    rhs: PdlExpr


@dataclass(frozen=True)
class Or:
    lhs: PdlExpr
    rhs: PdlExpr


@dataclass(frozen=True)
class Not:
    body: PdlExpr


PdlExpr = Union[Num, Param, Call, Cmp, And, Or, Not]


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[tuple[str, str], ...]
    body: PdlExpr

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)


# ---------------------------------------------------------------- builtins


@dataclass(frozen=True)
class Builtin:
    name: str
    params: tuple[str, ...]
    result: str
    doc: str


BUILTINS: dict[str, Builtin] = {b.name: b for b in (
    Builtin("grade_max", (LANELET,), NUMBER_T,
            "largest absolute centerline grade, rise over horizontal run (ratio)"),
    Builtin("elev_step", (LANELET, LANELET), NUMBER_T,
            "absolute elevation jump from the end of the first centerline to the start of the second (m)"),
    Builtin("min_clearance", (LANELET, LANELET), NUMBER_T,
            "smallest vertical gap where the centerlines overlap in plan view (m); +inf if they do not overlap"),
    Builtin("length", (LANELET,), NUMBER_T, "horizontal centerline length (m)"),
    Builtin("start_z", (LANELET,), NUMBER_T, "centerline elevation at the start (m)"),
    Builtin("end_z", (LANELET,), NUMBER_T, "centerline elevation at the end (m)"),
    Builtin("overlaps_xy", (LANELET, LANELET), BOOL,
            "true if some pair of centerline samples lies within the overlap radius in plan view"),
    Builtin("is_successor", (LANELET, LANELET), BOOL, "true if the second lanelet is a successor of the first"),
)}


def catalog_text(catalog: Mapping[str, Builtin] = BUILTINS) -> str:
    """Signature listing of the builtins, used as a prompt artifact."""
    lines = []
    for b in catalog.values():
        params = ", ".join(f"{chr(ord('a') + i)}: {t}" for i, t in enumerate(b.params))
        lines.append(f"builtin {b.name}({params}) -> {b.result};  -- {b.doc}")
    return "\n".join(lines) + "\n"


class EvalError(RuntimeError):
    """Evaluation hit a corrupt binding (unknown lanelet, ill-typed argument)."""


Trace = list  # list[tuple[str, float]] of numeric builtin calls, in evaluation order


class GeometryContext:
    """Builtin implementations over one network, with per-lanelet caching."""

    def __init__(self, network: LaneletNetwork, cfg: EvalConfig | None = None):
        self.network = network
        self.cfg = cfg or EvalConfig()
        self._centerlines: dict[int, np.ndarray] = {}
        self._overlaps: dict[tuple[int, int], OverlapResult] = {}

    def _center(self, lanelet_id: int) -> np.ndarray:
        arr = self._centerlines.get(lanelet_id)
        if arr is None:
            arr = map_model.centerline_array(self.lanelet(lanelet_id), self.cfg.samples_per_centerline)
            self._centerlines[lanelet_id] = arr
        return arr

    def lanelet(self, lanelet_id: object):
        if isinstance(lanelet_id, bool) or not isinstance(lanelet_id, int) or lanelet_id not in self.network:
            raise EvalError(f"unknown lanelet id {lanelet_id!r}")
        return self.network[lanelet_id]

    def overlap(self, a: int, b: int) -> OverlapResult:
        if a == b:
            self.lanelet(a)
            return OverlapResult(True, 0.0)
        key = (a, b) if a < b else (b, a)
        res = self._overlaps.get(key)
        if res is None:
            res = map_model._overlap(self._center(key[0]), self._center(key[1]), self.cfg.overlap_radius)
            self._overlaps[key] = res
        return res

    def grade_max(self, l: int) -> float:
        return map_model._max_abs_grade(self._center(l))

    def elev_step(self, a: int, b: int) -> float:
        return abs(float(self._center(a)[-1, 2]) - float(self._center(b)[0, 2]))

    def min_clearance(self, a: int, b: int) -> float:
        return self.overlap(a, b).min_gap

    def length(self, l: int) -> float:
        c = self._center(l)
        return float(np.sum(np.hypot(np.diff(c[:, 0]), np.diff(c[:, 1]))))

    def start_z(self, l: int) -> float:
        return float(self._center(l)[0, 2])

    def end_z(self, l: int) -> float:
        return float(self._center(l)[-1, 2])

    def overlaps_xy(self, a: int, b: int) -> bool:
        return self.overlap(a, b).overlaps

    def is_successor(self, a: int, b: int) -> bool:
        return b in self.lanelet(a).successors

    def call(self, name: str, args: tuple, trace: Trace | None = None):
        spec = BUILTINS.get(name)
        if spec is None:
            raise EvalError(f"unknown builtin {name!r}")
        if len(args) != len(spec.params):
            raise EvalError(f"{name} expects {len(spec.params)} arguments, got {len(args)}")
        for arg, ty in zip(args, spec.params):
            _check_value(arg, ty, name)
            if ty == LANELET:
                self.lanelet(arg)
        value = getattr(self, name)(*args)
        if trace is not None and spec.result == NUMBER_T:
            trace.append((render_call(name, args), value))
        return value


def render_call(name: str, args: Iterable) -> str:
    parts = [format_number(a) if isinstance(a, float) else str(a) for a in args]
    return f"{name}({', '.join(parts)})"


def _check_value(value: object, ty: str, where: str) -> None:
    if ty == LANELET:
        if isinstance(value, bool) or not isinstance(value, int):
            raise EvalError(f"{where}: expected lanelet id, got {value!r}")
    elif ty == NUMBER_T:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EvalError(f"{where}: expected number, got {value!r}")


# ---------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)

    def defs(self) -> list[PredicateDef]:
        out = []
        while not self.ts.at(EOF):
            out.append(self.definition())
        return out

    def ident(self, what: str) -> str:
        tok = self.ts.current
        if tok.kind != IDENT or tok.text in PDL_KEYWORDS:
            raise self.ts.error(f"expected {what}", {IDENT})
        return self.ts.advance().text

    def definition(self) -> PredicateDef:
        self.ts.expect_keyword("pred")
        name = self.ident("predicate name")
        self.ts.expect("(")
        params: list[tuple[str, str]] = []
        if not self.ts.at(")"):
            params.append(self.param())
            while self.ts.at(","):
                self.ts.advance()
                params.append(self.param())
        self.ts.expect(")")
        self.ts.expect(":=")
        body = self.expr()
        self.ts.expect(";")
        return PredicateDef(name, tuple(params), body)

    def param(self) -> tuple[str, str]:
        name = self.ident("parameter name")
        self.ts.expect(":")
        tok = self.ts.current
        if tok.kind != IDENT or tok.text not in PARAM_TYPES:
            raise self.ts.error("expected parameter type", set(PARAM_TYPES))
        self.ts.advance()
        return name, tok.text

    def expr(self) -> PdlExpr:
        self.ts.enter()
        try:
            lhs = self.and_()
            while self.ts.at("||"):
                self.ts.advance()
                lhs = Or(lhs, self.and_())
            return lhs
        finally:
            self.ts.leave()

    def and_(self) -> PdlExpr:
        lhs = self.unary()
        while self.ts.at("&&"):
            self.ts.advance()
            lhs = And(lhs, self.unary())
        return lhs

    def unary(self) -> PdlExpr:
        self.ts.enter()
        try:
            if self.ts.at("!"):
                self.ts.advance()
                return Not(self.unary())
            return self.cmp()
        finally:
            self.ts.leave()

    def cmp(self) -> PdlExpr:
        lhs = self.primary()
        if self.ts.current.kind in CMP_FUNCS:
            op = self.ts.advance().kind
            return Cmp(op, lhs, self.primary())
        return lhs

    def primary(self) -> PdlExpr:
        tok = self.ts.current
        if tok.kind == "(":
            self.ts.advance()
            inner = self.expr()
            self.ts.expect(")")
            return inner
        if tok.kind == NUMBER:
            self.ts.advance()
            return Num(float(tok.text))
        if tok.kind != IDENT or tok.text in PDL_KEYWORDS:
            raise self.ts.error("expected expression", {"(", NUMBER, IDENT})
        self.ts.advance()
        if not self.ts.at("("):
            return Param(tok.text)
        self.ts.advance()
        args: list[PdlExpr] = []
        if not self.ts.at(")"):
            args.append(self.expr())
            while self.ts.at(","):
                self.ts.advance()
                args.append(self.expr())
        self.ts.expect(")")
        return Call(tok.text, tuple(args))


def parse_pdl(text: str) -> list[PredicateDef]:
    """Parse predicate definitions in file order; raises a positioned ParseError."""
    return _Parser(text).defs()


# ---------------------------------------------------------------- printing

_PREC = {Or: 1, And: 2, Not: 3, Cmp: 4}


def _pprec(e: PdlExpr) -> int:
    return _PREC.get(type(e), 5)


def print_expr(e: PdlExpr) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(print_expr(a) for a in e.args)})"
    if isinstance(e, Not):
        inner = print_expr(e.body)
        return "!" + (f"({inner})" if _pprec(e.body) < 3 else inner)
    if isinstance(e, Cmp):
        parts = [print_expr(x) for x in (e.lhs, e.rhs)]
        parts = [f"({p})" if _pprec(x) < 5 else p for p, x in zip(parts, (e.lhs, e.rhs))]
        return f"{parts[0]} {e.op} {parts[1]}"
    p = _pprec(e)
    op = "||" if isinstance(e, Or) else "&&"
    left = print_expr(e.lhs)
    right = print_expr(e.rhs)
    if _pprec(e.lhs) < p:
        left = f"({left})"
    if _pprec(e.rhs) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


def print_def(d: PredicateDef) -> str:
    params = ", ".join(f"{n}: {t}" for n, t in d.params)
    return f"pred {d.name}({params}) := {print_expr(d.body)};"


def print_pdl(defs: Iterable[PredicateDef]) -> str:
    return "".join(print_def(d) + "\n" for d in defs)


# ---------------------------------------------------------------- type checking


@dataclass(frozen=True)
class Diagnostic:
    predicate: str
    reason: str

    def __str__(self) -> str:
        return f"{self.predicate}: {self.reason}"


class TypecheckError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


def typecheck(
    defs: Iterable[PredicateDef],
    catalog: Mapping[str, Builtin] = BUILTINS,
    registered: Iterable[PredicateDef] = (),
) -> list[Diagnostic]:
    """Check a batch of definitions against the catalog and already-registered predicates.

    Returns every problem found (empty list means the batch is accepted).
    Definitions may call builtins, registered predicates and definitions
    earlier in the same batch; anything else, including self-reference, is
    reported.
    """
    known: dict[str, tuple[str, ...]] = {p.name: p.param_types for p in registered}
    batch = list(defs)
    later = {d.name for d in batch}
    diags: list[Diagnostic] = []
    for d in batch:
        later.discard(d.name)
        errs: list[str] = []
        if d.name in catalog:
            errs.append(f"name collides with builtin {d.name!r}")
        elif d.name in known:
            errs.append(f"name collides with registered predicate {d.name!r}")
        names = [n for n, _ in d.params]
        for n in sorted({n for n in names if names.count(n) > 1}):
            errs.append(f"duplicate parameter {n!r}")
        for n, ty in d.params:
            if ty not in PARAM_TYPES:
                errs.append(f"parameter {n!r} has unknown type {ty!r}")
        scope = dict(d.params)
        body_type = _infer(d.body, scope, catalog, known, d.name, later, errs)
        if body_type is not None and body_type != BOOL:
            errs.append(f"body has type {body_type}, expected bool")
        diags.extend(Diagnostic(d.name, e) for e in errs)
        if d.name not in catalog and d.name not in known:
            known[d.name] = d.param_types
    return diags


def check(defs: Iterable[PredicateDef], catalog: Mapping[str, Builtin] = BUILTINS,
          registered: Iterable[PredicateDef] = ()) -> None:
    diags = typecheck(defs, catalog, registered)
    if diags:
        raise TypecheckError(diags)


def _infer(e: PdlExpr, scope: dict[str, str], catalog: Mapping[str, Builtin],
           known: dict[str, tuple[str, ...]], self_name: str, later: set[str],
           errs: list[str]) -> str | None:
    """Type of ``e`` or None after an error (suppresses cascades)."""
    if isinstance(e, Num):
        return NUMBER_T
    if isinstance(e, Param):
        if e.name in scope:
            return scope[e.name]
        if e.name in catalog or e.name in known:
            errs.append(f"{e.name!r} used without call")
        else:
            errs.append(f"unknown name {e.name!r}")
        return None
    if isinstance(e, Call):
        arg_types = [_infer(a, scope, catalog, known, self_name, later, errs) for a in e.args]
        if e.name in catalog:
            expected, result = catalog[e.name].params, catalog[e.name].result
        elif e.name in known:
            expected, result = known[e.name], BOOL
        else:
            if e.name == self_name:
                errs.append(f"recursive call to {e.name!r}")
            elif e.name in later:
                errs.append(f"call to {e.name!r} before its definition")
            else:
                errs.append(f"unknown function {e.name!r}")
            return None
        if len(arg_types) != len(expected):
            errs.append(f"arity mismatch: {e.name} expects {len(expected)} arguments, got {len(arg_types)}")
            return result
        for i, (got, want) in enumerate(zip(arg_types, expected), 1):
            if got is not None and got != want:
                errs.append(f"argument {i} of {e.name} has type {got}, expected {want}")
        return result
    if isinstance(e, Cmp):
        lt = _infer(e.lhs, scope, catalog, known, self_name, later, errs)
        rt = _infer(e.rhs, scope, catalog, known, self_name, later, errs)
        if lt is None or rt is None:
            return BOOL
        if lt == rt == NUMBER_T or (lt == rt == LANELET and e.op in ("==", "!=")):
            return BOOL
        errs.append(f"cannot compare {lt} {e.op} {rt}")
        return BOOL
    if isinstance(e, Not):
        bt = _infer(e.body, scope, catalog, known, self_name, later, errs)
        if bt is not None and bt != BOOL:
            errs.append(f"'!' applied to {bt}")
        return BOOL
    for side in (e.lhs, e.rhs):
        st = _infer(side, scope, catalog, known, self_name, later, errs)
        if st is not None and st != BOOL:
            errs.append(f"{'||' if isinstance(e, Or) else '&&'} operand has type {st}")
    return BOOL


# ---------------------------------------------------------------- evaluation


def eval_predicate(
    defn: PredicateDef,
    args: Iterable,
    ctx: GeometryContext,
    predicates: Mapping[str, PredicateDef] | None = None,
    trace: Trace | None = None,
) -> bool:
    """Evaluate a type-checked definition on concrete arguments.

    Lanelet arguments are ids (int), numbers are floats. ``predicates``
    resolves calls to other registered definitions; numeric builtin results
    are appended to ``trace`` when given.
    """
    args = tuple(args)
    if len(args) != len(defn.params):
        raise EvalError(f"{defn.name} expects {len(defn.params)} arguments, got {len(args)}")
    env = {}
    for (name, ty), value in zip(defn.params, args):
        _check_value(value, ty, defn.name)
        if ty == LANELET:
            ctx.lanelet(value)
        env[name] = value
    result = _eval(defn.body, env, ctx, predicates or {}, trace)
    if not isinstance(result, bool):
        raise EvalError(f"{defn.name} produced non-boolean {result!r}")
    return result


def _eval(e: PdlExpr, env: dict, ctx: GeometryContext, preds: Mapping[str, PredicateDef],
          trace: Trace | None):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Param):
        return env[e.name]
    if isinstance(e, Call):
        args = tuple(_eval(a, env, ctx, preds, trace) for a in e.args)
        if e.name in BUILTINS:
            return ctx.call(e.name, args, trace)
        callee = preds.get(e.name)
        if callee is None:
            raise EvalError(f"unresolved predicate {e.name!r}")
        return eval_predicate(callee, args, ctx, preds, trace)
    if isinstance(e, Cmp):
        return CMP_FUNCS[e.op](_eval(e.lhs, env, ctx, preds, trace), _eval(e.rhs, env, ctx, preds, trace))
    if isinstance(e, Not):
        return not _eval(e.body, env, ctx, preds, trace)
    if isinstance(e, And):
        return bool(_eval(e.lhs, env, ctx, preds, trace)) and bool(_eval(e.rhs, env, ctx, preds, trace))
    return bool(_eval(e.lhs, env, ctx, preds, trace)) or bool(_eval(e.rhs, env, ctx, preds, trace))


def strip_comments(text: str) -> str:
    """Drop ``#`` comments and blank lines (for prompt context)."""
    lines = (line.split("#", 1)[0].rstrip() for line in text.splitlines())
    return "".join(line + "\n" for line in lines if line.strip())


__all__ = [
    "ParseError", "PredicateDef", "PdlExpr", "Num", "Param", "Call", "Cmp", "And", "Or", "Not",
    "Builtin", "BUILTINS", "GeometryContext", "EvalError", "Diagnostic", "TypecheckError",
    "parse_pdl", "print_pdl", "print_def", "typecheck", "check", "eval_predicate",
    "catalog_text", "strip_comments", "render_call", "LANELET", "NUMBER_T", "BOOL",
]
