"""Link rules against predicates and evaluate them over a lanelet network."""

from __future__ import annotations

import difflib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from mapverify import __version__
from mapverify.config import EvalConfig
from mapverify.map_model import LaneletNetwork
from mapverify.predicate_lang import (
    BOOL, BUILTINS, CMP_FUNCS, LANELET, NUMBER_T, Builtin, GeometryContext, PredicateDef,
    eval_predicate, typecheck, TypecheckError, parse_pdl,
)
from mapverify.rule_lang import (
    BinOp, Domain, Formula, Not, Num, Pred, Quant, RuleDecl, Term, Var, parse_ruleset,
)

__all__ = [
    "EvalConfig", "LinkError", "LinkedRuleset", "Violation", "RuleResult", "VerificationReport",
    "link", "evaluate", "load_linked", "domain_bindings", "REPORT_FORMAT",
]

REPORT_FORMAT = "mapverify.verification-report/1"
SATISFIED = "satisfied"
VIOLATED = "violated"


class LinkError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


@dataclass(frozen=True)
class LinkedRuleset:
    rules: tuple[RuleDecl, ...]
    predicates: Mapping[str, PredicateDef]
    # (name, arity) -> "builtin" | "predicate"
    resolution: Mapping[tuple[str, int], str] = field(default_factory=dict)

    @property
    def rule_names(self) -> list[str]:
        return [r.name for r in self.rules]


def _suggest(name: str, candidates: Iterable[str]) -> str:
    close = difflib.get_close_matches(name, sorted(candidates), n=1, cutoff=0.6)
    return f" (did you mean {close[0]!r}?)" if close else ""


class _Linker:
    def __init__(self, predicates: Mapping[str, PredicateDef], catalog: Mapping[str, Builtin]):
        self.preds = predicates
        self.catalog = catalog
        self.errors: list[str] = []
        self.resolution: dict[tuple[str, int], str] = {}
        self.rule = ""

    def err(self, msg: str) -> None:
        self.errors.append(f"rule {self.rule}: {msg}")

    def signature(self, name: str) -> tuple[tuple[str, ...], str, str] | None:
        if name in self.catalog:
            b = self.catalog[name]
            return b.params, b.result, "builtin"
        if name in self.preds:
            return self.preds[name].param_types, BOOL, "predicate"
        return None

    def apply(self, name: str, args: Sequence[Term], want: str) -> None:
        arg_types = [self.term(a) for a in args]
        sig = self.signature(name)
        if sig is None:
            self.err(f"unresolved name {name!r}{_suggest(name, list(self.catalog) + list(self.preds))}")
            return
        params, result, kind = sig
        if result != want:
            role = "predicate" if want == BOOL else "function term"
            self.err(f"{name!r} returns {result} and cannot be used as a {role}")
        if len(args) != len(params):
            self.err(f"arity mismatch: {name} expects {len(params)} arguments, got {len(args)}")
            return
        for i, (got, exp) in enumerate(zip(arg_types, params), 1):
            if got is not None and got != exp:
                self.err(f"argument {i} of {name} has type {got}, expected {exp}")
        self.resolution[(name, len(args))] = kind

    def term(self, t: Term) -> str | None:
        if isinstance(t, Num):
            return NUMBER_T
        if isinstance(t, Var):
            return LANELET
        self.apply(t.name, t.args, NUMBER_T)
        sig = self.signature(t.name)
        return sig[1] if sig else None

    def formula(self, f: Formula) -> None:
        if isinstance(f, Quant) or isinstance(f, Not):
            self.formula(f.body)
        elif isinstance(f, BinOp):
            self.formula(f.lhs)
            self.formula(f.rhs)
        elif isinstance(f, Pred):
            self.apply(f.name, f.args, BOOL)
        else:
            lt, rt = self.term(f.lhs), self.term(f.rhs)
            if lt is None or rt is None:
                return
            if not (lt == rt == NUMBER_T or (lt == rt == LANELET and f.op in ("==", "!="))):
                self.err(f"cannot compare {lt} {f.op} {rt}")


def link(
    rules: Iterable[RuleDecl],
    predicates: Iterable[PredicateDef],
    catalog: Mapping[str, Builtin] = BUILTINS,
) -> LinkedRuleset:
    """Resolve every predicate and function application; raises LinkError listing all problems."""
    rules = tuple(rules)
    table = {p.name: p for p in predicates}
    linker = _Linker(table, catalog)
    for r in rules:
        linker.rule = r.name
        linker.formula(r.body)
    if linker.errors:
        raise LinkError(linker.errors)
    return LinkedRuleset(rules, table, dict(linker.resolution))


def load_linked(rules_text: str, predicates_text: str) -> LinkedRuleset:
    """Parse, type-check and link a ruleset/predicate file pair."""
    rules = parse_ruleset(rules_text)
    preds = parse_pdl(predicates_text)
    diags = typecheck(preds)
    if diags:
        raise TypecheckError(diags)
    return link(rules, preds)


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class Violation:
    rule: str
    binding: tuple[tuple[str, int], ...]
    witness: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class RuleResult:
    name: str
    status: str
    violations: tuple[Violation, ...]
    domain_sizes: tuple[int, ...]


def domain_bindings(domain: Domain, net: LaneletNetwork) -> list[tuple[int, ...]]:
    """All bindings of a domain in enumeration order (ascending ids)."""
    ids = net.ids
    if domain is Domain.ALL_LANELETS:
        return [(i,) for i in ids]
    if domain is Domain.PAIRS:
        return list(itertools.combinations(ids, 2))
    return [(a, b) for a in ids for b in sorted(net[a].successors)]


class _Evaluator:
    def __init__(self, linked: LinkedRuleset, net: LaneletNetwork, cfg: EvalConfig):
        self.linked = linked
        self.net = net
        self.ctx = GeometryContext(net, cfg)
        self.domains = {d: domain_bindings(d, net) for d in Domain}

    def term(self, t: Term, env: dict[str, int], trace: list):
        if isinstance(t, Num):
            return t.value
        if isinstance(t, Var):
            return env[t.name]
        args = tuple(self.term(a, env, trace) for a in t.args)
        return self.ctx.call(t.name, args, trace)

    def formula(self, f: Formula, env: dict[str, int], trace: list) -> bool:
        if isinstance(f, Quant):
            results = (self.formula(f.body, {**env, **dict(zip(f.vars, b))}, trace)
                       for b in self.domains[f.domain])
            return all(results) if f.kind == "forall" else any(results)
        if isinstance(f, Not):
            return not self.formula(f.body, env, trace)
        if isinstance(f, BinOp):
            lhs = self.formula(f.lhs, env, trace)
            if f.op == "&&":
                return lhs and self.formula(f.rhs, env, trace)
            if f.op == "||":
                return lhs or self.formula(f.rhs, env, trace)
            if f.op == "=>":
                return (not lhs) or self.formula(f.rhs, env, trace)
            return lhs == self.formula(f.rhs, env, trace)
        if isinstance(f, Pred):
            args = tuple(self.term(a, env, trace) for a in f.args)
            if f.name in BUILTINS:
                return bool(self.ctx.call(f.name, args, trace))
            return eval_predicate(self.linked.predicates[f.name], args, self.ctx, self.linked.predicates, trace)
        return CMP_FUNCS[f.op](self.term(f.lhs, env, trace), self.term(f.rhs, env, trace))

    def rule(self, rule: RuleDecl) -> RuleResult:
        prefix: list[Quant] = []
        body = rule.body
        while isinstance(body, Quant) and body.kind == "forall":
            prefix.append(body)
            body = body.body
        if not prefix:
            trace: list = []
            ok = self.formula(rule.body, {}, trace)
            sizes = (len(self.domains[rule.body.domain]),) if isinstance(rule.body, Quant) else ()
            violations = () if ok else (Violation(rule.name, (), _dedupe(trace)),)
            return RuleResult(rule.name, SATISFIED if ok else VIOLATED, violations, sizes)
        violations = []
        for combo in itertools.product(*(self.domains[q.domain] for q in prefix)):
            binding = tuple(pair for q, b in zip(prefix, combo) for pair in zip(q.vars, b))
            trace = []
            if not self.formula(body, dict(binding), trace):
                violations.append(Violation(rule.name, binding, _dedupe(trace)))
        violations.sort(key=lambda v: [i for _, i in v.binding])
        return RuleResult(rule.name, VIOLATED if violations else SATISFIED, tuple(violations),
                          tuple(len(self.domains[q.domain]) for q in prefix))


def _dedupe(trace: list) -> tuple[tuple[str, float], ...]:
    seen: dict[str, float] = {}
    for text, value in trace:
        seen.setdefault(text, value)
    return tuple(seen.items())


def evaluate(linked: LinkedRuleset, net: LaneletNetwork, cfg: EvalConfig | None = None) -> VerificationReport:
    """Evaluate every rule; universal prefixes are enumerated exhaustively.

    All falsifying bindings of a rule's leading ``forall`` block are
    reported, each with the numeric builtin values computed while
    evaluating that binding.
    """
    cfg = cfg or EvalConfig()
    ev = _Evaluator(linked, net, cfg)
    results = sorted((ev.rule(r) for r in linked.rules), key=lambda r: r.name)
    return VerificationReport(tuple(results), cfg)


# ---------------------------------------------------------------- reports


def _json_number(value: float):
    if math.isfinite(value):
        return value
    return "inf" if value > 0 else ("-inf" if value < 0 else "nan")


@dataclass(frozen=True)
class VerificationReport:
    results: tuple[RuleResult, ...]
    config: EvalConfig = field(default_factory=EvalConfig)

    def __getitem__(self, rule_name: str) -> RuleResult:
        for r in self.results:
            if r.name == rule_name:
                return r
        raise KeyError(rule_name)

    @property
    def violated_rules(self) -> list[str]:
        return [r.name for r in self.results if r.status == VIOLATED]

    @property
    def ok(self) -> bool:
        return not self.violated_rules

    def to_dict(self, metadata: Mapping[str, object] | None = None) -> dict:
        return {
            "format": REPORT_FORMAT,
            "run": {"tool": f"mapverify {__version__}", **(metadata or {})},
            "config": self.config.to_dict(),
            "summary": {
                "rules": len(self.results),
                "satisfied": len(self.results) - len(self.violated_rules),
                "violated": len(self.violated_rules),
            },
            "rules": [
                {
                    "name": r.name,
                    "status": r.status,
                    "domain_sizes": list(r.domain_sizes),
                    "violations": [
                        {
                            "binding": [[var, lid] for var, lid in v.binding],
                            "witness": [{"call": c, "value": _json_number(x)} for c, x in v.witness],
                        }
                        for v in r.violations
                    ],
                }
                for r in self.results
            ],
        }

    def to_json(self, metadata: Mapping[str, object] | None = None) -> str:
        return json.dumps(self.to_dict(metadata), indent=2) + "\n"

    def summary_lines(self) -> list[str]:
        lines = []
        for r in self.results:
            lines.append(f"{r.name}: {r.status}" + (f" ({len(r.violations)} violations)" if r.violations else ""))
            for v in r.violations:
                binding = ", ".join(f"{var}={lid}" for var, lid in v.binding)
                witness = ", ".join(f"{c}={x:.6g}" for c, x in v.witness)
                lines.append(f"  [{binding}] {witness}")
        return lines
