"""Staged validation of candidate rule/predicate artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from mapverify.config import EvalConfig
from mapverify.engine import LinkError, evaluate, link
from mapverify.map_model import LaneletNetwork
from mapverify.predicate_lang import BUILTINS, ParseError, PredicateDef, parse_pdl, typecheck
from mapverify.rule_lang import RuleDecl, RuleError, free_functions, parse_ruleset
from mapverify.synthesis.contract import CandidateArtifact, ContractError, parse_contract

STAGES = ("contract-parse", "rule-syntax", "pdl-syntax", "typecheck", "reference-closure", "smoke-test")


@dataclass(frozen=True)
class RegistryState:
    rules: tuple[RuleDecl, ...] = ()
    predicates: tuple[PredicateDef, ...] = ()


@dataclass(frozen=True)
class StageResult:
    stage: str
    ok: bool
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationVerdict:
    stages: tuple[StageResult, ...]
    # Smoke-test evidence for reviewers: (map, rule, status, [(binding, witness)]).
    smoke_witness: tuple = field(default=())

    @property
    def accepted(self) -> bool:
        return len(self.stages) == len(STAGES) and all(s.ok for s in self.stages)

    @property
    def failed_stage(self) -> str | None:
        for s in self.stages:
            if not s.ok:
                return s.stage
        return None

    @property
    def diagnostics(self) -> tuple[str, ...]:
        return next((s.diagnostics for s in self.stages if not s.ok), ())

    def to_dict(self) -> dict:
        return {
            "overall": "accepted" if self.accepted else "rejected",
            "failed_stage": self.failed_stage,
            "stages": [{"stage": s.stage, "ok": s.ok, "diagnostics": list(s.diagnostics)} for s in self.stages],
            "smoke_witness": [
                {"map": m, "rule": r, "status": st,
                 "violations": [{"binding": [list(b) for b in binding], "witness": [[c, v] for c, v in wit]}
                                for binding, wit in vs]}
                for m, r, st, vs in self.smoke_witness
            ],
        }


def validate(candidate: CandidateArtifact, state: RegistryState,
             smoke: tuple[LaneletNetwork, LaneletNetwork], cfg: EvalConfig | None = None) -> ValidationVerdict:
    """Run the stages in order and stop at the first failure."""
    done = [StageResult("contract-parse", True)]

    def fail(stage: str, *msgs: str) -> ValidationVerdict:
        return ValidationVerdict(tuple(done) + (StageResult(stage, False, tuple(msgs)),))

    try:
        rules = parse_ruleset(candidate.rule_text)
    except (ParseError, RuleError) as exc:
        return fail("rule-syntax", str(exc))
    if not rules:
        return fail("rule-syntax", "no rule declaration found")
    done.append(StageResult("rule-syntax", True))

    try:
        preds = parse_pdl(candidate.pdl_text)
    except ParseError as exc:
        return fail("pdl-syntax", str(exc))
    if not preds:
        return fail("pdl-syntax", "no predicate definition found")
    done.append(StageResult("pdl-syntax", True))

    diags = [str(d) for d in typecheck(preds, BUILTINS, state.predicates)]
    existing_rules = {r.name for r in state.rules}
    diags += [f"rule name {r.name!r} is already registered" for r in rules if r.name in existing_rules]
    if diags:
        return fail("typecheck", *diags)
    done.append(StageResult("typecheck", True))

    available = set(BUILTINS) | {p.name for p in state.predicates} | {p.name for p in preds}
    missing = sorted({f"{name}/{arity}" for r in rules for name, arity in free_functions(r.body)
                      if name not in available})
    if missing:
        return fail("reference-closure", *(f"unresolved reference {m}" for m in missing))
    try:
        linked = link(rules, tuple(state.predicates) + tuple(preds))
    except LinkError as exc:
        return fail("reference-closure", *exc.diagnostics)
    done.append(StageResult("reference-closure", True))

    clean, defective = smoke
    cfg = cfg or EvalConfig()
    witness = []
    problems = []
    for label, net, want in (("clean", clean, "satisfied"), ("defect", defective, "violated")):
        report = evaluate(linked, net, cfg)
        for r in report.results:
            witness.append((label, r.name, r.status,
                            tuple((v.binding, v.witness) for v in r.violations)))
            if r.status != want:
                problems.append(f"rule {r.name} is {r.status} on the {label} smoke map (expected {want})")
    if problems:
        return ValidationVerdict(tuple(done) + (StageResult("smoke-test", False, tuple(problems)),),
                                 tuple(witness))
    done.append(StageResult("smoke-test", True))
    return ValidationVerdict(tuple(done), tuple(witness))


def validate_response(response: str, state: RegistryState,
                      smoke: tuple[LaneletNetwork, LaneletNetwork],
                      cfg: EvalConfig | None = None) -> tuple[CandidateArtifact | None, ValidationVerdict]:
    """Contract-parse a raw response, then validate the candidate."""
    try:
        candidate = parse_contract(response)
    except ContractError as exc:
        return None, ValidationVerdict((StageResult("contract-parse", False, (str(exc),)),))
    return candidate, validate(candidate, state, smoke, cfg)


def merged_state(state: RegistryState, rules: Sequence[RuleDecl], preds: Sequence[PredicateDef]) -> RegistryState:
    return RegistryState(tuple(state.rules) + tuple(rules), tuple(state.predicates) + tuple(preds))
