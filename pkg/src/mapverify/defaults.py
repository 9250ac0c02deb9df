"""Shipped ruleset, predicates and prompt context artifacts."""

from __future__ import annotations

from importlib import resources

from mapverify._lexer import format_number
from mapverify.config import EvalConfig

RULE_SLOPE = "slope_limit"
RULE_STEP = "elevation_continuity"
RULE_CLEARANCE = "vertical_clearance"

_RULES_TEMPLATE = """\
# Elevation rules. Thresholds come from the evaluation config defaults.
rule {slope}: forall l in L . is_grade_within_limit(l, {max_grade});
rule {step}: forall (a, b) in succ_pairs(L) . elevation_step_ok(a, b, {max_step});
rule {clearance}: forall (a, b) in pairs(L) . clearance_ok(a, b, {stack_eps}, {min_clearance});
"""


def data_text(name: str) -> str:
    return resources.files("mapverify").joinpath("data", name).read_text(encoding="utf-8")


def default_rules_text(cfg: EvalConfig | None = None) -> str:
    cfg = cfg or EvalConfig()
    return _RULES_TEMPLATE.format(
        slope=RULE_SLOPE, step=RULE_STEP, clearance=RULE_CLEARANCE,
        max_grade=format_number(cfg.max_grade), max_step=format_number(cfg.max_step),
        stack_eps=format_number(cfg.stack_eps), min_clearance=format_number(cfg.min_clearance),
    )


def default_predicates_text() -> str:
    return data_text("default.pdl")


def grammar_text() -> str:
    return data_text("grammar.ebnf")


def map_schema_text() -> str:
    return data_text("map_schema.xsd")
