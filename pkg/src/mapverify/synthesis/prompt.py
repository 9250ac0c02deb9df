"""Prompt assembly from cleaned context artifacts."""

from __future__ import annotations

import re
from dataclasses import dataclass

from mapverify.predicate_lang import catalog_text, strip_comments

CONSTRAINT_SENTENCE = (
    "Do not modify the ANTLR grammar. Output must comply with the existing syntax "
    "and directly integrate with the verification pipeline."
)

HEADERS = (
    "## CONTEXT: RULE GRAMMAR",
    "## CONTEXT: CURRENT RULES",
    "## CONTEXT: PREDICATE CATALOG",
    "## CONTEXT: MAP SCHEMA",
    "## CONSTRAINTS",
    "## OUTPUT CONTRACT",
    "## DEFECT SPECIFICATION",
)

PDL_GRAMMAR = """\
def     := "pred" IDENT "(" (param ("," param)*)? ")" ":=" expr ";" ;
param   := IDENT ":" ("lanelet" | "number") ;
expr    := and ("||" and)* ;
and     := unary ("&&" unary)* ;
unary   := "!" unary | cmp ;
cmp     := primary (("<"|"<="|">"|">="|"=="|"!=") primary)? ;
primary := "(" expr ")" | NUMBER | IDENT | IDENT "(" (expr ("," expr)*)? ")" ;
"""

_XML_COMMENT = re.compile(r"<!--.*?-->", re.S)


def strip_xml_comments(text: str) -> str:
    cleaned = _XML_COMMENT.sub("", text)
    return "".join(line.rstrip() + "\n" for line in cleaned.splitlines() if line.strip())


@dataclass(frozen=True)
class ContextBundle:
    grammar_text: str
    ruleset_text: str
    pdl_text: str
    map_schema_text: str

    def __post_init__(self) -> None:
        for name in ("grammar_text", "ruleset_text", "pdl_text", "map_schema_text"):
            if not getattr(self, name).strip():
                raise ValueError(f"context artifact {name} is empty")

    @classmethod
    def from_sources(cls, grammar: str, ruleset: str, predicates: str, map_schema: str) -> ContextBundle:
        """Strip comments from raw artifacts; the builtin catalog is prepended to the predicates."""
        return cls(
            strip_comments(grammar),
            strip_comments(ruleset),
            strip_comments(catalog_text()) + strip_comments(predicates),
            strip_xml_comments(map_schema),
        )


@dataclass(frozen=True)
class RuleSpecRequest:
    description: str
    name_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("defect description must not be empty")


def build_prompt(bundle: ContextBundle, req: RuleSpecRequest) -> str:
    constraints = (
        "You extend a rule-based verifier for lanelet maps with elevation.\n"
        "Add exactly one new rule and the predicate definitions it needs; "
        "never change existing rules or predicates and never reuse their names.\n"
        f"{CONSTRAINT_SENTENCE}\n"
        "Rules must parse under the rule grammar above. Predicates are written in the "
        "predicate definition language below, may call only the listed builtins and existing "
        "predicates, and take thresholds as number parameters supplied by the rule.\n"
        + PDL_GRAMMAR
    )
    contract = (
        "Reply with exactly three fenced sections, each delimited by its own lines:\n"
        "---BEGIN RULE---\n<one rule declaration>\n---END RULE---\n"
        "---BEGIN PREDICATE---\n<predicate definitions>\n---END PREDICATE---\n"
        "---BEGIN EXPLANATION---\n<brief semantic explanation>\n---END EXPLANATION---\n"
    )
    spec = req.description.strip() + "\n"
    if req.name_hint:
        spec += f"Name the rule {req.name_hint}.\n"
    bodies = (bundle.grammar_text, bundle.ruleset_text, bundle.pdl_text, bundle.map_schema_text,
              constraints, contract, spec)
    return "\n".join(f"{h}\n{b.rstrip()}\n" for h, b in zip(HEADERS, bodies))
