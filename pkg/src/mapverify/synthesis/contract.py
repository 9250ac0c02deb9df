"""Extraction of the RULE / PREDICATE / EXPLANATION sections from a model response."""

from __future__ import annotations

import re
from dataclasses import dataclass

SECTIONS = ("RULE", "PREDICATE", "EXPLANATION")
_FENCE = re.compile(r"^---(BEGIN|END) ([A-Z]+)---[ \t]*$")


class ContractError(ValueError):
    def __init__(self, section: str, problem: str):
        self.section = section
        self.problem = problem
        super().__init__(f"{section} {problem}")


@dataclass(frozen=True)
class CandidateArtifact:
    rule_text: str
    pdl_text: str
    explanation: str
    raw_response: str = ""


def parse_contract(response: str) -> CandidateArtifact:
    """Pull exactly one block per section out of ``response``; prose outside blocks is ignored."""
    blocks: dict[str, list[str]] = {s: [] for s in SECTIONS}
    open_tag: str | None = None
    buf: list[str] = []
    for line in response.splitlines():
        m = _FENCE.match(line.strip())
        if m is None:
            if open_tag is not None:
                buf.append(line)
            continue
        kind, tag = m.groups()
        if tag not in blocks:
            continue
        if kind == "BEGIN":
            if open_tag is not None:
                raise ContractError(open_tag, "unterminated")
            open_tag, buf = tag, []
        else:
            if open_tag != tag:
                raise ContractError(tag, "closed without opening")
            blocks[tag].append("\n".join(buf).strip() + "\n")
            open_tag = None
    if open_tag is not None:
        raise ContractError(open_tag, "unterminated")
    for s in SECTIONS:
        if not blocks[s]:
            raise ContractError(s, "missing")
        if len(blocks[s]) > 1:
            raise ContractError(s, "duplicated")
        if not blocks[s][0].strip():
            raise ContractError(s, "empty")
    return CandidateArtifact(blocks["RULE"][0], blocks["PREDICATE"][0], blocks["EXPLANATION"][0], response)
