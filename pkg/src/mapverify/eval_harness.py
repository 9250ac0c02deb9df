"""Corpus-level scoring: per-category recall and false positives on clean maps."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from mapverify.config import EvalConfig
from mapverify.defaults import RULE_CLEARANCE, RULE_SLOPE, RULE_STEP
from mapverify.engine import LinkedRuleset, evaluate
from mapverify.map_io import read_map
from mapverify.scenario_gen import ABRUPT_STEP, DEFECTS, EXCESSIVE_SLOPE, LOW_CLEARANCE, read_manifest

METRICS_FORMAT = "mapverify.metrics-report/1"

DEFAULT_MAPPING: Mapping[str, str] = {
    EXCESSIVE_SLOPE: RULE_SLOPE,
    ABRUPT_STEP: RULE_STEP,
    LOW_CLEARANCE: RULE_CLEARANCE,
}


class HarnessError(RuntimeError):
    pass


@dataclass
class CategoryMetrics:
    rule: str
    maps_with_defect: int = 0
    detected: int = 0

    @property
    def recall(self) -> float | None:
        return self.detected / self.maps_with_defect if self.maps_with_defect else None


@dataclass
class MetricsReport:
    categories: dict[str, CategoryMetrics]
    clean_maps: int = 0
    false_positives: int = 0
    false_positive_maps: list[str] = field(default_factory=list)
    per_map: dict[str, list[str]] = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def passed(self) -> bool:
        """Full recall wherever a category occurs, and no false positives."""
        return self.false_positives == 0 and all(
            c.recall is None or c.recall == 1.0 for c in self.categories.values()
        )

    def to_dict(self) -> dict:
        # Runtime is left out so the document is a pure function of the inputs.
        return {
            "format": METRICS_FORMAT,
            "categories": {
                name: {"rule": c.rule, "maps_with_defect": c.maps_with_defect,
                       "detected": c.detected, "recall": c.recall if c.recall is not None else "n/a"}
                for name, c in self.categories.items()
            },
            "clean_maps": self.clean_maps,
            "false_positives": self.false_positives,
            "false_positive_maps": list(self.false_positive_maps),
            "violations_by_map": {k: list(v) for k, v in sorted(self.per_map.items())},
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        rows = [f"{'category':<16}{'rule':<24}{'maps':>6}{'detected':>10}{'recall':>8}"]
        for name, c in self.categories.items():
            recall = "n/a" if c.recall is None else f"{c.recall:.3f}"
            rows.append(f"{name:<16}{c.rule:<24}{c.maps_with_defect:>6}{c.detected:>10}{recall:>8}")
        rows.append(f"clean maps: {self.clean_maps}, false positives: {self.false_positives}")
        rows.append(f"runtime: {self.runtime_s:.2f} s")
        return "\n".join(rows)


def run(corpus_dir: str | Path, linked: LinkedRuleset, cfg: EvalConfig | None = None,
        mapping: Mapping[str, str] = DEFAULT_MAPPING) -> MetricsReport:
    """Evaluate every corpus map and score at map level against the manifest."""
    cfg = cfg or EvalConfig()
    missing = sorted(set(DEFECTS) - set(mapping))
    if missing:
        raise HarnessError(f"category mapping is missing {', '.join(missing)}")
    unknown = sorted(r for r in mapping.values() if r not in linked.rule_names)
    if unknown:
        raise HarnessError(f"mapped rules not in ruleset: {', '.join(unknown)}")
    start = time.perf_counter()
    corpus = Path(corpus_dir)
    manifest = read_manifest(corpus)
    report = MetricsReport({d: CategoryMetrics(mapping[d]) for d in DEFECTS})
    for entry in manifest["maps"]:
        path = corpus / entry["file"]
        try:
            net = read_map(path.read_bytes())
        except (OSError, ValueError) as exc:
            raise HarnessError(f"{path}: {exc}") from exc
        violated = evaluate(linked, net, cfg).violated_rules
        report.per_map[entry["id"]] = violated
        labels = entry["labels"]
        if not labels:
            report.clean_maps += 1
            if violated:
                report.false_positives += 1
                report.false_positive_maps.append(entry["id"])
        for label in labels:
            cat = report.categories[label]
            cat.maps_with_defect += 1
            if cat.rule in violated:
                cat.detected += 1
    report.runtime_s = time.perf_counter() - start
    return report
