"""Hand-built micro maps used to smoke-test candidate rules.

Each defect category has a clean map and a seeded-defect map of two or
three lanelets. They are fixed geometry, unrelated to the generated
evaluation corpus.
"""

from __future__ import annotations

import math

from mapverify.map_model import LaneletNetwork, link_lanelets
from mapverify.scenario_gen import ABRUPT_STEP, DEFECTS, EXCESSIVE_SLOPE, LOW_CLEARANCE, straight_lanelet

_KEYWORDS = {
    EXCESSIVE_SLOPE: ("slope", "grade", "steep", "incline"),
    ABRUPT_STEP: ("step", "discontinu", "jump", "continuity"),
    LOW_CLEARANCE: ("clearance", "bridge", "overpass", "overlap", "stacked"),
}


def _slope_map(ramp_grade: float) -> LaneletNetwork:
    return link_lanelets([
        straight_lanelet(1, (0.0, 0.0), 0.0, 30.0, 10.0, 0.02, (2,)),
        straight_lanelet(2, (30.0, 0.0), 0.0, 40.0, 10.6, ramp_grade),
    ])


def _step_map(step: float) -> LaneletNetwork:
    h = math.radians(30.0)
    end = (25.0 * math.cos(h), 25.0 * math.sin(h))
    return link_lanelets([
        straight_lanelet(1, (0.0, 0.0), h, 25.0, 3.0, 0.03, (2,)),
        straight_lanelet(2, end, h + 0.1, 25.0, 3.75 + step, -0.01, (3,)),
        straight_lanelet(3, (end[0] + 25.0 * math.cos(h + 0.1), end[1] + 25.0 * math.sin(h + 0.1)),
                         h + 0.1, 20.0, 3.5 + step, 0.0),
    ])


def _clearance_map(gap: float) -> LaneletNetwork:
    # Ground road along x, a flat deck crossing it at x=0, and an at-grade
    # crossing at x=30 that must not be mistaken for a stacked pair.
    return link_lanelets([
        straight_lanelet(1, (-50.0, 0.0), 0.0, 100.0, 0.0, 0.0),
        straight_lanelet(2, (0.0, -15.0), math.pi / 2, 30.0, gap, 0.0),
        straight_lanelet(3, (30.0, -15.0), math.pi / 2, 30.0, 0.3, 0.0),
    ])


def smoke_pair(category: str) -> tuple[LaneletNetwork, LaneletNetwork]:
    """(clean, defective) micro maps for a defect category."""
    if category == EXCESSIVE_SLOPE:
        return _slope_map(0.08), _slope_map(0.25)
    if category == ABRUPT_STEP:
        return _step_map(0.0), _step_map(0.4)
    if category == LOW_CLEARANCE:
        return _clearance_map(6.0), _clearance_map(3.0)
    raise ValueError(f"unknown defect category {category!r}")


def infer_category(description: str) -> str:
    """Defect category named by a free-text description; ValueError if ambiguous or absent."""
    text = description.lower()
    hits = [c for c in DEFECTS if any(k in text for k in _KEYWORDS[c])]
    if len(hits) != 1:
        raise ValueError(
            "cannot infer the defect category from the description; pass it explicitly "
            f"(one of {', '.join(DEFECTS)})"
        )
    return hits[0]
