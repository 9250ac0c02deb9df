"""Seeded synthetic lanelet networks with injected elevation defects.

Clean geometry keeps every measure well inside the default thresholds and
injected defects are drawn from ranges at least 25% beyond them, so whether
a defect is detected does not depend on sampling resolution.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from mapverify.map_io import write_map
from mapverify.map_model import Lanelet, LaneletNetwork, Polyline3, link_lanelets

EXCESSIVE_SLOPE = "ExcessiveSlope"
ABRUPT_STEP = "AbruptStep"
LOW_CLEARANCE = "LowClearance"
DEFECTS = (EXCESSIVE_SLOPE, ABRUPT_STEP, LOW_CLEARANCE)

SLOPE_RANGE = (0.20, 0.35)
STEP_RANGE = (0.20, 1.00)
CLEARANCE_RANGE = (2.0, 3.5)

LANE_WIDTH = 3.5
VERTEX_SPACING = 5.0
CLEAN_GRADE = 0.06
CLEAN_RAMP_GRADE = (0.04, 0.10)
CLEAN_BRIDGE_GAP = (6.0, 7.5)
DECK_HALF_LENGTH = 12.0
MANIFEST_FORMAT = "mapverify.corpus-manifest/1"


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Chain:
    segments: int = 3
    name = "chain"

    def __post_init__(self) -> None:
        if self.segments < 2:
            raise SpecError("a chain needs at least 2 segments")


@dataclass(frozen=True)
class Ramp:
    name = "ramp"


@dataclass(frozen=True)
class BridgeOverRoad:
    name = "bridge_over_road"


Template = Union[Chain, Ramp, BridgeOverRoad]

_APPLICABLE = {
    EXCESSIVE_SLOPE: (Chain, Ramp),
    ABRUPT_STEP: (Chain, Ramp),
    LOW_CLEARANCE: (BridgeOverRoad,),
}


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    template: Template
    defects: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "defects", frozenset(self.defects))
        if len(self.defects) > 2:
            raise SpecError("at most two defects per scenario")
        for d in self.defects:
            if d not in _APPLICABLE:
                raise SpecError(f"unknown defect {d!r}")
            if not isinstance(self.template, _APPLICABLE[d]):
                raise SpecError(f"{d} cannot be injected into a {self.template.name} scenario")


@dataclass(frozen=True)
class GroundTruth:
    map_id: str
    template: str
    labels: tuple[str, ...]
    magnitudes: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    segments: int | None = None

    def to_dict(self) -> dict:
        d = {"id": self.map_id, "template": self.template, "labels": list(self.labels),
             "magnitudes": dict(sorted(self.magnitudes.items())), "seed": self.seed}
        if self.segments is not None:
            d["segments"] = self.segments
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GroundTruth:
        return cls(d["id"], d["template"], tuple(d["labels"]), dict(d.get("magnitudes", {})),
                   int(d.get("seed", 0)), d.get("segments"))


# ---------------------------------------------------------------- geometry helpers


def straight_lanelet(lid: int, start: tuple[float, float], heading: float, length: float,
                     z0: float, grade: float, successors: tuple[int, ...] = (),
                     width: float = LANE_WIDTH) -> Lanelet:
    """Straight lanelet with a linear elevation profile along its centerline."""
    n = max(2, int(math.ceil(length / VERTEX_SPACING)) + 1)
    s = np.linspace(0.0, length, n)
    cx = start[0] + s * math.cos(heading)
    cy = start[1] + s * math.sin(heading)
    z = z0 + grade * s
    nx, ny = -math.sin(heading) * width / 2, math.cos(heading) * width / 2
    left = Polyline3.from_array(np.column_stack((cx + nx, cy + ny, z)))
    right = Polyline3.from_array(np.column_stack((cx - nx, cy - ny, z)))
    return Lanelet(lid, left, right, successors)


def _signed(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi)) * (1.0 if rng.random() < 0.5 else -1.0)


def _road(rng, headings, lengths, grades, z0, steps) -> list[Lanelet]:
    """Chain of straight lanelets; ``steps[i]`` is the z jump entering lanelet i."""
    lanelets = []
    x, y, z = 0.0, 0.0, z0
    k = len(lengths)
    for i in range(k):
        z += steps[i]
        succ = (i + 2,) if i + 1 < k else ()
        lanelets.append(straight_lanelet(i + 1, (x, y), headings[i], lengths[i], z, grades[i], succ))
        x += lengths[i] * math.cos(headings[i])
        y += lengths[i] * math.sin(headings[i])
        z += grades[i] * lengths[i]
    return lanelets


def generate(spec: ScenarioSpec, map_id: str | None = None) -> tuple[LaneletNetwork, GroundTruth]:
    """Build the network for ``spec``; the same spec always yields the same network."""
    rng = np.random.default_rng(spec.seed)
    map_id = map_id or f"scenario_{spec.seed}"
    magnitudes: dict[str, float] = {}
    t = spec.template

    if isinstance(t, BridgeOverRoad):
        lanelets = _bridge(rng, spec, magnitudes)
        segments = None
    else:
        if isinstance(t, Chain):
            k = t.segments
            lengths = [float(rng.uniform(20.0, 40.0)) for _ in range(k)]
            grades = [float(rng.uniform(-CLEAN_GRADE, CLEAN_GRADE)) for _ in range(k)]
            segments = k
        else:
            k = 3
            lengths = [float(rng.uniform(20.0, 30.0)), float(rng.uniform(40.0, 60.0)), float(rng.uniform(20.0, 30.0))]
            grades = [float(rng.uniform(-0.02, 0.02)), _signed(rng, *CLEAN_RAMP_GRADE), float(rng.uniform(-0.02, 0.02))]
            segments = None
        h = float(rng.uniform(0.0, 2 * math.pi))
        headings = [h]
        for _ in range(k - 1):
            h += float(rng.uniform(-0.25, 0.25))
            headings.append(h)
        steps = [0.0] * k
        if EXCESSIVE_SLOPE in spec.defects:
            j = 1 if isinstance(t, Ramp) else int(rng.integers(0, k))
            grades[j] = _signed(rng, *SLOPE_RANGE)
            magnitudes["grade"] = abs(grades[j])
        if ABRUPT_STEP in spec.defects:
            j = int(rng.integers(1, k))
            steps[j] = _signed(rng, *STEP_RANGE)
            magnitudes["step"] = abs(steps[j])
        lanelets = _road(rng, headings, lengths, grades, float(rng.uniform(0.0, 50.0)), steps)

    labels = tuple(d for d in DEFECTS if d in spec.defects)
    truth = GroundTruth(map_id, t.name, labels, magnitudes, spec.seed, segments)
    return link_lanelets(lanelets), truth


def _bridge(rng: np.random.Generator, spec: ScenarioSpec, magnitudes: dict[str, float]) -> list[Lanelet]:
    base = float(rng.uniform(0.0, 50.0))
    h = float(rng.uniform(0.0, 2 * math.pi))
    if LOW_CLEARANCE in spec.defects:
        gap = float(rng.uniform(*CLEARANCE_RANGE))
        magnitudes["clearance"] = gap
    else:
        gap = float(rng.uniform(*CLEAN_BRIDGE_GAP))
    ground_len = float(rng.uniform(70.0, 90.0))
    ground = straight_lanelet(1, (-ground_len / 2 * math.cos(h), -ground_len / 2 * math.sin(h)),
                              h, ground_len, base, 0.0)
    # The bridge crosses the ground road at right angles over its midpoint.
    hb = h + math.pi / 2
    ux, uy = math.cos(hb), math.sin(hb)
    ramp_grade = float(rng.uniform(0.05, 0.08))
    ramp_len = gap / ramp_grade
    d = DECK_HALF_LENGTH
    start = (-(d + ramp_len) * ux, -(d + ramp_len) * uy)
    up = straight_lanelet(2, start, hb, ramp_len, base, ramp_grade, (3,))
    deck = straight_lanelet(3, (-d * ux, -d * uy), hb, 2 * d, base + gap, 0.0, (4,))
    down = straight_lanelet(4, (d * ux, d * uy), hb, ramp_len, base + gap, -ramp_grade)
    return [ground, up, deck, down]


# ---------------------------------------------------------------- corpus


def _combinations() -> list[tuple[Template, frozenset[str]]]:
    """Applicable (template, defect subset) pairs; chain length is drawn separately."""
    return [
        (Chain(), frozenset({EXCESSIVE_SLOPE})),
        (Chain(), frozenset({ABRUPT_STEP})),
        (Chain(), frozenset({EXCESSIVE_SLOPE, ABRUPT_STEP})),
        (Ramp(), frozenset({EXCESSIVE_SLOPE})),
        (Ramp(), frozenset({ABRUPT_STEP})),
        (Ramp(), frozenset({EXCESSIVE_SLOPE, ABRUPT_STEP})),
        (BridgeOverRoad(), frozenset({LOW_CLEARANCE})),
    ]


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def plan_corpus(seed: int, n_clean: int, n_defective: int) -> list[tuple[str, ScenarioSpec]]:
    """Deterministic list of (map id, spec) for a corpus."""
    if n_clean < 0 or n_defective < 0:
        raise SpecError("counts must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    combos = _combinations()
    floor = min(5, n_defective // 3)
    for _ in range(10_000):
        picks = [combos[i] for i in rng.integers(0, len(combos), size=n_defective)]
        counts = {d: sum(d in defects for _, defects in picks) for d in DEFECTS}
        if all(c >= floor for c in counts.values()):
            break
    else:  # pragma: no cover - practically unreachable
        raise SpecError("could not satisfy the per-category floor")
    clean_templates = [Chain(), Ramp(), BridgeOverRoad()]
    plans: list[tuple[Template, frozenset[str]]] = [
        (clean_templates[int(i)], frozenset()) for i in rng.integers(0, 3, size=n_clean)
    ] + picks
    order = rng.permutation(len(plans)) if plans else []
    seeds = _child_seeds(seed, len(plans))
    out = []
    for idx, p in enumerate(order):
        template, defects = plans[int(p)]
        if isinstance(template, Chain):
            template = Chain(int(rng.integers(3, 6)))
        out.append((f"map_{idx:03d}", ScenarioSpec(seeds[idx], template, defects)))
    return out


def build_corpus(out_dir: str | Path, seed: int, n_clean: int, n_defective: int) -> Path:
    """Write ``maps/<id>.xml`` plus ``manifest`` under ``out_dir`` atomically.

    The corpus is assembled in a sibling temporary directory and renamed
    into place, so a failed run leaves nothing behind. ``out_dir`` must not
    exist or be empty.
    """
    out = Path(out_dir)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise FileExistsError(f"{out} exists and is not an empty directory")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        (tmp / "maps").mkdir()
        entries = []
        for map_id, spec in plan_corpus(seed, n_clean, n_defective):
            net, truth = generate(spec, map_id)
            (tmp / "maps" / f"{map_id}.xml").write_bytes(write_map(net))
            entries.append({**truth.to_dict(), "file": f"maps/{map_id}.xml"})
        manifest = {"format": MANIFEST_FORMAT, "seed": seed, "n_clean": n_clean,
                    "n_defective": n_defective, "maps": entries}
        (tmp / "manifest").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        if out.exists():
            out.rmdir()
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def read_manifest(corpus_dir: str | Path) -> dict:
    data = json.loads((Path(corpus_dir) / "manifest").read_text(encoding="utf-8"))
    if data.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{corpus_dir}: unsupported manifest format {data.get('format')!r}")
    return data
