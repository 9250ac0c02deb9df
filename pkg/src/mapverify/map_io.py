"""Lanelet map XML reader/writer and the OpenDRIVE-subset converter.

Map document::

    <laneletNetwork>
      <lanelet id="1">
        <leftBound><point><x>0.0</x><y>2.0</y><z>0.0</z></point> ...</leftBound>
        <rightBound> ... </rightBound>
        <successor ref="2"/>
        <predecessor ref="7"/>
      </lanelet>
    </laneletNetwork>

Unknown elements are rejected. Coordinates are written with ``repr`` so
every float survives a round trip bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator
from xml.parsers import expat

import numpy as np

from mapverify.map_model import (
    GeometryError, Lanelet, LaneletNetwork, Polyline3, link_lanelets,
)

DEFAULT_STEP = 1.0


class MapFormatError(ValueError):
    """Malformed document; carries the element path and source line."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}" if where else message)


class CoverageError(ValueError):
    """A reference-line station is not covered by any plan-view geometry."""


# ---------------------------------------------------------------- minimal DOM


@dataclass
class _Node:
    tag: str
    attrs: dict[str, str]
    line: int
    path: str
    children: list[_Node] = field(default_factory=list)
    text: str = ""

    def fail(self, message: str) -> MapFormatError:
        return MapFormatError(message, self.path, self.line)

    def attr(self, name: str) -> str:
        if name not in self.attrs:
            raise self.fail(f"missing attribute {name!r}")
        return self.attrs[name]

    def float_attr(self, name: str, default: float | None = None) -> float:
        if name not in self.attrs and default is not None:
            return default
        return _to_float(self.attr(name), self)

    def int_attr(self, name: str) -> int:
        raw = self.attr(name)
        try:
            return int(raw)
        except ValueError:
            raise self.fail(f"attribute {name!r} is not an integer: {raw!r}") from None

    def only(self, allowed: Iterable[str]) -> None:
        allowed = set(allowed)
        for c in self.children:
            if c.tag not in allowed:
                raise c.fail(f"unexpected element <{c.tag}>")

    def find_all(self, tag: str) -> list[_Node]:
        return [c for c in self.children if c.tag == tag]

    def find_one(self, tag: str, required: bool = True) -> _Node | None:
        found = self.find_all(tag)
        if len(found) > 1:
            raise found[1].fail(f"duplicate <{tag}>")
        if not found:
            if required:
                raise self.fail(f"missing <{tag}>")
            return None
        return found[0]


def _to_float(raw: str, node: _Node) -> float:
    try:
        value = float(raw.strip())
    except ValueError:
        raise node.fail(f"not a number: {raw.strip()!r}") from None
    if not math.isfinite(value):
        raise node.fail(f"non-finite number {raw.strip()!r}")
    return value


def _parse_xml(data: bytes | str) -> _Node:
    parser = expat.ParserCreate()
    stack: list[_Node] = []
    root: list[_Node] = []

    def start(tag, attrs):
        path = (stack[-1].path if stack else "") + "/" + tag
        if stack:
            idx = sum(1 for c in stack[-1].children if c.tag == tag) + 1
            path = f"{stack[-1].path}/{tag}[{idx}]"
        node = _Node(tag, dict(attrs), parser.CurrentLineNumber, path)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(text):
        if stack:
            stack[-1].text += text

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise MapFormatError(f"malformed XML: {expat.ErrorString(exc.code)}", "", exc.lineno) from None
    return root[0]


# ---------------------------------------------------------------- lanelet maps


def _read_bound(node: _Node) -> Polyline3:
    node.only({"point"})
    coords = []
    for p in node.find_all("point"):
        p.only({"x", "y", "z"})
        coords.append(tuple(_to_float(p.find_one(axis).text, p.find_one(axis)) for axis in "xyz"))
    if len(coords) < 2:
        raise node.fail("a bound needs at least 2 points")
    try:
        return Polyline3.from_coords(coords)
    except GeometryError as exc:
        raise node.fail(str(exc)) from None


def read_map(data: bytes | str) -> LaneletNetwork:
    """Parse a lanelet map document.

    Raises MapFormatError for structural problems and NetworkError for
    broken invariants (dangling or asymmetric links, duplicate ids).
    """
    root = _parse_xml(data)
    if root.tag != "laneletNetwork":
        raise root.fail(f"expected <laneletNetwork>, found <{root.tag}>")
    root.only({"lanelet"})
    lanelets = []
    for node in root.find_all("lanelet"):
        node.only({"leftBound", "rightBound", "successor", "predecessor"})
        lid = node.int_attr("id")
        left = _read_bound(node.find_one("leftBound"))
        right = _read_bound(node.find_one("rightBound"))
        succ = tuple(n.int_attr("ref") for n in node.find_all("successor"))
        pred = tuple(n.int_attr("ref") for n in node.find_all("predecessor"))
        lanelets.append(Lanelet(lid, left, right, succ, pred))
    return LaneletNetwork(tuple(lanelets))


def _write_bound(tag: str, bound: Polyline3) -> Iterator[str]:
    yield f"    <{tag}>"
    for p in bound.points:
        yield f"      <point><x>{p.x!r}</x><y>{p.y!r}</y><z>{p.z!r}</z></point>"
    yield f"    </{tag}>"


def write_map(net: LaneletNetwork) -> bytes:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<laneletNetwork>"]
    for l in net:
        lines.append(f'  <lanelet id="{l.id}">')
        lines.extend(_write_bound("leftBound", l.left_bound))
        lines.extend(_write_bound("rightBound", l.right_bound))
        lines.extend(f'    <successor ref="{s}"/>' for s in l.successors)
        lines.extend(f'    <predecessor ref="{p}"/>' for p in l.predecessors)
        lines.append("  </lanelet>")
    lines.append("</laneletNetwork>")
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------- OpenDRIVE subset


@dataclass(frozen=True)
class Geometry:
    s0: float
    x0: float
    y0: float
    hdg: float
    seg_length: float
    curvature: float | None = None  # None for a line

    def __post_init__(self) -> None:
        if not self.seg_length > 0:
            raise ValueError("geometry length must be positive")
        if self.curvature is not None and self.curvature == 0:
            raise ValueError("arc curvature must be nonzero")

    def pose(self, s: float) -> tuple[float, float, float]:
        """(x, y, heading) at reference-line station ``s``."""
        u = s - self.s0
        if self.curvature is None:
            return (self.x0 + u * math.cos(self.hdg), self.y0 + u * math.sin(self.hdg), self.hdg)
        k = self.curvature
        h = self.hdg + k * u
        return (self.x0 + (math.sin(h) - math.sin(self.hdg)) / k,
                self.y0 + (math.cos(self.hdg) - math.cos(h)) / k, h)


@dataclass(frozen=True)
class ElevationPoly:
    s0: float
    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def __call__(self, s: float) -> float:
        u = s - self.s0
        return self.a + self.b * u + self.c * u * u + self.d * u * u * u


@dataclass(frozen=True)
class OpenDriveRoad:
    id: int
    length: float
    plan_geometries: tuple[Geometry, ...]
    elevations: tuple[ElevationPoly, ...]
    lane_width: float
    successor_road_id: int | None = None

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise ValueError("road id must be positive")
        if not self.length > 0:
            raise ValueError("road length must be positive")
        if not self.lane_width > 0:
            raise ValueError("lane width must be positive")
        for kind, items in (("geometry", self.plan_geometries), ("elevation", self.elevations)):
            offsets = [g.s0 for g in items]
            if not offsets or offsets[0] != 0:
                raise ValueError(f"{kind} s-offsets must start at 0")
            if any(b <= a for a, b in zip(offsets, offsets[1:])):
                raise ValueError(f"{kind} s-offsets must be strictly increasing")


def _active(items, s: float):
    current = items[0]
    for item in items:
        if item.s0 <= s:
            current = item
        else:
            break
    return current


def _stations(length: float, ds: float) -> list[float]:
    if not ds > 0:
        raise ValueError("step must be positive")
    count = int(math.floor(length / ds))
    stations = [i * ds for i in range(count + 1)]
    # Keep the exact end station; drop a regular station that would sit on top of it.
    while stations and length - stations[-1] <= 1e-6:
        stations.pop()
    stations.append(length)
    return stations


def _sample(road: OpenDriveRoad, ds: float) -> list[tuple[float, float, float, float]]:
    out = []
    for s in _stations(road.length, ds):
        geom = _active(road.plan_geometries, s)
        if s > geom.s0 + geom.seg_length + 1e-9:
            raise CoverageError(f"road {road.id}: station {s} not covered by plan-view geometry")
        x, y, hdg = geom.pose(s)
        out.append((x, y, _active(road.elevations, s)(s), hdg))
    return out


def sample_reference_line(road: OpenDriveRoad, ds: float = DEFAULT_STEP) -> Polyline3:
    """Reference line at stations 0, ds, 2ds, ... and exactly ``road.length``."""
    return Polyline3.from_coords((x, y, z) for x, y, z, _ in _sample(road, ds))


def convert(road: OpenDriveRoad, ds: float = DEFAULT_STEP) -> Lanelet:
    """One lanelet per road: bounds offset by half the lane width, z unchanged.

    Only the successor link is set here; predecessors are filled in when the
    network is assembled (see :func:`convert_roads`).
    """
    half = road.lane_width / 2.0
    samples = np.array(_sample(road, ds))
    x, y, z, hdg = samples.T
    nx, ny = -np.sin(hdg), np.cos(hdg)
    left = np.column_stack((x + half * nx, y + half * ny, z))
    right = np.column_stack((x - half * nx, y - half * ny, z))
    succ = () if road.successor_road_id is None else (road.successor_road_id,)
    return Lanelet(road.id, Polyline3.from_array(left), Polyline3.from_array(right), succ)


def convert_roads(roads: Iterable[OpenDriveRoad], ds: float = DEFAULT_STEP) -> LaneletNetwork:
    return link_lanelets(convert(r, ds) for r in roads)


def read_opendrive(data: bytes | str) -> list[OpenDriveRoad]:
    """Parse the OpenDRIVE subset (line/arc plan view, cubic elevation, constant width)."""
    root = _parse_xml(data)
    if root.tag != "OpenDRIVE":
        raise root.fail(f"expected <OpenDRIVE>, found <{root.tag}>")
    root.only({"header", "road"})
    roads = []
    for rn in root.find_all("road"):
        rn.only({"link", "planView", "elevationProfile", "laneWidth"})
        geoms = []
        plan = rn.find_one("planView")
        plan.only({"geometry"})
        for g in plan.find_all("geometry"):
            g.only({"line", "arc"})
            kinds = g.children
            if len(kinds) != 1:
                raise g.fail("geometry needs exactly one of <line/> or <arc/>")
            curvature = kinds[0].float_attr("curvature") if kinds[0].tag == "arc" else None
            try:
                geoms.append(Geometry(g.float_attr("s"), g.float_attr("x"), g.float_attr("y"),
                                      g.float_attr("hdg"), g.float_attr("length"), curvature))
            except ValueError as exc:
                if isinstance(exc, MapFormatError):
                    raise
                raise g.fail(str(exc)) from None
        elevs = []
        prof = rn.find_one("elevationProfile", required=False)
        if prof is not None:
            prof.only({"elevation"})
            for e in prof.find_all("elevation"):
                elevs.append(ElevationPoly(e.float_attr("s"), e.float_attr("a"), e.float_attr("b", 0.0),
                                           e.float_attr("c", 0.0), e.float_attr("d", 0.0)))
        if not elevs:
            elevs.append(ElevationPoly(0.0, 0.0))
        succ = None
        link = rn.find_one("link", required=False)
        if link is not None:
            link.only({"successor", "predecessor"})
            sn = link.find_one("successor", required=False)
            if sn is not None:
                succ = sn.int_attr("elementId")
        width = rn.find_one("laneWidth").float_attr("value")
        try:
            roads.append(OpenDriveRoad(rn.int_attr("id"), rn.float_attr("length"), tuple(geoms),
                                       tuple(elevs), width, succ))
        except ValueError as exc:
            if isinstance(exc, MapFormatError):
                raise
            raise rn.fail(str(exc)) from None
    return roads
