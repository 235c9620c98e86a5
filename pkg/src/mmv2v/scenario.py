"""Manhattan-grid geometry, synthetic lane-following mobility and trace I/O."""
from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
TRACE_COLUMNS = ("t", "id", "kind", "x", "y", "heading", "speed", "g")

# artifact choices, not taken from the measurement setup
DEFAULT_BASE_SPEED = 8.0      # m/s, regular vehicles
DEFAULT_SLOT_DURATION = 0.1   # s
R_CAV_DATA_LEVELS = (0.25, 0.5, 0.75, 1.0)
E_CAV_DATA = 1.0


class Kind(str, enum.Enum):
    EMERGENCY = "E"
    REGULAR = "R"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        text = str(value).strip().upper()
        aliases = {"E": cls.EMERGENCY, "EMERGENCY": cls.EMERGENCY,
                   "R": cls.REGULAR, "REGULAR": cls.REGULAR}
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown vehicle kind {value!r}") from None


@dataclass(frozen=True)
class GeometryConfig:
    extent_x: float = 100.0
    extent_y: float = 100.0
    horizontal_roads: int = 3
    vertical_roads: int = 3
    lanes: int = 4
    lane_width: float = 3.2

    def validate(self) -> None:
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ValueError("grid extent must be positive")
        if self.horizontal_roads < 1 or self.vertical_roads < 1:
            raise ValueError("need at least one road per axis")
        if self.lanes < 2 or self.lanes % 2:
            raise ValueError("lanes must be a positive even number (two directions)")
        if self.lane_width <= 0:
            raise ValueError("lane width must be positive")
        width = self.lanes * self.lane_width
        if self.horizontal_roads * width > self.extent_y or self.vertical_roads * width > self.extent_x:
            raise ValueError("roads do not fit inside the grid extent")


@dataclass(frozen=True)
class Road:
    horizontal: bool
    center: float
    lanes: int
    lane_width: float
    length: float

    @property
    def width(self) -> float:
        return self.lanes * self.lane_width

    @property
    def rect(self) -> tuple[float, float, float, float]:
        half = self.width / 2
        if self.horizontal:
            return (0.0, self.center - half, self.length, self.center + half)
        return (self.center - half, 0.0, self.center + half, self.length)


@dataclass(frozen=True)
class Geometry:
    """Axis-aligned roads and building blocks; rectangles are (xmin, ymin, xmax, ymax)."""

    extent: tuple[float, float]
    roads: tuple[Road, ...]
    buildings: tuple[tuple[float, float, float, float], ...]
    interior_blocks: int = 0

    @cached_property
    def building_array(self) -> np.ndarray:
        return np.array(self.buildings, dtype=float).reshape(-1, 4)

    @cached_property
    def road_array(self) -> np.ndarray:
        return np.array([r.rect for r in self.roads], dtype=float).reshape(-1, 4)

    def on_road(self, x, y, tol: float = 1e-9):
        """Vectorised point-in-road test."""
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        r = self.road_array
        inside = ((x >= r[:, 0] - tol) & (x <= r[:, 2] + tol)
                  & (y >= r[:, 1] - tol) & (y <= r[:, 3] + tol))
        return inside.any(axis=-1)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.extent[0] and 0.0 <= y <= self.extent[1]


def _road_centres(count: int, width: float, extent: float) -> list[float]:
    if count == 1:
        return [extent / 2]
    return list(np.linspace(width / 2, extent - width / 2, count))


def _gaps(intervals: Sequence[tuple[float, float]], extent: float):
    # free intervals between road strips, flagged as bounded on both sides
    out, cursor, bounded_left = [], 0.0, False
    for lo, hi in intervals:
        if lo > cursor + 1e-9:
            out.append((cursor, lo, bounded_left))
        cursor, bounded_left = hi, True
    if cursor < extent - 1e-9:
        out.append((cursor, extent, False))
    return [(lo, hi, bl and hi < extent) for lo, hi, bl in out]


def build_manhattan_grid(config: GeometryConfig = GeometryConfig()) -> Geometry:
    """Grid of crossing roads with every free block filled by a building."""
    config.validate()
    width = config.lanes * config.lane_width
    hs = _road_centres(config.horizontal_roads, width, config.extent_y)
    vs = _road_centres(config.vertical_roads, width, config.extent_x)
    roads = tuple(
        [Road(True, float(c), config.lanes, config.lane_width, config.extent_x) for c in hs]
        + [Road(False, float(c), config.lanes, config.lane_width, config.extent_y) for c in vs])
    xgaps = _gaps([(c - width / 2, c + width / 2) for c in vs], config.extent_x)
    ygaps = _gaps([(c - width / 2, c + width / 2) for c in hs], config.extent_y)
    buildings, interior = [], 0
    for x0, x1, xb in xgaps:
        for y0, y1, yb in ygaps:
            buildings.append((x0, y0, x1, y1))
            interior += xb and yb
    return Geometry(extent=(config.extent_x, config.extent_y), roads=roads,
                    buildings=tuple(buildings), interior_blocks=interior)


@dataclass(frozen=True)
class VehicleState:
    id: int
    kind: Kind
    x: float
    y: float
    heading: float
    speed: float
    g: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not self.g > 0:
            raise ValueError(f"vehicle {self.id}: generated data must be positive, got {self.g}")
        if not 0.0 <= self.heading < TWO_PI:
            raise ValueError(f"vehicle {self.id}: heading {self.heading} outside [0, 2pi)")
        if self.speed < 0:
            raise ValueError(f"vehicle {self.id}: negative speed")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def emergency(self) -> bool:
        return self.kind is Kind.EMERGENCY


@dataclass(frozen=True)
class TraceSet:
    slot_duration: float
    samples: Mapping[tuple[int, int], VehicleState]

    def __post_init__(self):
        if self.slot_duration <= 0:
            raise ValueError("slot duration must be positive")
        for (t, vid), state in self.samples.items():
            if state.id != vid:
                raise ValueError(f"sample key ({t}, {vid}) holds vehicle {state.id}")

    @cached_property
    def _by_slot(self) -> dict[int, tuple[VehicleState, ...]]:
        slots: dict[int, list[VehicleState]] = {}
        for (t, _), state in self.samples.items():
            slots.setdefault(t, []).append(state)
        return {t: tuple(sorted(v, key=lambda s: s.id)) for t, v in sorted(slots.items())}

    def timeslots(self) -> list[int]:
        return list(self._by_slot)

    def vehicles(self, t: int) -> tuple[VehicleState, ...]:
        if t not in self._by_slot:
            raise KeyError(f"timeslot {t} not in traces")
        return self._by_slot[t]

    def state(self, t: int, vid: int) -> VehicleState:
        try:
            return self.samples[(t, vid)]
        except KeyError:
            raise KeyError(f"vehicle {vid} not present at timeslot {t}") from None

    def vehicle_ids(self) -> list[int]:
        return sorted({vid for _, vid in self.samples})

    def __len__(self) -> int:
        return len(self.samples)


# --- synthetic mobility ----------------------------------------------------

@dataclass
class _RoadGraph:
    nodes: list[tuple[float, float]]
    adj: dict[int, list[int]] = field(default_factory=dict)


def _road_graph(geometry: Geometry) -> _RoadGraph:
    hroads = [r for r in geometry.roads if r.horizontal]
    vroads = [r for r in geometry.roads if not r.horizontal]
    ext_x, ext_y = geometry.extent
    index: dict[tuple[float, float], int] = {}
    graph = _RoadGraph(nodes=[])

    def node(p):
        if p not in index:
            index[p] = len(graph.nodes)
            graph.nodes.append(p)
            graph.adj[index[p]] = []
        return index[p]

    def link(a, b):
        graph.adj[a].append(b)
        graph.adj[b].append(a)

    def chain(points):
        ids = [node(p) for p in points]
        for a, b in zip(ids, ids[1:]):
            link(a, b)

    for road in hroads:
        xs = sorted(v.center for v in vroads)
        half = road.width / 2
        # dead ends only where the road runs on past its outer crossings
        if xs[0] > half + 1e-9:
            xs = [0.0] + xs
        if xs[-1] < ext_x - half - 1e-9:
            xs = xs + [ext_x]
        chain([(x, road.center) for x in xs])
    for road in vroads:
        ys = sorted(h.center for h in hroads)
        half = road.width / 2
        if ys[0] > half + 1e-9:
            ys = [0.0] + ys
        if ys[-1] < ext_y - half - 1e-9:
            ys = ys + [ext_y]
        chain([(road.center, y) for y in ys])
    return graph


@dataclass
class _Mover:
    vid: int
    kind: Kind
    speed: float
    lane: int
    src: int
    dst: int
    s: float


def _place(graph: _RoadGraph, mover: _Mover, lane_width: float):
    (x0, y0), (x1, y1) = graph.nodes[mover.src], graph.nodes[mover.dst]
    length = math.hypot(x1 - x0, y1 - y0)
    ux, uy = (x1 - x0) / length, (y1 - y0) / length
    offset = lane_width * (0.5 + mover.lane)
    # right-hand traffic: shift to the right of the travel direction
    x = x0 + ux * mover.s + uy * offset
    y = y0 + uy * mover.s - ux * offset
    heading = math.atan2(uy, ux) % TWO_PI
    return x, y, heading


def _advance(graph: _RoadGraph, mover: _Mover, distance: float, rng: np.random.Generator) -> None:
    mover.s += distance
    while True:
        (x0, y0), (x1, y1) = graph.nodes[mover.src], graph.nodes[mover.dst]
        length = math.hypot(x1 - x0, y1 - y0)
        if mover.s < length:
            return
        mover.s -= length
        options = [n for n in graph.adj[mover.dst] if n != mover.src] or [mover.src]
        nxt = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]
        mover.src, mover.dst = mover.dst, nxt


def generate_traces(geometry: Geometry, vehicle_count: int, ecav_probability: float,
                    duration: int, seed: int, base_speed: float = DEFAULT_BASE_SPEED,
                    slot_duration: float = DEFAULT_SLOT_DURATION) -> TraceSet:
    """Seeded lane-following traces with random turns at intersections.

    Emergency vehicles travel at twice ``base_speed`` and always generate
    ``E_CAV_DATA``; regular vehicles draw their data amount per timeslot from
    ``R_CAV_DATA_LEVELS``.
    """
    if vehicle_count < 1:
        raise ValueError("vehicle_count must be >= 1")
    if not 0.0 <= ecav_probability <= 1.0:
        raise ValueError("ecav_probability must lie in [0, 1]")
    if duration < 0:
        raise ValueError("duration must be >= 0")
    rng = np.random.default_rng(seed)
    graph = _road_graph(geometry)
    lane_width = geometry.roads[0].lane_width
    lanes_per_direction = geometry.roads[0].lanes // 2
    edges = [(a, b) for a in sorted(graph.adj) for b in graph.adj[a]]
    lengths = np.array([math.dist(graph.nodes[a], graph.nodes[b]) for a, b in edges])
    weights = lengths / lengths.sum()

    movers = []
    for vid in range(1, vehicle_count + 1):
        kind = Kind.EMERGENCY if rng.random() < ecav_probability else Kind.REGULAR
        speed = base_speed * (2.0 if kind is Kind.EMERGENCY else 1.0)
        e = int(rng.choice(len(edges), p=weights))
        src, dst = edges[e]
        movers.append(_Mover(vid, kind, speed, int(rng.integers(lanes_per_direction)),
                             src, dst, float(rng.uniform(0.0, lengths[e]))))

    levels = np.array(R_CAV_DATA_LEVELS)
    samples: dict[tuple[int, int], VehicleState] = {}
    for t in range(duration):
        for m in movers:
            x, y, heading = _place(graph, m, lane_width)
            g = E_CAV_DATA if m.kind is Kind.EMERGENCY else float(levels[rng.integers(len(levels))])
            samples[(t, m.vid)] = VehicleState(m.vid, m.kind, x, y, heading, m.speed, g)
        for m in movers:
            _advance(graph, m, m.speed * slot_duration, rng)
    return TraceSet(slot_duration=slot_duration, samples=samples)


# --- trace CSV ---------------------------------------------------------------

class TraceFormatError(ValueError):
    pass


def save_traces(traces: TraceSet, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for (t, vid) in sorted(traces.samples):
            s = traces.samples[(t, vid)]
            writer.writerow([t, vid, s.kind.value, repr(s.x), repr(s.y),
                             repr(s.heading), repr(s.speed), repr(s.g)])


def load_traces(path, geometry: Geometry | None = None, off_road: str = "warn",
                slot_duration: float = DEFAULT_SLOT_DURATION) -> TraceSet:
    """Parse a trace CSV; ``off_road`` is ``"warn"``, ``"reject"`` or ``"ignore"``."""
    if off_road not in ("warn", "reject", "ignore"):
        raise ValueError(f"off_road must be warn, reject or ignore, not {off_road!r}")
    path = Path(path)
    samples: dict[tuple[int, int], VehicleState] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise TraceFormatError(f"{path}:1: expected header {','.join(TRACE_COLUMNS)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(TRACE_COLUMNS):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
            try:
                t, vid = int(row[0]), int(row[1])
                state = VehicleState(vid, Kind.parse(row[2]), float(row[3]), float(row[4]),
                                     float(row[5]), float(row[6]), float(row[7]))
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
            if (t, vid) in samples:
                raise TraceFormatError(f"{path}:{lineno}: duplicate sample for vehicle {vid} at t={t}")
            if geometry is not None and off_road != "ignore" and not geometry.on_road(state.x, state.y):
                msg = f"{path}:{lineno}: vehicle {vid} at ({state.x}, {state.y}) is off-road"
                if off_road == "reject":
                    raise TraceFormatError(msg)
                warnings.warn(msg, stacklevel=2)
            if state.emergency and state.g != E_CAV_DATA:
                logger.warning("%s:%d: emergency vehicle %d generates %s, expected %s",
                               path, lineno, vid, state.g, E_CAV_DATA)
            samples[(t, vid)] = state
    return TraceSet(slot_duration=slot_duration, samples=samples)


# --- spatial queries ---------------------------------------------------------

def _clip_chords(p0: np.ndarray, p1: np.ndarray, rects: np.ndarray):
    """Liang-Barsky clipping of segments (S, 2) against rectangles (B, 4).

    Returns entry/exit parameters of shape (S, B); a chord exists where
    ``t0 < t1``.
    """
    d = p1 - p0
    t0 = np.zeros((len(p0), len(rects)))
    t1 = np.ones((len(p0), len(rects)))
    empty = np.zeros_like(t0, dtype=bool)
    for axis, lo_col, hi_col in ((0, 0, 2), (1, 1, 3)):
        dd = d[:, axis][:, None]
        o = p0[:, axis][:, None]
        lo, hi = rects[:, lo_col][None], rects[:, hi_col][None]
        for p, q in ((-dd, o - lo), (dd, hi - o)):
            p = np.broadcast_to(p, t0.shape)
            q = np.broadcast_to(q, t0.shape)
            parallel = p == 0
            empty |= parallel & (q < 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
            t0 = np.where(~parallel & (p < 0), np.maximum(t0, r), t0)
            t1 = np.where(~parallel & (p > 0), np.minimum(t1, r), t1)
    return t0, t1, empty


def segments_blocked(geometry: Geometry, p0, p1, eps: float = 1e-9) -> np.ndarray:
    """True where the open segment p0-p1 passes through a building interior."""
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    rects = geometry.building_array
    if len(rects) == 0 or len(p0) == 0:
        return np.zeros(len(p0), dtype=bool)
    t0, t1, empty = _clip_chords(p0, p1, rects)
    chord = ~empty & (t1 - t0 > eps)
    # the midpoint of a non-degenerate chord is interior unless the chord runs along an edge
    tm = (t0 + t1) / 2
    mx = p0[:, 0][:, None] + tm * (p1 - p0)[:, 0][:, None]
    my = p0[:, 1][:, None] + tm * (p1 - p0)[:, 1][:, None]
    interior = ((mx > rects[:, 0] + eps) & (mx < rects[:, 2] - eps)
                & (my > rects[:, 1] + eps) & (my < rects[:, 3] - eps))
    return (chord & interior).any(axis=1)


def _segment_point_distance(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = (ab * ab).sum(-1)
    t = np.where(denom > 0, ((c - a) * ab).sum(-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(c - closest, axis=-1)


def is_los(geometry: Geometry, a, b, blockers: Iterable | None = None,
           blocker_radius: float = 1.0) -> bool:
    """Line of sight between two points.

    Buildings block when the open segment enters their interior (grazing an
    edge does not block). If ``blockers`` (other vehicles' positions) are
    given, each is treated as a disc of ``blocker_radius``.
    """
    blocked = bool(segments_blocked(geometry, [a], [b])[0])
    if blocked or blockers is None:
        return not blocked
    pts = np.asarray(list(blockers), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return True
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    dist = _segment_point_distance(a[None], b[None], pts)
    return not bool((dist < blocker_radius).any())


def los_matrix(geometry: Geometry, positions: np.ndarray, vehicle_blockage: bool = False,
               blocker_radius: float = 1.0) -> np.ndarray:
    """Symmetric boolean LOS matrix over ``positions`` (diagonal False)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    los = np.zeros((n, n), dtype=bool)
    if n < 2:
        return los
    iu, ju = np.triu_indices(n, k=1)
    ok = ~segments_blocked(geometry, positions[iu], positions[ju])
    if vehicle_blockage:
        dist = _segment_point_distance(positions[iu][:, None], positions[ju][:, None],
                                       positions[None, :, :])
        dist[np.arange(len(iu)), iu] = np.inf
        dist[np.arange(len(iu)), ju] = np.inf
        ok &= ~(dist < blocker_radius).any(axis=1)
    los[iu, ju] = ok
    los[ju, iu] = ok
    return los


def neighbors_in_radius(traces: TraceSet, t: int, i: int, radius: float) -> list[int]:
    """Vehicles within ``radius`` of ``i`` (closed ball), nearest first, ties by id."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    me = traces.state(t, i)
    others = [s for s in traces.vehicles(t) if s.id != i]
    if not others:
        return []
    xy = np.array([(s.x, s.y) for s in others])
    d = np.hypot(xy[:, 0] - me.x, xy[:, 1] - me.y)
    ids = np.array([s.id for s in others])
    keep = d <= radius
    order = np.lexsort((ids[keep], d[keep]))
    return [int(v) for v in ids[keep][order]]
