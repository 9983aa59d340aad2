"""Road network, A* route search and reference-path resampling."""
from __future__ import annotations

import bisect
import enum
import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import InvalidArgument, OutOfBounds, UnreachableGoal

LENGTH_EPS = 1e-9
CURVATURE_SMOOTHING = 2.0  # m


class RoadClass(str, enum.Enum):
    URBAN_MAIN = "UrbanMain"
    RESIDENTIAL = "Residential"
    UNSTRUCTURED = "Unstructured"


@dataclass(frozen=True)
class Edge:
    frm: int
    to: int
    length: float
    road_class: RoadClass = RoadClass.URBAN_MAIN
    lane_width: float = 3.5
    speed_limit: float = 5.0
    one_way: bool = False
    # intermediate shape points between the two end nodes
    shape: tuple[tuple[float, float], ...] = ()


class RoadGraph:
    """Directed road graph; two-way edges are stored once per direction.

    Treat instances as immutable: every editing operation returns a new graph.
    """

    def __init__(self, nodes: Mapping[int, tuple[float, float]], edges: Iterable[Edge] = ()):
        self._nodes = {int(k): (float(v[0]), float(v[1])) for k, v in nodes.items()}
        self._edges: dict[tuple[int, int], Edge] = {}
        self._adj: dict[int, list[int]] = {k: [] for k in self._nodes}
        for e in edges:
            self._insert(e)

    def _insert(self, e: Edge) -> None:
        for nid in (e.frm, e.to):
            if nid not in self._nodes:
                raise InvalidArgument(f"edge references unknown node {nid}")
        straight = math.dist(self._nodes[e.frm], self._nodes[e.to])
        if e.length < straight * (1 - 1e-9) - 1e-12:
            raise InvalidArgument(f"edge {e.frm}->{e.to} shorter than straight-line distance")
        directions = [e] if e.one_way else [e, Edge(e.to, e.frm, e.length, e.road_class, e.lane_width,
                                                     e.speed_limit, e.one_way, tuple(reversed(e.shape)))]
        for d in directions:
            if (d.frm, d.to) not in self._edges:
                self._adj[d.frm].append(d.to)
            self._edges[(d.frm, d.to)] = d
        for k in self._adj:
            self._adj[k].sort()

    @classmethod
    def build(cls, nodes: Mapping[int, tuple[float, float]], edges: Iterable[dict]) -> "RoadGraph":
        """Build from plain dicts; ``length`` defaults to the polyline length."""
        g = cls(nodes)
        out = []
        for spec in edges:
            spec = dict(spec)
            frm, to = int(spec.pop("frm")), int(spec.pop("to"))
            shape = tuple(tuple(map(float, p)) for p in spec.pop("shape", ()))
            if "road_class" in spec:
                spec["road_class"] = RoadClass(spec["road_class"])
            if "length" not in spec:
                pts = [g.position(frm), *shape, g.position(to)]
                spec["length"] = polyline_length(pts)
            out.append(Edge(frm, to, shape=shape, **spec))
        return cls(nodes, out)

    @property
    def nodes(self) -> dict[int, tuple[float, float]]:
        return dict(self._nodes)

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges.values())

    def position(self, nid: int) -> tuple[float, float]:
        try:
            return self._nodes[nid]
        except KeyError:
            raise InvalidArgument(f"unknown node id {nid}") from None

    def edge(self, frm: int, to: int) -> Edge:
        return self._edges[(frm, to)]

    def neighbors(self, nid: int) -> list[int]:
        return self._adj[nid]

    def edge_polyline(self, e: Edge) -> np.ndarray:
        return np.array([self._nodes[e.frm], *e.shape, self._nodes[e.to]], dtype=float)

    def _raw_edges(self) -> list[Edge]:
        # one entry per undirected two-way edge, used for copying
        seen, out = set(), []
        for (a, b), e in self._edges.items():
            if not e.one_way:
                if (b, a) in seen:
                    continue
                seen.add((a, b))
            out.append(e)
        return out


@dataclass(frozen=True)
class Route:
    nodes: tuple[int, ...]
    total_length: float
    road_classes: tuple[RoadClass, ...] = ()


def polyline_length(pts) -> float:
    p = np.asarray(pts, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(p, axis=0).T)))


def plan_route(graph: RoadGraph, start: int, goal: int) -> Route:
    """Shortest route by A* with a Euclidean heuristic.

    Ties on priority go to the smaller node id. Nodes may be reopened when a
    cheaper cost shows up, which keeps the result optimal even if rounding
    makes the heuristic marginally inconsistent.
    """
    graph.position(start)
    gx, gy = graph.position(goal)
    if start == goal:
        return Route((start,), 0.0, ())

    def h(n):
        x, y = graph.position(n)
        return math.hypot(x - gx, y - gy)

    best = {start: 0.0}
    parent: dict[int, int] = {}
    heap = [(h(start), start)]
    closed: dict[int, float] = {}
    while heap:
        f, u = heapq.heappop(heap)
        g = best[u]
        if u in closed and closed[u] <= g:
            continue
        if f > g + h(u):
            continue  # stale entry
        closed[u] = g
        if u == goal:
            break
        for v in graph.neighbors(u):
            ng = g + graph.edge(u, v).length
            if ng < best.get(v, math.inf):
                best[v] = ng
                parent[v] = u
                heapq.heappush(heap, (ng + h(v), v))
    if goal not in closed:
        raise UnreachableGoal(f"no route from {start} to {goal}")
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return _route_from_nodes(graph, path)


def _route_from_nodes(graph: RoadGraph, path: Sequence[int]) -> Route:
    total = 0.0
    classes = []
    for a, b in zip(path, path[1:]):
        e = graph.edge(a, b)
        total += e.length
        classes.append(e.road_class)
    return Route(tuple(path), total, tuple(classes))


def route_from_nodes(graph: RoadGraph, path: Sequence[int]) -> Route:
    for a, b in zip(path, path[1:]):
        if (a, b) not in graph._edges:
            raise InvalidArgument(f"nodes {a} and {b} are not connected")
    return _route_from_nodes(graph, path)


def add_demonstration(graph: RoadGraph, polyline, road_class=RoadClass.UNSTRUCTURED, *,
                      snap_radius: float = 2.0, speed_limit: float = 2.0,
                      lane_width: float = 3.0, one_way: bool = True) -> RoadGraph:
    """Insert a driven reference route as a chain of nodes and edges.

    The first and last points reuse an existing node when one lies within
    ``snap_radius``. Returns a new graph.
    """
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise InvalidArgument("demonstration needs at least two 2-D points")
    keep = [0] + [i for i in range(1, len(pts)) if np.any(pts[i] != pts[i - 1])]
    pts = pts[keep]
    if len(pts) < 2:
        raise InvalidArgument("demonstration is degenerate (all points identical)")

    nodes = graph.nodes
    existing = dict(nodes)
    next_id = max(nodes, default=-1) + 1

    def snap(p):
        best, best_d = None, snap_radius
        for nid in sorted(existing):
            d = math.dist(existing[nid], p)
            if d <= best_d:
                best, best_d = nid, d
        return best

    ids = []
    for i, p in enumerate(pts):
        nid = snap(p) if i in (0, len(pts) - 1) else None
        if nid is None:
            nid = next_id
            next_id += 1
            nodes[nid] = (float(p[0]), float(p[1]))
        ids.append(nid)
    if ids[0] == ids[-1] and len(ids) == 2:
        raise InvalidArgument("demonstration endpoints snap to the same node")

    new_edges = graph._raw_edges()
    for a, b in zip(ids, ids[1:]):
        length = math.dist(nodes[a], nodes[b])
        new_edges.append(Edge(a, b, length, RoadClass(road_class), lane_width, speed_limit, one_way))
    return RoadGraph(nodes, new_edges)


@dataclass(frozen=True)
class SegmentInfo:
    s_start: float
    road_class: RoadClass
    speed_limit: float
    lane_width: float


class ReferencePath:
    """Arc-length sampled path with tangent heading and curvature.

    Between samples position, heading (unwrapped) and curvature vary linearly
    in ``s``; the Frenet transforms rely on exactly this interpolation.
    """

    def __init__(self, x, y, heading, curvature, s, spacing: float,
                 segments: Sequence[SegmentInfo] | None = None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.heading_unwrapped = np.unwrap(np.asarray(heading, dtype=float))
        self.curvature = np.asarray(curvature, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.spacing = float(spacing)
        if len(self.s) < 2 or self.s[0] != 0.0 or np.any(np.diff(self.s) <= 0):
            raise InvalidArgument("reference s must start at 0 and strictly increase")
        self.segments = tuple(segments) if segments else (
            SegmentInfo(0.0, RoadClass.URBAN_MAIN, math.inf, 3.5),)
        self._seg_s = [seg.s_start for seg in self.segments]

    @property
    def heading(self) -> np.ndarray:
        return np.mod(self.heading_unwrapped + math.pi, 2 * math.pi) - math.pi

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def __len__(self):
        return len(self.s)

    def at(self, s):
        """Interpolated ``(x, y, heading_unwrapped, curvature)`` at arc length(s)."""
        return (np.interp(s, self.s, self.x), np.interp(s, self.s, self.y),
                np.interp(s, self.s, self.heading_unwrapped), np.interp(s, self.s, self.curvature))

    def segment_at(self, s: float) -> SegmentInfo:
        """Segment containing ``s``; boundaries belong to the segment that starts there."""
        if s < 0 or s > self.length + 1e-9:
            raise OutOfBounds(f"s={s} outside [0, {self.length}]")
        i = bisect.bisect_right(self._seg_s, s) - 1
        return self.segments[max(i, 0)]

    def speed_limit_at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.searchsorted(np.asarray(self._seg_s), s, side="right") - 1
        lim = np.array([seg.speed_limit for seg in self.segments])
        return lim[np.clip(idx, 0, len(lim) - 1)]

    @classmethod
    def from_polyline(cls, pts, spacing: float, segments: Sequence[SegmentInfo] | None = None,
                      smooth: float = 0.0) -> "ReferencePath":
        """Resample a polyline at equal arc-length spacing, ending exactly at its end.

        ``smooth`` (m) is the width of a moving average applied to curvature,
        which spreads the spikes a coarse polyline has at its vertices.
        """
        if spacing <= 0:
            raise InvalidArgument("spacing must be positive")
        p = np.asarray(pts, dtype=float)
        keep = np.concatenate([[True], np.any(np.diff(p, axis=0) != 0, axis=1)])
        p = p[keep]
        if len(p) < 2:
            raise InvalidArgument("polyline has zero length")
        seg = np.hypot(*np.diff(p, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        n_full = int(math.floor(total / spacing + 1e-12))
        s = spacing * np.arange(n_full + 1)
        if total - s[-1] > 1e-9 * max(1.0, total):
            s = np.append(s, total)
        else:
            s[-1] = total
        if len(s) < 2:
            s = np.array([0.0, total])
        x = np.interp(s, cum, p[:, 0])
        y = np.interp(s, cum, p[:, 1])
        heading, kappa = tangent_and_curvature(x, y)
        half = int(round(smooth / (2.0 * spacing)))
        if half > 0 and len(kappa) > 2:
            kappa = uniform_filter1d(kappa, 2 * half + 1, mode="nearest")
        return cls(x, y, heading, kappa, s, spacing, segments)


def tangent_and_curvature(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Tangent heading by central differences and signed three-point curvature."""
    n = len(x)
    dx = np.empty(n)
    dy = np.empty(n)
    dx[1:-1] = x[2:] - x[:-2]
    dy[1:-1] = y[2:] - y[:-2]
    dx[0], dy[0] = x[1] - x[0], y[1] - y[0]
    dx[-1], dy[-1] = x[-1] - x[-2], y[-1] - y[-2]
    heading = np.arctan2(dy, dx)
    kappa = np.zeros(n)
    if n >= 3:
        ax, ay = x[1:-1] - x[:-2], y[1:-1] - y[:-2]
        bx, by = x[2:] - x[1:-1], y[2:] - y[1:-1]
        cross = ax * by - ay * bx
        la, lb = np.hypot(ax, ay), np.hypot(bx, by)
        lc = np.hypot(x[2:] - x[:-2], y[2:] - y[:-2])
        denom = la * lb * lc
        kappa[1:-1] = np.where(denom > 0, 2.0 * cross / np.where(denom > 0, denom, 1.0), 0.0)
        kappa[0], kappa[-1] = kappa[1], kappa[-2]
    return heading, kappa


def route_to_reference(graph: RoadGraph, route: Route, spacing: float,
                       smooth: float = CURVATURE_SMOOTHING) -> ReferencePath:
    """Resample the concatenated edge geometry of ``route`` at ``spacing`` metres."""
    if not route.nodes:
        raise InvalidArgument("empty route")
    if spacing <= 0:
        raise InvalidArgument("spacing must be positive")
    if len(route.nodes) < 2:
        raise InvalidArgument("route must contain at least one edge")
    pieces = []
    segments = []
    s0 = 0.0
    for a, b in zip(route.nodes, route.nodes[1:]):
        e = graph.edge(a, b)
        poly = graph.edge_polyline(e)
        pieces.append(poly if not pieces else poly[1:])
        segments.append(SegmentInfo(s0, e.road_class, e.speed_limit, e.lane_width))
        s0 += polyline_length(poly)
    pts = np.concatenate(pieces)
    return ReferencePath.from_polyline(pts, spacing, segments, smooth)
