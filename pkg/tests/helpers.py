"""Shared generators for tests."""
import math

import numpy as np

from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from navstack.core import Pose2D
from navstack.routenet import Edge, ReferencePath, RoadGraph

# acceptance results as (criterion, passed, detail), printed in the terminal summary
ACCEPTANCE = []


def random_reference(rng, length=60.0, kappa_max=0.1, spacing=0.5):
    """Smooth random path: curvature is a random sum of sines bounded by ``kappa_max``."""
    ds = 0.01
    s = np.arange(0.0, length + ds, ds)
    amp = rng.uniform(-1, 1, 3)
    freq = rng.uniform(0.02, 0.15, 3)
    phase = rng.uniform(0, 2 * math.pi, 3)
    k = sum(a * np.sin(f * s + p) for a, f, p in zip(amp, freq, phase))
    k *= kappa_max / max(np.abs(k).max(), 1e-9) * rng.uniform(0.2, 1.0)
    th = rng.uniform(-math.pi, math.pi) + np.concatenate([[0.0], np.cumsum(0.5 * (k[1:] + k[:-1]) * ds)])
    x = np.concatenate([[0.0], np.cumsum(0.5 * (np.cos(th[1:]) + np.cos(th[:-1])) * ds)])
    y = np.concatenate([[0.0], np.cumsum(0.5 * (np.sin(th[1:]) + np.sin(th[:-1])) * ds)])
    return ReferencePath.from_polyline(np.column_stack([x, y]), spacing)


def random_pose_near(rng, path, margin=1.0, max_d=None, max_dtheta=1.0):
    kmax = max(float(np.abs(path.curvature).max()), 1e-6)
    lim = 0.5 / kmax if max_d is None else max_d
    lim = min(lim, 5.0)
    s = rng.uniform(margin, path.length - margin)
    d = rng.uniform(-lim, lim)
    x, y, th, _ = path.at(s)
    return Pose2D(float(x - d * math.sin(th)), float(y + d * math.cos(th)),
                  float(th + rng.uniform(-max_dtheta, max_dtheta)))


def random_graph(rng, n):
    pts = rng.uniform(0, 100, size=(n, 2))
    nodes = {i: tuple(p) for i, p in enumerate(pts)}
    edges = []
    for _ in range(3 * n):
        a, b = rng.integers(0, n, size=2)
        if a == b:
            continue
        straight = math.dist(pts[a], pts[b])
        edges.append(Edge(int(a), int(b), straight * rng.uniform(1.0, 1.5), one_way=bool(rng.random() < 0.3)))
    return RoadGraph(nodes, edges)


def dijkstra_cost(graph, start, goal):
    """Shortest route length from scipy's Dijkstra; parallel edges keep the shortest."""
    n = len(graph.nodes)
    w = {}
    for e in graph.edges:
        key = (e.frm, e.to)
        w[key] = min(w.get(key, math.inf), e.length)
    rows, cols = zip(*w) if w else ((), ())
    m = csr_matrix((list(w.values()), (rows, cols)), shape=(n, n))
    return dijkstra(m, directed=True, indices=start)[goal]
