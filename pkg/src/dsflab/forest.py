"""The directed spanning forest on a finite window.

Every vertex ``x`` points to ``Psi(x)``, its nearest point with strictly larger
last coordinate.  On a window only some of these edges can be certified from
the sampled data; the rest are flagged rather than guessed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .lpgeom import NormContext
from .ppp import PointStore


@dataclass
class ForestGraph:
    """Vertices of a window, certified edges ``(source, target)`` and boundary flags."""

    vertices: np.ndarray
    edges: np.ndarray
    uncertain: np.ndarray
    window: tuple

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def successor(self) -> np.ndarray:
        """Target index per vertex, -1 when uncertified."""
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        if len(self.edges):
            out[self.edges[:, 0]] = self.edges[:, 1]
        return out

    def is_acyclic(self) -> bool:
        if not len(self.edges):
            return True
        v = self.vertices
        return bool(np.all(v[self.edges[:, 1], -1] > v[self.edges[:, 0], -1]))

    def to_csv(self, vertex_path, edge_path):
        np.savetxt(Path(vertex_path), self.vertices, delimiter=",", fmt="%.17g")
        np.savetxt(Path(edge_path), self.edges.reshape(-1, 2), delimiter=",", fmt="%d")


@dataclass
class Trajectory:
    points: np.ndarray
    truncated: bool = False

    def to_csv(self, path):
        np.savetxt(Path(path), self.points, delimiter=",", fmt="%.17g")


def _kd_p(ctx: NormContext) -> float:
    return np.inf if ctx.is_inf else ctx.p


def build_forest(store: PointStore, window, ctx: NormContext) -> ForestGraph:
    """DSF edges among the points of ``window = (lo, hi)`` that can be certified.

    The edge ``x -> y`` is certified when the bounding box of ``B^+(x, |y - x|)``
    lies inside the window, so no unseen point can be closer.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in window)
    pts = store.sample_box(lo, hi)
    n = len(pts)
    if n == 0:
        return ForestGraph(pts, np.empty((0, 2), np.int64), np.zeros(0, bool), (lo, hi))
    tree = cKDTree(pts)
    kp = _kd_p(ctx)
    # largest radius for which the upper half-ball's bounding box stays inside the window
    margin = np.minimum(np.min(np.minimum(pts[:, :-1] - lo[:-1], hi[:-1] - pts[:, :-1]), axis=1),
                        hi[-1] - pts[:, -1])
    edges = []
    uncertain = np.zeros(n, bool)
    for i in range(n):
        x = pts[i]
        bound = margin[i]
        if bound <= 0:
            uncertain[i] = True
            continue
        kk = 8
        while True:
            kq = min(kk, n)
            dist, idx = tree.query(x, k=kq, p=kp, distance_upper_bound=bound)
            dist = np.atleast_1d(dist)
            idx = np.atleast_1d(idx)
            finite = np.isfinite(dist)
            found = -1
            for dd, j in zip(dist[finite], idx[finite]):
                if pts[j, -1] > x[-1]:
                    found = int(j)
                    break
            if found >= 0:
                if dist[np.flatnonzero(idx == found)[0]] <= bound:
                    edges.append((i, found))
                else:
                    uncertain[i] = True
                break
            if finite.sum() < kq or kq == n:
                uncertain[i] = True
                break
            kk *= 4
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return ForestGraph(pts, e, uncertain, (lo, hi))


def trajectory_from(store: PointStore, start, n_steps: int, ctx: NormContext) -> Trajectory:
    """Iterate ``Psi`` ``n_steps`` times from ``start``."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    x = np.asarray(start, dtype=float)
    out = np.empty((n_steps + 1, x.shape[0]))
    out[0] = x
    for s in range(n_steps):
        x = store.nearest_above(x, ctx=ctx)
        out[s + 1] = x
    return Trajectory(out, False)


def count_trees(g: ForestGraph, among=None):
    """Weakly connected components of the certified subgraph.

    Parameters
    ----------
    among : array_like of int, optional
        Restrict the count to components containing these vertices.

    Returns
    -------
    (count, sizes) where ``sizes`` lists component sizes in decreasing order.
    """
    n = g.n_vertices
    if n == 0:
        return 0, []
    e = g.edges
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)) if len(e) else \
        coo_matrix((n, n))
    _, labels = connected_components(adj, directed=True, connection="weak")
    if among is not None:
        labels_sel = labels[np.asarray(among, dtype=np.int64)]
        uniq = np.unique(labels_sel)
    else:
        uniq = np.unique(labels)
    counts = np.bincount(labels)
    sizes = sorted((int(counts[u]) for u in uniq), reverse=True)
    return len(uniq), sizes


def trajectories_merge(a: Trajectory, b: Trajectory) -> int | None:
    """Index in ``a`` of the first point shared with ``b`` (exact identity), else None."""
    bset = {tuple(p) for p in b.points}
    for i, p in enumerate(a.points):
        if tuple(p) in bset:
            return i
    return None
