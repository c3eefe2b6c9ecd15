import numpy as np
import pytest

from dsflab.forest import build_forest, count_trees, trajectory_from
from dsflab.lpgeom import NormContext
from dsflab.ppp import PointStore

C2 = NormContext(2, 2.0)
WIN = (np.zeros(2), np.full(2, 10.0))


def _fixed(points):
    return PointStore.from_points(np.asarray(points, float), d=2, ctx=C2)


def test_single_point_no_edges():
    g = build_forest(_fixed([[5.0, 5.0]]), WIN, C2)
    assert g.n_vertices == 1 and len(g.edges) == 0


def test_two_points_one_edge():
    g = build_forest(_fixed([[5.0, 1.0], [5.0, 2.0]]), WIN, C2)
    assert len(g.edges) == 1
    lo, hi = g.edges[0]
    assert g.vertices[lo][1] < g.vertices[hi][1]


def test_random_window_structure():
    s = PointStore(2, seed=11, ctx=C2)
    g = build_forest(s, (np.zeros(2), np.array([40.0, 25.0])), C2)
    assert g.n_vertices > 900
    assert len(g.edges) == g.n_vertices - int(g.uncertain.sum())
    assert g.is_acyclic()


def test_trajectory_trivial_and_chain():
    s = _fixed([[0.0, float(i)] for i in range(1, 6)])
    assert len(trajectory_from(s, np.zeros(2), 0, C2).points) == 1
    tr = trajectory_from(s, np.zeros(2), 5, C2)
    assert np.array_equal(tr.points[1:, 1], np.arange(1.0, 6.0))


def test_trajectory_diffusive():
    heights, lateral = [], []
    for seed in range(100):
        tr = trajectory_from(PointStore(2, seed=seed, ctx=C2), np.zeros(2), 1000, C2).points
        heights.append(tr[:, 1])
        lateral.append(tr[:, 0])
    progress = np.mean([h[-1] / 1000 for h in heights])
    assert progress > 0.3
    grid = np.linspace(50, 400, 8)
    var = [np.var([np.interp(t, h, x) for h, x in zip(heights, lateral)]) for t in grid]
    r = np.corrcoef(grid, var)[0, 1]
    assert r ** 2 > 0.9


def test_count_trees_trivial():
    g = build_forest(_fixed([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]), WIN, C2)
    assert count_trees(g)[0] == 1
    empty = build_forest(_fixed(np.empty((0, 2))), WIN, C2)
    assert count_trees(empty)[0] == 0
