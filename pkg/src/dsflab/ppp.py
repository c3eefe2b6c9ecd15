"""Lazily sampled homogeneous Poisson point process.

Space is cut into cubic lattice cells.  The points of a cell are a pure
function of ``(seed, cell index)`` (see :mod:`dsflab.rng`), so the realization
restricted to any region does not depend on the order in which regions were
queried.  Cells are generated on demand and cached.
"""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np
from scipy import stats

from . import rng as _rng
from .lpgeom import NormContext, Region

MAX_SEARCH_RADIUS = 2.0 ** 20


class ExpansionCapError(RuntimeError):
    """Nearest-point search hit the hard radius cap."""


def _poisson_cdf_table(mean: float) -> np.ndarray:
    kmax = int(mean + 12 * math.sqrt(mean) + 40)
    cdf = stats.poisson.cdf(np.arange(kmax + 1), mean)
    cdf[-1] = 1.0
    return cdf


class PointStore:
    """Poisson points of a given intensity, generated cell by cell.

    Parameters
    ----------
    d : int
        Ambient dimension.
    seed : int
        Root of every cell stream.
    intensity : float
        Mean number of points per unit volume.
    background : bool
        If False the store holds only explicitly injected points.
    exclude : Region, optional
        Background points falling in this region are discarded (used to build
        conditioned environments).
    parent, keep : PointStore, Region, optional
        When given, points of ``parent`` inside ``keep`` are inherited and the
        store's own background is only used outside ``keep``.
    ctx : NormContext, optional
        Needed whenever ``exclude`` or ``keep`` involve l^p balls.
    """

    def __init__(self, d, seed=0, intensity=1.0, *, background=True, exclude=None,
                 parent=None, keep=None, ctx=None, cell_size=1.0):
        if intensity <= 0:
            raise ValueError("intensity must be positive")
        self.d = int(d)
        self.seed = int(seed)
        self.intensity = float(intensity)
        self.background = background
        self.exclude = exclude
        self.parent = parent
        self.keep = keep
        self.ctx = ctx if ctx is not None else NormContext(self.d, 2)
        self.cell_size = float(cell_size)
        self._cells: dict[tuple, np.ndarray] = {}
        self._extra: dict[tuple, np.ndarray] = {}
        self._cdf = _poisson_cdf_table(self.intensity * self.cell_size ** self.d)
        self._empty = np.empty((0, self.d))
        self._root = _rng.seed_key(self.seed)
        # missing cells are generated in a block padded by this many cells
        self.prefetch = 1

    @classmethod
    def from_points(cls, points, d=None, ctx=None):
        """Deterministic store containing exactly ``points`` and nothing else."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points.shape[1] if d is None else d
        store = cls(d, background=False, ctx=ctx)
        if points.size:
            store.add_points(points)
        return store

    # ------------------------------------------------------------------ cells

    def _cell_index(self, pts):
        return np.floor(np.asarray(pts, dtype=float) / self.cell_size).astype(np.int64)

    def add_points(self, points):
        """Inject points (they behave exactly like sampled ones)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        for pt, idx in zip(points, self._cell_index(points)):
            key = tuple(int(v) for v in idx)
            arr = self._extra.get(key, self._empty)
            self._extra[key] = np.vstack([arr, pt[None, :]])
            if key in self._cells:
                self._cells[key] = np.vstack([self._cells[key], pt[None, :]])

    def _background(self, cells: np.ndarray):
        """Raw Poisson points of ``cells`` plus the owning cell row of each point."""
        m = cells.shape[0]
        if not self.background or m == 0:
            return self._empty, np.empty(0, dtype=np.int64)
        keys = _rng.cell_keys(self._root, cells)
        counts = np.searchsorted(self._cdf, _rng.uniforms(keys, np.zeros(m)), side="right")
        total = int(counts.sum())
        if total == 0:
            return self._empty, np.empty(0, dtype=np.int64)
        owner = np.repeat(np.arange(m), counts)
        nvar = counts * self.d
        starts = np.cumsum(nvar) - nvar
        flat_owner = np.repeat(np.arange(m), nvar)
        counters = np.arange(total * self.d) - starts[flat_owner] + 1
        u = _rng.uniforms(keys[flat_owner], counters).reshape(total, self.d)
        pts = (cells[owner] + u) * self.cell_size
        return pts, owner

    def _generate(self, cells: np.ndarray, keys=None):
        if keys is None:
            keys = list(map(tuple, cells.tolist()))
        pts, owner = self._background(cells)
        filtered = False
        if self.exclude is not None and len(pts):
            ok = ~self.exclude.contains(pts, self.ctx)
            pts, owner = pts[ok], owner[ok]
        if self.parent is not None:
            if len(pts):
                ok = ~self.keep.contains(pts, self.ctx)
                pts, owner = pts[ok], owner[ok]
            inherited, inh_owner = [], []
            for row, key in enumerate(keys):
                arr = self.parent._cell_points(key)
                if len(arr):
                    arr = arr[self.keep.contains(arr, self.ctx)]
                    inherited.append(arr)
                    inh_owner.append(np.full(len(arr), row))
            if inherited:
                pts = np.vstack([pts] + inherited)
                owner = np.concatenate([owner] + inh_owner)
                filtered = True
        if filtered:
            order = np.argsort(owner, kind="stable")
            pts, owner = pts[order], owner[order]
        bounds = np.searchsorted(owner, np.arange(len(keys) + 1)).tolist()
        extra = self._extra
        store = self._cells
        for key, a, b in zip(keys, bounds[:-1], bounds[1:]):
            arr = pts[a:b]
            if extra and key in extra:
                arr = np.vstack([arr, extra[key]])
            store[key] = arr

    def _cell_points(self, key: tuple) -> np.ndarray:
        arr = self._cells.get(key)
        if arr is None:
            self._generate(np.asarray([key], dtype=np.int64))
            arr = self._cells[key]
        return arr

    def _cells_in_box(self, lo, hi):
        ilo = self._cell_index(lo)
        ihi = self._cell_index(hi)
        return itertools.product(*(range(a, b + 1) for a, b in zip(ilo, ihi)))

    def _gather(self, lo, hi) -> np.ndarray:
        keys = list(self._cells_in_box(lo, hi))
        cells = self._cells
        missing = [k for k in keys if k not in cells]
        if missing:
            if self.prefetch and self.background:
                pad = self.prefetch * self.cell_size
                block = [k for k in self._cells_in_box(lo - pad, hi + pad) if k not in cells]
            else:
                block = missing
            self._generate(np.asarray(block, dtype=np.int64), block)
        arrs = [a for a in (cells[k] for k in keys) if len(a)]
        if not arrs:
            return self._empty
        return arrs[0] if len(arrs) == 1 else np.concatenate(arrs)

    # ------------------------------------------------------------------ queries

    @property
    def n_cells(self) -> int:
        return len(self._cells)

    def points_in_box(self, lo, hi) -> np.ndarray:
        """All points ``y`` with ``lo <= y <= hi`` (generating cells as needed)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        pts = self._gather(lo, hi)
        if not len(pts):
            return pts
        return pts[np.all((pts >= lo) & (pts <= hi), axis=1)]

    def sample_box(self, lo, hi) -> np.ndarray:
        """Points of the process inside the axis box ``[lo, hi]``.

        A box with zero volume yields no points; an inverted or unbounded box
        is rejected.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != (self.d,) or hi.shape != (self.d,):
            raise ValueError("box corners must be d-vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi < lo):
            raise ValueError("degenerate box")
        if np.any(hi == lo):
            return self._empty.copy()
        return self.points_in_box(lo, hi)

    def all_points(self) -> np.ndarray:
        """Every point generated so far."""
        arrs = [a for a in self._cells.values() if len(a)]
        return np.concatenate(arrs) if arrs else self._empty.copy()

    def is_sampled(self, lo, hi) -> bool:
        return all(k in self._cells for k in self._cells_in_box(lo, hi))

    def nearest_above(self, x, mask: Region | None = None, ctx: NormContext | None = None,
                      exclude_points=None, initial_radius=1.0, return_distance=False):
        """Closest point ``y`` to ``x`` with ``y . e_d > x . e_d`` and ``y`` not in ``mask``.

        The search box grows by doubling until the best candidate is strictly
        closer than the box half-width, so the half-ball it certifies empty has
        been fully generated.
        """
        ctx = ctx or self.ctx
        x = np.asarray(x, dtype=float)
        r = float(initial_radius)
        excl = None if exclude_points is None else np.atleast_2d(np.asarray(exclude_points, float))
        while r <= MAX_SEARCH_RADIUS:
            lo = x - r
            hi = x + r
            lo[-1] = x[-1]
            pts = self._gather(lo, hi)
            if len(pts):
                cand = pts[pts[:, -1] > x[-1]]
                if mask is not None and len(cand):
                    cand = cand[~mask.contains(cand, ctx)]
                if excl is not None and len(cand) and len(excl):
                    same = (cand[:, None, :] == excl[None, :, :]).all(axis=2).any(axis=1)
                    cand = cand[~same]
                if len(cand):
                    dist = ctx.norm(cand - x)
                    i = int(np.argmin(dist))
                    if dist[i] < r:
                        return (cand[i], float(dist[i])) if return_distance else cand[i]
            r *= 2.0
        raise ExpansionCapError(f"no admissible point within radius {MAX_SEARCH_RADIUS:g} of {x}")

    def to_csv(self, path, points=None):
        """Write points (default: all generated) one per row at full precision."""
        pts = self.all_points() if points is None else np.asarray(points, dtype=float)
        np.savetxt(Path(path), pts, delimiter=",", fmt="%.17g")


def resample_outside(store: PointStore, keep: Region, seed=None, ctx=None) -> PointStore:
    """Copy of ``store`` inside ``keep``, fresh independent points elsewhere."""
    if seed is None:
        seed = _rng.derive_seed(store.seed, "resample")
    return PointStore(store.d, seed=seed, intensity=store.intensity, parent=store, keep=keep,
                      ctx=ctx or store.ctx, cell_size=store.cell_size)


def read_points_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(Path(path), delimiter=",", dtype=float))
