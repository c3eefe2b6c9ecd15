"""Stochastic domination of the first vertical step by the empty-history case.

Tools to compare the law of ``X^H . e_d`` (nearest admissible Poisson point to
the origin above level 0 and outside a re-centered history ``H``) with
``X^empty . e_d``, the uniform analogue ``U^H``, the section proportion
``alpha_h`` and the section inclusion property, plus an exact rational check of
a configuration where the inclusion fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from .lpgeom import NormContext, Region, rho, sample_lp_ball


class InsufficientDataError(ValueError):
    """Too few samples survive a conditioning step."""


class RecenteredHistory(Region):
    """``H^+(0)`` intersected with a union of balls avoiding the origin, centers at or below 0.

    For section computations the bottom level is treated as closed, i.e. a
    point at height 0 belongs to ``H`` when it lies in one of the balls.
    """

    def __init__(self, centers=None, radii=None, d=None, check=True):
        if centers is None or len(centers) == 0:
            if d is None:
                raise ValueError("d is required for an empty history")
            centers = np.empty((0, d))
            radii = np.empty(0)
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.radii = np.asarray(radii, dtype=float).ravel()
        self.d = self.centers.shape[1]
        if len(self.radii) != len(self.centers):
            raise ValueError("one radius per center")
        if check:
            if np.any(self.centers[:, -1] > 0):
                raise ValueError("centers must lie in the closed lower half-space")
            if np.any(self.radii < 0):
                raise ValueError("radii must be nonnegative")

    @classmethod
    def empty(cls, d: int) -> "RecenteredHistory":
        return cls(None, None, d=d)

    def is_empty(self) -> bool:
        return len(self.radii) == 0

    def validate(self, ctx: NormContext) -> bool:
        """Balls avoid the origin (``|c| >= r``)."""
        return bool(np.all(ctx.norm(self.centers) >= self.radii)) if len(self.radii) else True

    def scaled(self, s: float) -> "RecenteredHistory":
        return RecenteredHistory(self.centers / s, self.radii / s, d=self.d, check=False)

    def in_balls(self, x, ctx):
        x = np.asarray(x, dtype=float)
        if self.is_empty():
            return np.zeros(x.shape[:-1], bool)
        return (ctx.norm(x[..., None, :] - self.centers) < self.radii).any(axis=-1)

    def contains(self, x, ctx):
        x = np.asarray(x, dtype=float)
        return self.in_balls(x, ctx) & (x[..., -1] > 0)

    def section_contains(self, x, ctx):
        """Membership for points with ``x_d >= 0`` (bottom level closed)."""
        x = np.asarray(x, dtype=float)
        return self.in_balls(x, ctx) & (x[..., -1] >= 0)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist()}


def random_h0(d: int, ctx: NormContext, gen: np.random.Generator, n_balls=None) -> RecenteredHistory:
    """Random valid history: 1-4 balls, ``c_d in [-2, 0]``, lateral in ``[-2, 2]``, ``r ~ U(0, |c|]``."""
    nb = int(gen.integers(1, 5)) if n_balls is None else int(n_balls)
    centers = np.empty((nb, d))
    centers[:, :-1] = gen.uniform(-2.0, 2.0, size=(nb, d - 1))
    centers[:, -1] = gen.uniform(-2.0, 0.0, size=nb)
    norms = ctx.norm(centers)
    radii = norms * (1.0 - gen.random(nb))  # uniform on (0, |c|]
    return RecenteredHistory(centers, radii)


def single_ball_history(d: int = 3, p=3) -> RecenteredHistory:
    """The single-ball history ``B^+(c, |c|)`` with ``c = (3, 3, 0)``."""
    c = np.array([3.0] * (d - 1) + [0.0])
    ctx = NormContext(d, p)
    return RecenteredHistory(c[None, :], [float(ctx.norm(c))])


# --------------------------------------------------------------------------- X^H sampler


def _box_volume(d, r):
    return (2.0 * r) ** (d - 1) * r


def sample_X_many(masks, ctx: NormContext, seed, n: int, r0=None, chunk: int = 20_000):
    """Nearest and second-nearest admissible points for several masks on shared streams.

    Each sample uses one Poisson realization in ``H^+(0)``; every mask sees the
    same points.  Points come from growing boxes ``[-r, r]^{d-1} x (0, r]``;
    a sample is resolved once its second-best distance is below ``r`` (the box
    contains the half-ball of radius ``r`` for every p).

    Returns
    -------
    list of (X, X2) pairs of arrays with shape (n, d), one per mask.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = ctx.d
    gen = np.random.default_rng(seed)
    if r0 is None:
        # about six expected points in the initial box
        r0 = (6.0 / (2.0 ** (d - 1))) ** (1.0 / d)
    outs = [(np.empty((n, d)), np.empty((n, d))) for _ in masks]
    for start in range(0, n, chunk):
        size = min(chunk, n - start)
        res = _sample_chunk(masks, ctx, gen, size, r0)
        for o, r in zip(outs, res):
            o[0][start:start + size] = r[0]
            o[1][start:start + size] = r[1]
    return outs


def _two_smallest(ids, norms, pts, n_ids):
    """Per id, the two smallest ``norms`` (inf-padded)."""
    order = np.lexsort((norms, ids))
    ids, norms, pts = ids[order], norms[order], pts[order]
    d = pts.shape[1]
    b1n = np.full(n_ids, np.inf)
    b2n = np.full(n_ids, np.inf)
    b1p = np.full((n_ids, d), np.nan)
    b2p = np.full((n_ids, d), np.nan)
    if len(ids):
        first = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        b1n[ids[first]] = norms[first]
        b1p[ids[first]] = pts[first]
        sec = first + 1
        ok = sec < len(ids)
        sec = sec[ok]
        same = ids[sec] == ids[first[ok]]
        sec = sec[same]
        b2n[ids[sec]] = norms[sec]
        b2p[ids[sec]] = pts[sec]
    return b1n, b1p, b2n, b2p


def _sample_chunk(masks, ctx, gen, size, r0):
    d = ctx.d
    nm = len(masks)
    best = [[np.full(size, np.inf), np.full((size, d), np.nan),
             np.full(size, np.inf), np.full((size, d), np.nan)] for _ in range(nm)]
    pending = np.arange(size)
    r_lo, r_hi = 0.0, r0
    while pending.size:
        if r_hi > 2.0 ** 20:
            raise RuntimeError("expansion cap reached (history covers almost everything)")
        counts = gen.poisson(_box_volume(d, r_hi), size=pending.size)
        ids = np.repeat(np.arange(pending.size), counts)
        pts = gen.random((ids.size, d))
        pts[:, :-1] = (2.0 * pts[:, :-1] - 1.0) * r_hi
        pts[:, -1] = (1.0 - pts[:, -1]) * r_hi  # (0, r_hi]
        if r_lo > 0:
            outer = (np.abs(pts[:, :-1]).max(axis=1) > r_lo) | (pts[:, -1] > r_lo)
            ids, pts = ids[outer], pts[outer]
        norms = ctx.norm(pts)
        still = np.zeros(pending.size, bool)
        for mi, mask in enumerate(masks):
            keep = ~mask.contains(pts, ctx) if mask is not None else np.ones(len(pts), bool)
            b = best[mi]
            cur = [b[0][pending], b[1][pending], b[2][pending], b[3][pending]]
            loc = np.arange(pending.size)
            fin1 = np.isfinite(cur[0])
            fin2 = np.isfinite(cur[2])
            all_ids = np.concatenate([ids[keep], loc[fin1], loc[fin2]])
            all_n = np.concatenate([norms[keep], cur[0][fin1], cur[2][fin2]])
            all_p = np.concatenate([pts[keep], cur[1][fin1], cur[3][fin2]])
            b1n, b1p, b2n, b2p = _two_smallest(all_ids, all_n, all_p, pending.size)
            b[0][pending], b[1][pending], b[2][pending], b[3][pending] = b1n, b1p, b2n, b2p
            still |= ~(b2n < r_hi)
        pending = pending[still]
        r_lo, r_hi = r_hi, 2.0 * r_hi
    return [(b[1], b[3]) for b in best]


def sample_X(H, ctx: NormContext, seed, n: int):
    """``n`` samples of ``X^H`` and of the second-nearest point ``X_2^H``.

    Returns
    -------
    X, X2 : ndarray, shape (n, d)
    """
    mask = None if H is None or (isinstance(H, RecenteredHistory) and H.is_empty()) else H
    ((X, X2),) = sample_X_many([mask], ctx, seed, n)
    return X, X2


def sample_U(H, ctx: NormContext, seed, n: int, batch: int = 1 << 16) -> np.ndarray:
    """``n`` uniform points of ``B^+(0,1)`` minus ``H`` (rejection from the bounding box)."""
    d = ctx.d
    gen = np.random.default_rng(seed)
    out = []
    have = 0
    tried = 0
    while have < n:
        cand = gen.random((batch, d))
        cand[:, :-1] = 2.0 * cand[:, :-1] - 1.0
        cand[:, -1] = 1.0 - cand[:, -1]
        ok = (ctx.norm(cand) < 1.0)
        if H is not None:
            ok &= ~H.contains(cand, ctx)
        acc = cand[ok]
        tried += batch
        out.append(acc)
        have += len(acc)
        if tried >= 10 ** 6 and have < 1e-6 * tried:
            raise ValueError("B^+(0,1) minus H is effectively empty")
    return np.concatenate(out)[:n]


# --------------------------------------------------------------------------- ECDF dominance


@dataclass
class EcdfComparison:
    grid: np.ndarray
    survival_a: np.ndarray
    survival_b: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    threshold: float

    @property
    def max_violation_z(self) -> float:
        return float(self.z.max()) if len(self.z) else 0.0

    @property
    def violations(self) -> np.ndarray:
        return self.grid[self.z > self.threshold]

    @property
    def passed(self) -> bool:
        return not np.any(self.z > self.threshold)

    def to_csv(self, path):
        tab = np.column_stack([self.grid, self.survival_a, self.survival_b, self.stderr, self.z])
        np.savetxt(Path(path), tab, delimiter=",", fmt="%.17g",
                   header="h,survival_a,survival_b,stderr,z", comments="")


def quantile_grid(a, b, n_points: int = 50) -> np.ndarray:
    pooled = np.concatenate([np.asarray(a, float), np.asarray(b, float)])
    q = (np.arange(n_points) + 0.5) / n_points
    return np.unique(np.quantile(pooled, q))


def ecdf_dominance(a, b, grid=None, z: float = 4.0) -> EcdfComparison:
    """One-sided test that ``a`` is stochastically at least as large as ``b``.

    At each grid point the survival estimates are compared with a pooled
    binomial standard error; ``z`` scores are positive where ``a`` falls below
    ``b``.
    """
    a = np.sort(np.asarray(a, float))
    b = np.sort(np.asarray(b, float))
    if not len(a) or not len(b):
        raise ValueError("both samples must be non-empty")
    if grid is None:
        grid = quantile_grid(a, b)
    grid = np.asarray(grid, float)
    na, nb = len(a), len(b)
    ka = na - np.searchsorted(a, grid, side="left")
    kb = nb - np.searchsorted(b, grid, side="left")
    sa, sb = ka / na, kb / nb
    pool = (ka + kb) / (na + nb)
    se = np.sqrt(pool * (1 - pool) * (1 / na + 1 / nb))
    diff = sb - sa
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
    return EcdfComparison(grid, sa, sb, se, zs, z)


# --------------------------------------------------------------------------- sections


def section_points(n: int, ctx: NormContext, h: float, gen) -> np.ndarray:
    """Uniform points of the section ``S_h`` (as d-vectors at height ``h``)."""
    x0 = sample_lp_ball(n, ctx.d - 1, ctx.p, gen, radius=rho(h, ctx))
    out = np.empty((n, ctx.d))
    out[:, :-1] = x0
    out[:, -1] = h
    return out


def alpha_h_estimate(H, h: float, ctx: NormContext, n: int, seed):
    """Fraction of the section ``S_h`` not covered by ``H``, with binomial stderr."""
    if not (0.0 <= h < 1.0):
        raise ValueError("h must lie in [0, 1)")
    if H is None or H.is_empty():
        return 1.0, 0.0
    gen = np.random.default_rng(seed)
    pts = section_points(n, ctx, h, gen)
    a = float(np.mean(~H.section_contains(pts, ctx)))
    return a, math.sqrt(a * (1 - a) / n)


def alpha_curve(H, hs, ctx: NormContext, n: int, seed):
    """``alpha_h`` on a grid, with an independent stream per grid point."""
    ss = np.random.SeedSequence(seed).spawn(len(hs))
    est = np.array([alpha_h_estimate(H, h, ctx, n, s) for h, s in zip(hs, ss)])
    return est[:, 0], est[:, 1]


def monotone_violations(est, se, z: float = 4.0):
    """Grid pairs ``(i, j)`` (adjacent pairs plus the endpoints) with a ``z``-sigma decrease."""
    est, se = np.asarray(est), np.asarray(se)
    pairs = [(i, i + 1) for i in range(len(est) - 1)] + [(0, len(est) - 1)]
    bad = []
    for i, j in pairs:
        s = math.hypot(se[i], se[j])
        drop = est[i] - est[j]
        if drop > 0 and (s == 0 or drop > z * s):
            bad.append((i, j))
    return bad


def lift(x0, h: float, ctx: NormContext):
    """``rho(h) x0 + h e_d`` for points ``x0`` of ``S_0``."""
    x0 = np.asarray(x0, float)
    out = x0 * rho(h, ctx)
    out[..., -1] = h
    return out


def section_inclusion_test(H, h: float, h_prime: float, ctx: NormContext, n: int, seed,
                           points=None) -> np.ndarray:
    """Points ``x0`` of ``S_0`` with the lift at ``h`` in ``H`` but the lift at ``h'`` outside."""
    if not (0.0 <= h_prime <= h < 1.0):
        raise ValueError("need 0 <= h' <= h < 1")
    d = ctx.d
    if points is None:
        if H is None or H.is_empty():
            return np.empty((0, d))
        gen = np.random.default_rng(seed)
        points = section_points(n, ctx, 0.0, gen)
    points = np.atleast_2d(np.asarray(points, float))
    if H is None or H.is_empty():
        return np.empty((0, d))
    hi = H.section_contains(lift(points, h, ctx), ctx)
    lo = H.section_contains(lift(points, h_prime, ctx), ctx)
    return points[hi & ~lo]


# --------------------------------------------------------------------------- exact counterexample


@dataclass
class CounterexampleReport:
    lifted_cube_sum: Fraction
    base_cube: Fraction
    radius_cube: Fraction
    lifted_inside: bool
    base_outside: bool

    @property
    def passed(self) -> bool:
        return (self.lifted_inside and self.base_outside
                and self.lifted_cube_sum == Fraction(11527, 216)
                and self.base_cube == Fraction(3473, 64))

    def text(self) -> str:
        r = self.radius_cube
        lines = [
            "p = d = 3, c = (3, 3, 0), x = (3/4, -1/2, 0)",
            f"|(2/3)x - c|^3 + rho(2/3)^3 = {self.lifted_cube_sum} "
            f"{'<' if self.lifted_inside else '>='} {r} = |c|^3",
            f"|x - c|^3 = {self.base_cube} {'>' if self.base_outside else '<='} {r} = |c|^3",
            "PASS" if self.passed else "FAIL",
        ]
        return "\n".join(lines)


def _cube_abs(q: Fraction) -> Fraction:
    return abs(q) ** 3


def counterexample_verify() -> CounterexampleReport:
    """Exact rational check of the section-inclusion failure for ``p = d = 3``.

    The point ``x`` lies outside ``B(c, |c|)`` at level 0 while its lift
    ``(2/3) x + rho(2/3) e_3`` (level ``rho(2/3)``, where the section radius is
    ``2/3``) lies inside.
    """
    c = (Fraction(3), Fraction(3), Fraction(0))
    x = (Fraction(3, 4), Fraction(-1, 2), Fraction(0))
    t = Fraction(2, 3)
    rho_cube = 1 - t ** 3                      # rho(2/3)^3, the lift's height cubed
    lifted = sum(_cube_abs(t * xi - ci) for xi, ci in zip(x[:2], c[:2])) + rho_cube
    base = sum(_cube_abs(xi - ci) for xi, ci in zip(x, c))
    radius_cube = sum(_cube_abs(ci) for ci in c)
    return CounterexampleReport(lifted, base, radius_cube, lifted < radius_cube, base > radius_cube)


# --------------------------------------------------------------------------- uniformisation


@dataclass
class UniformisationReport:
    n_selected: int
    ks_stat: float
    pvalue: float
    max_norm: float
    alpha: float = 0.01

    @property
    def passed(self) -> bool:
        return self.pvalue >= self.alpha and self.max_norm <= 1.0


def uniformisation_check(H, ctx: NormContext, n: int, seed, band=(1.0, 1.05),
                         min_selected: int = 50, alpha: float = 0.01) -> UniformisationReport:
    """Compare ``X^H / |X_2^H|`` given ``|X_2^H|`` in ``band`` with a direct uniform sample.

    The reference is ``U`` on ``B^+(0,1)`` minus ``H / s`` with ``s`` the band
    midpoint; the KS test is on the last coordinate.
    """
    lo, hi = band
    if n < 1:
        raise InsufficientDataError("no samples")
    mask = None if H is None or H.is_empty() else H
    X, X2 = sample_X(mask, ctx, seed, n)
    r2 = ctx.norm(X2)
    sel = (r2 >= lo) & (r2 < hi)
    if sel.sum() < min_selected:
        raise InsufficientDataError(f"only {int(sel.sum())} samples fall in the band")
    Y = X[sel] / r2[sel, None]
    s = 0.5 * (lo + hi)
    ref_mask = None if mask is None else mask.scaled(s)
    U = sample_U(ref_mask, ctx, np.random.SeedSequence(seed).spawn(1)[0], max(4 * len(Y), 2000))
    res = stats.ks_2samp(Y[:, -1], U[:, -1])
    return UniformisationReport(int(sel.sum()), float(res.statistic), float(res.pvalue),
                                float(ctx.norm(Y).max()), alpha)


def write_alpha_csv(path, hs, est, se):
    np.savetxt(Path(path), np.column_stack([hs, est, se]), delimiter=",", fmt="%.17g",
               header="h,estimate,stderr", comments="")
