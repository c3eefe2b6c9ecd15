"""l^p geometry: norms, balls, half-balls, sections and Monte Carlo volumes.

Coordinates are numpy arrays whose last axis has length ``d``; the last
coordinate is the "vertical" direction ``e_d``.  All region membership tests
are vectorized over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class NormContext:
    """Ambient dimension ``d`` and exponent ``p`` in [1, inf].

    ``p = math.inf`` (or the string ``"inf"``) selects the max-norm branch;
    no power of a coordinate is ever taken in that case.
    """

    d: int
    p: float

    def __post_init__(self):
        p = self.p
        if isinstance(p, str):
            if p.lower() not in ("inf", "infinity", "oo"):
                raise ValueError(f"unknown exponent {p!r}")
            p = INF
        p = float(p)
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        if not (p >= 1.0):
            raise ValueError("p must lie in [1, inf]")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", p)

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.p)

    def norm(self, v):
        """l^p norm over the last axis."""
        v = np.asarray(v, dtype=float)
        a = np.abs(v)
        if self.is_inf:
            return a.max(axis=-1)
        if self.p == 1.0:
            return a.sum(axis=-1)
        if self.p == 2.0:
            return np.sqrt(np.einsum("...i,...i->...", v, v))
        return (a ** self.p).sum(axis=-1) ** (1.0 / self.p)

    def label(self) -> str:
        p = "inf" if self.is_inf else f"{self.p:g}"
        return f"d={self.d},p={p}"


def lp_norm(v, ctx: NormContext):
    return ctx.norm(v)


def alpha_p(p: float) -> float:
    """Radius of the ball around ``e_d`` that avoids every admissible history ball."""
    p = float(p)
    if math.isinf(p):
        raise ValueError("alpha_p is only defined for finite p")
    if p < 1:
        raise ValueError("p must be >= 1")
    return 2.0 ** (1.0 / p) - 1.0


def rho(h, ctx: NormContext):
    """Radius of the section of the unit ball at height ``h`` in [0, 1)."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0) or np.any(h_arr >= 1):
        raise ValueError("h must lie in [0, 1)")
    if ctx.is_inf:
        out = np.ones_like(h_arr)
    else:
        out = (1.0 - h_arr ** ctx.p) ** (1.0 / ctx.p)
    return float(out) if out.ndim == 0 else out


def phi_map(x, ctx: NormContext):
    """Flatten a point of the upper unit half-ball onto the level-0 section."""
    x = np.asarray(x, dtype=float)
    h = x[..., -1]
    if np.any(h >= 1):
        raise ValueError("phi_map requires x . e_d < 1")
    r = np.asarray(rho(np.clip(h, 0.0, None), ctx))
    out = x.copy()
    out[..., -1] = 0.0
    return out / r[..., None] if out.ndim > 1 else out / float(r)


def phi_inverse(x0, h, ctx: NormContext):
    """Lift a level-0 section point back to height ``h``."""
    x0 = np.asarray(x0, dtype=float)
    out = x0 * rho(h, ctx)
    out[..., -1] = h
    return out


# --------------------------------------------------------------------------- regions


class Region:
    """Boolean combination of balls, half-balls, half-spaces and boxes."""

    def contains(self, x, ctx: NormContext):
        raise NotImplementedError

    def bbox(self, d: int):
        """(lo, hi) arrays, possibly infinite, enclosing the region."""
        return np.full(d, -INF), np.full(d, INF)

    def __or__(self, other):
        return Union((self, other))

    def __and__(self, other):
        return Intersection((self, other))

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(frozen=True, eq=False)
class Ball(Region):
    center: np.ndarray
    radius: float

    def contains(self, x, ctx):
        x = np.asarray(x, dtype=float)
        return ctx.norm(x - np.asarray(self.center)) < self.radius

    def bbox(self, d):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True, eq=False)
class HalfBall(Region):
    """Open ball intersected with the open half-space above its center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def contains(self, x, ctx):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        return (ctx.norm(x - c) < self.radius) & (x[..., -1] > c[-1])

    def bbox(self, d):
        c = np.asarray(self.center, dtype=float)
        lo, hi = c - self.radius, c + self.radius
        lo = lo.copy()
        lo[-1] = c[-1]
        return lo, hi


@dataclass(frozen=True, eq=False)
class HalfSpace(Region):
    """``{x . e_d > level}`` when ``above`` else its (closed) complement."""

    level: float
    above: bool = True

    def contains(self, x, ctx):
        x = np.asarray(x, dtype=float)
        return x[..., -1] > self.level if self.above else x[..., -1] <= self.level

    def bbox(self, d):
        lo, hi = np.full(d, -INF), np.full(d, INF)
        if self.above:
            lo[-1] = self.level
        else:
            hi[-1] = self.level
        return lo, hi


@dataclass(frozen=True, eq=False)
class Box(Region):
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, x, ctx):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def bbox(self, d):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi, float) - np.asarray(self.lo, float)))


class Everything(Region):
    def contains(self, x, ctx):
        return np.ones(np.shape(x)[:-1], dtype=bool)


class Nothing(Region):
    def contains(self, x, ctx):
        return np.zeros(np.shape(x)[:-1], dtype=bool)

    def bbox(self, d):
        return np.zeros(d), np.zeros(d)


@dataclass(frozen=True, eq=False)
class Union(Region):
    parts: tuple

    def contains(self, x, ctx):
        out = np.zeros(np.shape(x)[:-1], dtype=bool)
        for r in self.parts:
            out |= r.contains(x, ctx)
        return out

    def bbox(self, d):
        if not self.parts:
            return np.zeros(d), np.zeros(d)
        boxes = [r.bbox(d) for r in self.parts]
        return (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))


@dataclass(frozen=True, eq=False)
class Intersection(Region):
    parts: tuple

    def contains(self, x, ctx):
        out = np.ones(np.shape(x)[:-1], dtype=bool)
        for r in self.parts:
            out &= r.contains(x, ctx)
        return out

    def bbox(self, d):
        boxes = [r.bbox(d) for r in self.parts]
        return (np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0))


@dataclass(frozen=True, eq=False)
class Difference(Region):
    keep: Region
    remove: Region

    def contains(self, x, ctx):
        return self.keep.contains(x, ctx) & ~self.remove.contains(x, ctx)

    def bbox(self, d):
        return self.keep.bbox(d)


def region_contains(region: Region, x, ctx: NormContext):
    out = region.contains(np.asarray(x, dtype=float), ctx)
    return bool(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------- sampling


def sample_lp_ball(n: int, dim: int, p: float, rng, radius=1.0, center=None):
    """``n`` uniform points of an open l^p ball in R^dim (rejection from the cube)."""
    ctx = NormContext(max(dim, 1), p)
    out = np.empty((0, dim))
    while out.shape[0] < n:
        need = n - out.shape[0]
        m = int(need * 1.3 * 2 ** dim) + 16
        cand = rng.uniform(-1.0, 1.0, size=(m, dim))
        if dim:
            cand = cand[ctx.norm(cand) < 1.0]
        out = np.vstack([out, cand[:need]])
    out = out * radius
    if center is not None:
        out = out + np.asarray(center, dtype=float)
    return out


def mc_measure(region: Region, box, n: int, seed, ctx: NormContext, batch: int = 1 << 18):
    """Monte Carlo volume of ``region`` inside the axis box ``(lo, hi)``.

    Returns ``(estimate, stderr)`` where the standard error is binomial.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    widths = hi - lo
    if lo.shape != (ctx.d,) or np.any(~np.isfinite(widths)) or np.any(widths <= 0):
        raise ValueError("degenerate or unbounded sampling box")
    if n < 1:
        raise ValueError("n must be >= 1")
    vol = float(np.prod(widths))
    rng = np.random.default_rng(seed)
    hits = 0
    left = n
    while left:
        m = min(left, batch)
        pts = lo + widths * rng.random((m, ctx.d))
        hits += int(np.count_nonzero(region.contains(pts, ctx)))
        left -= m
    f = hits / n
    return vol * f, vol * math.sqrt(f * (1.0 - f) / n)


@lru_cache(maxsize=None)
def unit_ball_volumes(d: int, p: float, n: int = 2_000_000, seed: int = 12345):
    """MC estimates ``(|B(0,1)|, |B^+(0,1)|)`` with their standard errors."""
    ctx = NormContext(d, p)
    full = mc_measure(Ball(np.zeros(d), 1.0), (-np.ones(d), np.ones(d)), n, seed, ctx)
    lo = -np.ones(d)
    lo[-1] = 0.0
    half = mc_measure(HalfBall(np.zeros(d), 1.0), (lo, np.ones(d)), n, seed + 1, ctx)
    return full, half


def empty_ball_check(d: int, p: float, n_configs: int, n_points: int, seed,
                     chunk: int = 200, radius=None) -> int:
    """Count sampled points of ``B(e_d, alpha_p)`` falling in an admissible ball ``B(c, r)``.

    Admissible means ``c . e_d <= 0``, ``r <= |c|`` and ``c . e_d + r <= 1``.  Half
    of the radii are taken at the largest admissible value, where tangency is
    tightest.  The expected return value is 0; ``radius`` overrides ``alpha_p``
    (a larger radius serves as a negative control).
    """
    ctx = NormContext(d, p)
    a = alpha_p(p) if radius is None else float(radius)
    gen = np.random.default_rng(seed)
    ed = np.zeros(d)
    ed[-1] = 1.0
    bad = 0
    done = 0
    while done < n_configs:
        m = min(chunk, n_configs - done)
        c = np.empty((m, d))
        c[:, :-1] = gen.uniform(-3.0, 3.0, size=(m, d - 1))
        c[:, -1] = -gen.exponential(1.0, size=m) * (gen.random(m) < 0.8)
        # tight family: |c| = r = 1 - c . e_d, both constraints binding
        tight = gen.random(m) < 0.5
        y = -c[tight, -1]
        u = gen.normal(size=(int(tight.sum()), d - 1))
        u /= NormContext(max(d - 1, 1), p).norm(u)[:, None]
        s = ((1.0 + y) ** p - y ** p) ** (1.0 / p)
        c[tight, :-1] = u * s[:, None]
        rmax = np.minimum(ctx.norm(c), 1.0 - c[:, -1])
        r = np.where(tight | (gen.random(m) < 0.5), rmax, rmax * gen.random(m))
        pts = sample_lp_ball(m * n_points, d, p, gen, radius=a, center=ed).reshape(m, n_points, d)
        inside = ctx.norm(pts - c[:, None, :]) < r[:, None]
        bad += int(np.count_nonzero(inside))
        done += m
    return bad
