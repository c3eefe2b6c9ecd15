"""Partitions of center configurations with witness balls.

Given centers ``c_1..c_k`` on the hyperplane ``x . e_d = 0`` we build a
partition of the indices and, for every part ``pi``, a ball that lies inside
every upper half-ball of the part and outside every ball of the other indices.
Everything that has to hold exactly is checked in rational arithmetic for
``p`` in {1, 2, inf}; other exponents fall back to high-precision floats.

Indices are 0-based throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import mpmath
import numpy as np

from .lpgeom import NormContext, sample_lp_ball, unit_ball_volumes

mpmath.mp.dps = 100


class PartitionError(RuntimeError):
    """A guarantee that the construction promises did not hold."""


def c_k_constants(k: int) -> list[Fraction]:
    """``C_1 = 1`` and ``C_{n+1} = (1 + 1/(n+1)) (C_n + 1)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = [Fraction(1)]
    for n in range(1, k):
        out.append((1 + Fraction(1, n + 1)) * (out[-1] + 1))
    return out


def _mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _frac_vec(v) -> tuple:
    return tuple(x if isinstance(x, Fraction) else Fraction(x) for x in v)


def as_config(config) -> list[tuple]:
    """Centers as tuples of Fractions (floats are converted exactly)."""
    if isinstance(config, np.ndarray):
        config = config.tolist()
    cfg = [_frac_vec(c) for c in config]
    if cfg and any(c[-1] != 0 for c in cfg):
        raise ValueError("centers must have last coordinate exactly 0")
    return cfg


class ExactNorm:
    """l^p distances in the "powered" form ``|v|^p`` (``|v|`` for p = inf).

    Comparisons between sums of norms are exact for ``p`` in {1, 2, inf}.
    """

    def __init__(self, p):
        self.p = float(p)
        self.exact = self.p in (1.0, 2.0) or math.isinf(self.p)

    def pow(self, v):
        if math.isinf(self.p):
            return max(abs(x) for x in v)
        if self.p == 1.0:
            return sum(abs(x) for x in v)
        if self.p == 2.0:
            return sum(x * x for x in v)
        return sum(mpmath.power(abs(_mp(x)), self.p) for x in v)

    def root(self, a):
        """``|v|`` from ``|v|^p`` as an mpf (for reporting and non-exact routes)."""
        if math.isinf(self.p) or self.p == 1.0:
            return _mp(a)
        if self.p == 2.0:
            return mpmath.sqrt(_mp(a))
        return mpmath.power(_mp(a), 1 / mpmath.mpf(self.p))

    def power(self, x: Fraction):
        """``x^p`` for a nonnegative scalar."""
        if math.isinf(self.p) or self.p == 1.0:
            return x
        if self.p == 2.0:
            return x * x
        return mpmath.power(_mp(x), self.p)

    def le_sum(self, a, b, xi) -> bool:
        """``|u| <= |v| + xi`` given ``a = |u|^p``, ``b = |v|^p`` and ``xi >= 0``."""
        if math.isinf(self.p) or self.p == 1.0:
            return a <= b + xi
        if self.p == 2.0:
            lhs = a - b - xi * xi
            if lhs <= 0:
                return True
            return lhs * lhs <= 4 * xi * xi * b
        return self.root(a) <= self.root(b) + _mp(xi)

    def le_const(self, a, t) -> bool:
        """``|u| <= t`` given ``a = |u|^p`` and ``t >= 0``."""
        if t < 0:
            return False
        if math.isinf(self.p) or self.p == 1.0:
            return a <= t
        if self.p == 2.0:
            return a <= t * t
        return self.root(a) <= _mp(t)

    def ge_const(self, a, t) -> bool:
        if t <= 0:
            return True
        if math.isinf(self.p) or self.p == 1.0:
            return a >= t
        if self.p == 2.0:
            return a >= t * t
        return self.root(a) >= _mp(t)


def _sub(u, v):
    return tuple(a - b for a, b in zip(u, v))


def barycenter(cfg, idx) -> tuple:
    n = len(idx)
    return tuple(sum(cfg[i][s] for i in idx) / n for s in range(len(cfg[0])))


def radius_pow(cfg, idx, en: ExactNorm, center=None):
    c = barycenter(cfg, idx) if center is None else center
    return max(en.pow(_sub(cfg[i], c)) for i in idx)


# --------------------------------------------------------------------------- clustering


def grow_cluster(config, i0: int, xi, ctx: NormContext) -> tuple:
    """Grow a cluster from ``i0`` by repeatedly absorbing the smallest index within
    ``r_pi + xi`` of the current barycenter.

    The result satisfies ``r_pi <= C_k xi`` and ``|c_j - c_pi| > r_pi + xi`` for
    every ``j`` outside; both are checked (exactly for p in {1, 2, inf}).
    """
    cfg = as_config(config)
    k = len(cfg)
    xi = Fraction(xi)
    if xi <= 0:
        raise ValueError("xi must be positive")
    if not 0 <= i0 < k:
        raise ValueError("i0 out of range")
    en = ExactNorm(ctx.p)
    pi = [i0]
    while True:
        c = barycenter(cfg, pi)
        r = radius_pow(cfg, pi, en, c)
        cand = [j for j in range(k) if j not in pi and en.le_sum(en.pow(_sub(cfg[j], c)), r, xi)]
        if not cand:
            break
        pi.append(min(cand))
    pi = tuple(sorted(pi))
    _check_cluster(cfg, pi, xi, en)
    return pi


def _check_cluster(cfg, pi, xi, en):
    k = len(cfg)
    ck = c_k_constants(k)[-1]
    c = barycenter(cfg, pi)
    r = radius_pow(cfg, pi, en, c)
    if not en.le_const(r, ck * xi):
        raise PartitionError("cluster radius exceeds C_k xi")
    for j in range(k):
        if j not in pi and en.le_sum(en.pow(_sub(cfg[j], c)), r, xi):
            raise PartitionError("cluster is not separated")


def group_partition(config, delta, ctx: NormContext):
    """Partition with ``r_pi <= delta`` and ``|c_j - c_pi| > r_pi + eps`` for ``j`` outside.

    Returns
    -------
    (parts, eps) with ``eps = delta / (C_k (2 C_k)^k)``.
    """
    cfg = as_config(config)
    k = len(cfg)
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    ck = c_k_constants(k)[-1]
    en = ExactNorm(ctx.p)
    xi = delta / ck
    parts: list[tuple] = []
    covered: set = set()
    while len(covered) < k:
        i_n = min(set(range(k)) - covered)
        xi = xi / (2 * ck)
        pi = grow_cluster(cfg, i_n, xi, ctx)
        if covered & set(pi):
            raise PartitionError("clusters overlap")
        parts.append(pi)
        covered |= set(pi)
    eps = delta / (ck * (2 * ck) ** k)
    check_group_partition(cfg, parts, delta, eps, en)
    return parts, eps


def check_group_partition(cfg, parts, delta, eps, en: ExactNorm):
    k = len(cfg)
    check_is_partition(parts, k)
    for pi in parts:
        c = barycenter(cfg, pi)
        r = radius_pow(cfg, pi, en, c)
        if not en.le_const(r, delta):
            raise PartitionError("part radius exceeds delta")
        for j in range(k):
            if j not in pi and en.le_sum(en.pow(_sub(cfg[j], c)), r, eps):
                raise PartitionError("part is not eps-separated")


def check_is_partition(parts, k: int):
    flat = [i for pi in parts for i in pi]
    if sorted(flat) != list(range(k)) or any(len(pi) == 0 for pi in parts):
        raise PartitionError("not a partition of the index set")


# --------------------------------------------------------------------------- dimension one


@dataclass
class Dim1Partition:
    parts: list            # tuples of original indices
    pieces: list           # (lo, hi) Fractions per part
    order: list            # original indices sorted by center

    @property
    def lengths(self):
        return [hi - lo for lo, hi in self.pieces]

    @property
    def min_length(self) -> Fraction:
        return min(self.lengths)

    def midpoints(self):
        return [(lo + hi) / 2 for lo, hi in self.pieces]


def _piece(sc, a, b):
    """Interval of points in every unit ball of the sorted range ``[a, b]`` and in no other."""
    k = len(sc)
    lo = sc[b] - 1
    hi = sc[a] + 1
    if a > 0:
        lo = max(lo, sc[a - 1] + 1)
    if b < k - 1:
        hi = min(hi, sc[b + 1] - 1)
    return lo, max(lo, hi)


def dim1_partition(centers) -> Dim1Partition:
    """Contiguous partition of sorted 1-D centers with every piece of length ``>= 2/k!``.

    Parts are chosen greedily: the ``t``-th part starts right after the previous
    one and ends at the first index whose piece reaches ``2 / (k (k-1) ... (k-t+1))``.
    """
    vals = [Fraction(c) for c in centers]
    k = len(vals)
    if k == 0:
        raise ValueError("need at least one center")
    order = sorted(range(k), key=lambda i: (vals[i], i))
    sc = [vals[i] for i in order]
    parts, pieces = [], []
    start = 0
    thresh = Fraction(2)
    t = 0
    while start < k:
        thresh = thresh / (k - t)
        for b in range(start, k):
            lo, hi = _piece(sc, start, b)
            if hi - lo >= thresh:
                break
        else:
            raise PartitionError("no admissible piece found")
        parts.append(tuple(order[i] for i in range(start, b + 1)))
        pieces.append((lo, hi))
        start = b + 1
        t += 1
    res = Dim1Partition(parts, pieces, order)
    if res.min_length < Fraction(2, math.factorial(k)):
        raise PartitionError("piece shorter than 2/k!")
    return res


# --------------------------------------------------------------------------- witness balls


@dataclass
class BallWitness:
    """Partition with a center per part and a common radius ``eta`` (all exact)."""

    parts: list
    alphas: list
    eta: Fraction
    eps: Fraction | None = None


def eta_for_eps(eps: Fraction, p, delta: Fraction) -> Fraction:
    """Configuration-free radius for the finite-p witness.

    Start at ``eps / 2`` and halve until both perturbation bounds hold,
    ``p l (1+l)^{p-1} + l^p < (eps/2)^p`` and ``(eps - l)^p - l^p >= (eps/2)^p``,
    and ``l`` is below the minimal witness height; then halve once more.
    """
    en = ExactNorm(p)
    half = eps / 2
    target = en.power(half)
    h_min = 1 - en.power(delta + half)

    def ok(l):
        if en.exact:
            pp = int(p)
            inside = pp * l * (1 + l) ** (pp - 1) + l ** pp < target
            outside = (eps - l) ** pp - l ** pp >= target
            low = l ** pp < h_min
        else:
            lm = _mp(l)
            em = _mp(eps)
            pm = mpmath.mpf(p)
            inside = pm * lm * (1 + lm) ** (pm - 1) + lm ** pm < target
            outside = (em - lm) ** pm - lm ** pm >= target
            low = lm ** pm < h_min
        return inside and outside and low

    l = half
    while not ok(l):
        l /= 2
    return l / 2


def _to_frac(x) -> Fraction:
    m, e = mpmath.mpf(x).man_exp
    return Fraction(int(m)) * (Fraction(2) ** int(e))


def ball_witness_finite_p(cfg, ctx: NormContext, delta=Fraction(1, 4)) -> BallWitness:
    """Witness balls for unit half-balls, finite p: cluster, then lift the barycenter."""
    parts, eps = group_partition(cfg, delta, ctx)
    en = ExactNorm(ctx.p)
    eta = eta_for_eps(eps, ctx.p, Fraction(delta))
    pm = mpmath.mpf(ctx.p)
    alphas = []
    for pi in parts:
        c = barycenter(cfg, pi)
        r = en.root(radius_pow(cfg, pi, en, c))
        e2 = _mp(eps) / 2
        h = (1 - (r + e2) ** pm) ** (1 / pm)
        alphas.append(c[:-1] + (_to_frac(h),))
    return BallWitness(parts, alphas, eta, eps)


def ball_witness_inf(cfg, ctx: NormContext) -> BallWitness:
    """Witness balls for p = inf: meet of the per-coordinate 1-D partitions."""
    k = len(cfg)
    d = len(cfg[0])
    per_coord = [dim1_partition([c[s] for c in cfg]) for s in range(d - 1)]
    label = {}
    for i in range(k):
        key = tuple(next(t for t, pi in enumerate(res.parts) if i in pi) for res in per_coord)
        label.setdefault(key, []).append(i)
    parts, alphas = [], []
    for key, members in sorted(label.items(), key=lambda kv: min(kv[1])):
        parts.append(tuple(members))
        mids = [per_coord[s].midpoints()[key[s]] for s in range(d - 1)]
        alphas.append(tuple(mids) + (Fraction(1, 2),))
    return BallWitness(parts, alphas, Fraction(1, 2 * math.factorial(k)))


def ball_witness(config, ctx: NormContext, delta=Fraction(1, 4)) -> BallWitness:
    cfg = as_config(config)
    if ctx.is_inf:
        return ball_witness_inf(cfg, ctx)
    return ball_witness_finite_p(cfg, ctx, delta)


def certify_ball(cfg, w: BallWitness, ctx: NormContext) -> bool:
    """Exact sufficient check of ``B(alpha, eta)`` inside every own half-ball, outside other balls."""
    en = ExactNorm(ctx.p)
    eta = w.eta
    for pi, a in zip(w.parts, w.alphas):
        if a[-1] < eta:
            return False
        for i in range(len(cfg)):
            dp = en.pow(_sub(a, cfg[i]))
            if i in pi:
                if not en.le_const(dp, 1 - eta):
                    return False
            elif not en.ge_const(dp, 1 + eta):
                return False
    return True


# --------------------------------------------------------------------------- combinatorial step


@dataclass
class PartitionWitness:
    parts: list
    centers: list                  # witness centers in original coordinates (floats)
    radius: float                  # witness ball radius in original coordinates (2 kappa)
    constants: dict
    certified: bool
    mc: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return self.certified and self.mc.get("all_inside", True)

    def to_json(self) -> str:
        return json.dumps({"partition": [list(p) for p in self.parts], "centers": self.centers,
                           "radius": self.radius, "constants": self.constants,
                           "certified": self.certified, "mc": self.mc}, indent=2)


def witness_scale(k: int, ctx: NormContext, kappa, delta=Fraction(1, 4)):
    """``(eta, R_0 = 4 kappa / eta, eps)`` for configurations of ``k`` centers."""
    kappa = Fraction(kappa)
    if ctx.is_inf:
        eta = Fraction(1, 2 * math.factorial(k))
        eps = None
    else:
        ck = c_k_constants(k)[-1]
        eps = Fraction(delta) / (ck * (2 * ck) ** k)
        eta = eta_for_eps(eps, ctx.p, Fraction(delta))
    return eta, 4 * kappa / eta, eps


def _in_scaled_target(z, cfg_s, pi, eta, en: ExactNorm) -> bool:
    """Exact membership of ``z`` in the rescaled target set (own half-balls minus lowered balls)."""
    if z[-1] <= 0:
        return False
    low = Fraction(0)
    for i, c in enumerate(cfg_s):
        if i in pi:
            if not (en.le_const(en.pow(_sub(z, c)), Fraction(1)) and
                    not en.ge_const(en.pow(_sub(z, c)), Fraction(1))):
                return False
        else:
            shifted = c[:-1] + (c[-1] - eta / 4,)
            if not en.ge_const(en.pow(_sub(z, shifted)), 1 + eta / 4):
                return False
    return True


def combinatorial_witness(config, kappa, ctx: NormContext, n_mc: int = 64, seed=0,
                          delta=Fraction(1, 4)) -> PartitionWitness:
    """Partition and balls of radius ``2 kappa`` inside each part's target set.

    The target set of a part is the intersection of ``B^+(c_i, R_0)`` over the
    part minus ``B(c_j - kappa e_d, kappa + R_0)`` over the other indices.  The
    construction runs on ``c / R_0`` with unit balls, shrinks the witness radius
    from ``eta`` to ``eta/2`` and scales back.  The witness is certified by exact
    triangle-inequality bounds and by exact membership of ``n_mc`` uniform
    points of the witness ball.
    """
    cfg = as_config(config)
    k = len(cfg)
    kappa = Fraction(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    eta, R0, eps = witness_scale(k, ctx, kappa, delta)
    cfg_s = [tuple(x / R0 for x in c) for c in cfg]
    w = ball_witness(cfg_s, ctx, delta)
    if w.eta != eta:
        raise PartitionError("witness radius is not configuration-free")
    en = ExactNorm(ctx.p)
    certified = certify_ball(cfg_s, w, ctx)
    # shrink step: B(alpha, eta/2) must avoid B(c_j - (eta/4) e_d, 1 + eta/4)
    for pi, a in zip(w.parts, w.alphas):
        for i, c in enumerate(cfg_s):
            if i in pi:
                certified &= en.le_const(en.pow(_sub(a, c)), 1 - eta / 2) and a[-1] >= eta / 2
            else:
                shifted = c[:-1] + (c[-1] - eta / 4,)
                certified &= en.ge_const(en.pow(_sub(a, shifted)), 1 + eta / 4 + eta / 2)
    mc = {}
    if n_mc > 0:
        gen = np.random.default_rng(seed)
        inside = 0
        total = 0
        for pi, a in zip(w.parts, w.alphas):
            u = sample_lp_ball(n_mc, ctx.d, ctx.p, gen)
            for row in u:
                z = tuple(ai + (eta / 2) * Fraction(float(x)) for ai, x in zip(a, row))
                inside += _in_scaled_target(z, cfg_s, pi, eta, en)
                total += 1
        frac = inside / total
        se = math.sqrt(frac * (1 - frac) / total)
        mc = {"n": total, "inside": inside, "fraction": frac, "stderr": se,
              "all_inside": inside == total, "passes_4sigma": frac + 4 * se >= 1.0}
    (vb, _), _ = unit_ball_volumes(ctx.d, ctx.p)
    radius = float(2 * kappa)
    consts = {"k": k, "C_k": float(c_k_constants(k)[-1]), "delta": float(delta),
              "eps": None if eps is None else float(eps), "eta": float(eta), "R0": float(R0),
              "a0": vb * radius ** ctx.d}
    centers = [[float(x * R0) for x in a] for a in w.alphas]
    return PartitionWitness(w.parts, centers, radius, consts, bool(certified), mc)


def random_config(k: int, d: int, gen: np.random.Generator, scale=1.0, cluster_scale=None):
    """Random centers on ``x . e_d = 0``; some are near-duplicates to exercise clustering."""
    pts = np.zeros((k, d))
    pts[:, :-1] = gen.uniform(-2.0, 2.0, size=(k, d - 1))
    for i in range(1, k):
        if gen.random() < 0.4:
            j = int(gen.integers(0, i))
            cs = cluster_scale if cluster_scale is not None else 10.0 ** gen.uniform(-12, 0)
            pts[i, :-1] = pts[j, :-1] + gen.normal(size=d - 1) * cs
    cfg = [tuple(Fraction(float(x)) * Fraction(scale) for x in row[:-1]) + (Fraction(0),)
           for row in pts]
    return cfg
