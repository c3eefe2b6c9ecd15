"""Joint exploration of k DSF trajectories with explicit history sets.

The exploration always advances the lowest head (ties go to the lowest
trajectory index; coincident heads move together).  The history is the union
of the emptied half-balls ``B^+(x, |Psi(x) - x|)`` clipped above the current
bottom level ``m``.  On top of the raw dynamics this module detects good steps
(``L <= kappa`` after at least ``kappa + R`` of vertical progress) and renewal
steps, and implements the auxiliary process in which each trajectory lives in
its own conditioned environment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as _rng
from .lpgeom import (Ball, HalfBall, HalfSpace, Intersection, NormContext, Region,
                     alpha_p, mc_measure, unit_ball_volumes)
from .ppp import PointStore

# relative slack for the closed-ball test; points this close to a sphere have
# probability ~1e-12 per query and every head is also excluded by identity
CLOSED_SLACK = 1e-12
BOUNDARY_TOL = 1e-9


class HistorySet(Region):
    """``H^+(m)`` intersected with a union of half-balls whose centers are below ``m``.

    Parameters
    ----------
    d : int
        Dimension.
    level : float
        Bottom level ``m``.
    """

    def __init__(self, d: int, level: float = 0.0, centers=None, radii=None):
        self.d = d
        self.level = float(level)
        self.centers = np.empty((0, d)) if centers is None else np.asarray(centers, float).reshape(-1, d)
        self.radii = np.empty(0) if radii is None else np.asarray(radii, float).ravel()
        self.prune()

    def copy(self) -> "HistorySet":
        return HistorySet(self.d, self.level, self.centers.copy(), self.radii.copy())

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def tops(self) -> np.ndarray:
        return self.centers[:, -1] + self.radii

    def add(self, center, radius: float):
        self.centers = np.vstack([self.centers, np.asarray(center, float)[None, :]])
        self.radii = np.append(self.radii, float(radius))

    def set_level(self, level: float):
        if level < self.level:
            raise ValueError("history level cannot decrease")
        self.level = float(level)
        self.prune()

    def prune(self):
        keep = self.tops > self.level
        if not keep.all():
            self.centers = self.centers[keep]
            self.radii = self.radii[keep]

    def height(self) -> float:
        """``max(0, sup{x_d - m : x in H})``."""
        if not len(self.radii):
            return 0.0
        return max(0.0, float(self.tops.max()) - self.level)

    def _dist(self, x, ctx):
        x = np.asarray(x, float)
        return ctx.norm(x[..., None, :] - self.centers)

    def contains(self, x, ctx):
        x = np.asarray(x, float)
        if not len(self.radii):
            return np.zeros(x.shape[:-1], bool)
        inside = (self._dist(x, ctx) < self.radii) & (x[..., None, -1] > self.centers[:, -1])
        return inside.any(axis=-1) & (x[..., -1] > self.level)

    def contains_closed(self, x, ctx):
        """Membership in the closure (closed balls, ``x_d >= m``)."""
        x = np.asarray(x, float)
        if not len(self.radii):
            return np.zeros(x.shape[:-1], bool)
        inside = (self._dist(x, ctx) <= self.radii * (1 + CLOSED_SLACK)) & \
                 (x[..., None, -1] >= self.centers[:, -1])
        return inside.any(axis=-1) & (x[..., -1] >= self.level)

    def closure(self) -> Region:
        return _Closure(self)

    def boundary_distance(self, x, ctx) -> float:
        """Smallest ``| |x - c| - r |`` over balls lying below ``x``."""
        x = np.asarray(x, float)
        ok = self.centers[:, -1] < x[-1]
        if not ok.any():
            return math.inf
        return float(np.abs(ctx.norm(x - self.centers[ok]) - self.radii[ok]).min())

    def bbox(self, d=None):
        d = self.d
        if not len(self.radii):
            return np.full(d, self.level), np.full(d, self.level)
        lo = (self.centers - self.radii[:, None]).min(axis=0)
        hi = (self.centers + self.radii[:, None]).max(axis=0)
        lo[-1] = self.level
        return lo, hi

    def to_dict(self) -> dict:
        return {"level": self.level, "centers": self.centers.tolist(), "radii": self.radii.tolist()}


class _Closure(Region):
    def __init__(self, hist: HistorySet):
        self.hist = hist

    def contains(self, x, ctx):
        return self.hist.contains_closed(x, ctx)

    def bbox(self, d):
        return self.hist.bbox(d)


# --------------------------------------------------------------------------- state


@dataclass
class ExplorationState:
    """Current heads, history and levels of the joint exploration."""

    heads: np.ndarray
    history: HistorySet
    n: int = 0
    m: float = 0.0
    M: float = 0.0
    L: float = 0.0
    total_length: float = 0.0
    last_x: np.ndarray | None = None
    last_psi: np.ndarray | None = None
    last_movers: tuple = ()

    @property
    def k(self) -> int:
        return self.heads.shape[0]

    @property
    def d(self) -> int:
        return self.heads.shape[1]

    def lowest(self) -> int:
        return int(np.argmin(self.heads[:, -1]))

    def n_distinct_heads(self) -> int:
        return len(np.unique(self.heads, axis=0))

    def copy(self) -> "ExplorationState":
        return ExplorationState(self.heads.copy(), self.history.copy(), self.n, self.m, self.M,
                                self.L, self.total_length, self.last_x, self.last_psi,
                                self.last_movers)


def initial_state(starts) -> ExplorationState:
    """Exploration state at step 0; all starting points must share their e_d coordinate."""
    heads = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    if not np.all(heads[:, -1] == heads[0, -1]):
        raise ValueError("starting points must share the same e_d coordinate")
    m = float(heads[0, -1])
    return ExplorationState(heads, HistorySet(heads.shape[1], m), 0, m, m, 0.0)


def explore_step(state: ExplorationState, store: PointStore, ctx: NormContext) -> ExplorationState:
    """Advance the lowest head by one DSF edge (mutates and returns ``state``)."""
    heads = state.heads
    i = state.lowest()
    x = heads[i].copy()
    movers = np.flatnonzero(np.all(heads == x, axis=1))
    above = heads[heads[:, -1] > x[-1]]
    y, dy = store.nearest_above(x, mask=state.history.closure(), ctx=ctx,
                                exclude_points=above if len(above) else None, return_distance=True)
    psi, r = y, dy
    if len(above):
        dist = ctx.norm(above - x)
        j = int(np.argmin(dist))
        if dist[j] < r:
            psi, r = above[j].copy(), float(dist[j])
    state.history.add(x, r)
    heads[movers] = psi
    state.m = float(heads[:, -1].min())
    state.history.set_level(state.m)
    state.M = max(state.M, state.m, x[-1] + r)
    state.L = state.M - state.m
    state.total_length += r
    state.n += 1
    state.last_x, state.last_psi, state.last_movers = x, psi.copy(), tuple(int(v) for v in movers)
    return state


# --------------------------------------------------------------------------- good steps / renewals


def good_step_scan(L, m, kappa: float, R: float) -> list[int]:
    """Greedy scan for good steps; ``tau_0 = 0`` is always included."""
    if kappa <= 0 or R <= 0:
        raise ValueError("kappa and R must be positive")
    L = np.asarray(L, float)
    m = np.asarray(m, float)
    taus = [0]
    for j in range(1, len(L)):
        if L[j] <= kappa and m[j] - m[taus[-1]] >= kappa + R:
            taus.append(j)
    return taus


def renewal_region_count(store: PointStore, g, level: float, kappa: float, R: float,
                         history: HistorySet, exclude, ctx: NormContext):
    """Points of ``B^+(g_down, kappa+R)`` outside the closed history (and not in ``exclude``).

    Returns ``(n_big, n_small)``: the count in the big half-ball and how many of
    those lie in ``B^+(g_up, R)``.
    """
    g_down = np.asarray(g, float).copy()
    g_down[-1] = level
    g_up = g_down.copy()
    g_up[-1] = level + kappa
    big = HalfBall(g_down, kappa + R)
    lo, hi = big.bbox(store.d)
    pts = store.points_in_box(lo, hi)
    if len(pts):
        pts = pts[big.contains(pts, ctx)]
    if len(pts):
        pts = pts[~history.contains_closed(pts, ctx)]
    if len(pts) and exclude is not None and len(exclude):
        same = (pts[:, None, :] == np.asarray(exclude)[None, :, :]).all(axis=2).any(axis=1)
        pts = pts[~same]
    n_small = int(np.count_nonzero(HalfBall(g_up, R).contains(pts, ctx))) if len(pts) else 0
    return len(pts), n_small


def renewal_detect(state: ExplorationState, store: PointStore, kappa: float, R: float,
                   ctx: NormContext) -> bool:
    """Joint renewal event at the current (good) step.

    For every head, exactly one point of the process lies in
    ``B^+(g_down, kappa + R)`` outside the closed history, and it lies in
    ``B^+(g_up, R)`` where ``g_down``/``g_up`` are the head projected to levels
    ``m`` and ``m + kappa``.
    """
    if state.L > kappa:
        raise ValueError("renewal_detect requires a good step (L <= kappa)")
    above = state.heads[state.heads[:, -1] > state.m]
    for g in np.unique(state.heads, axis=0):
        n_big, n_small = renewal_region_count(store, g, state.m, kappa, R, state.history, above, ctx)
        if not (n_big == 1 and n_small == 1):
            return False
    return True


@dataclass
class RenewalTrace:
    """Good steps, renewal steps and the data needed for block statistics."""

    tau: list = field(default_factory=lambda: [0])
    beta: list = field(default_factory=list)
    tau_levels: list = field(default_factory=list)
    beta_heads: list = field(default_factory=list)
    beta_length: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "beta": self.beta,
                "beta_heads": [np.asarray(h).tolist() for h in self.beta_heads],
                "beta_length": self.beta_length}


def block_stats(trace: RenewalTrace):
    """Block sizes ``W`` between consecutive renewals and lateral head differences ``Z``.

    Returns
    -------
    W : ndarray, shape (n_beta - 1,)
        Sum of step lengths between consecutive renewal steps.
    Z : ndarray, shape (n_beta, k, k, d - 1)
        ``Z[n, i, j]`` is the first d-1 coordinates of ``g_i - g_j`` at renewal ``n``.
    """
    if len(trace.beta) < 2:
        raise ValueError("need at least two renewal steps")
    W = np.diff(np.asarray(trace.beta_length, float))
    heads = np.asarray(trace.beta_heads, float)[..., :-1]
    Z = heads[:, :, None, :] - heads[:, None, :, :]
    return W, Z


# --------------------------------------------------------------------------- driver


class Explorer:
    """Exploration process with online good-step and renewal detection.

    Parameters
    ----------
    store : PointStore
    starts : array_like, shape (k, d)
    ctx : NormContext
    kappa, R : float, optional
        Good-step threshold and renewal radius.  Without ``kappa`` no good
        steps are tracked.
    check : bool
        Assert the per-step invariants (emptiness, monotonicity, heads on the
        boundary, renewal consistency) and count violations.
    record : bool
        Keep one dict per step for JSON-lines export.
    """

    def __init__(self, store, starts, ctx, kappa=None, R=1.0, check=False, record=False):
        self.store = store
        self.ctx = ctx
        self.state = initial_state(starts)
        self.kappa = kappa
        self.R = R
        self.check = check
        self.record = record
        self.trace = RenewalTrace(tau_levels=[self.state.m])
        self.records: list[dict] = []
        self.violations: dict[str, int] = {"emptiness": 0, "monotone": 0, "boundary": 0,
                                           "renewal_psi": 0}
        self.m_hist = [self.state.m]
        self.L_hist = [self.state.L]
        self._pending_psi = None
        self.n_renewal_checks = 0

    @property
    def k(self):
        return self.state.k

    def step(self):
        st = self.state
        m0, M0 = st.m, st.M
        explore_step(st, self.store, self.ctx)
        self.m_hist.append(st.m)
        self.L_hist.append(st.L)
        if self._pending_psi is not None:
            if not np.array_equal(st.last_psi, self._pending_psi):
                self.violations["renewal_psi"] += 1
            self._pending_psi = None
        good = renewal = False
        if self.kappa is not None and st.L <= self.kappa and \
                st.m - self.trace.tau_levels[-1] >= self.kappa + self.R:
            good = True
            self.trace.tau.append(st.n)
            self.trace.tau_levels.append(st.m)
            self.n_renewal_checks += 1
            renewal = renewal_detect(st, self.store, self.kappa, self.R, self.ctx)
            if renewal:
                self.trace.beta.append(st.n)
                self.trace.beta_heads.append(st.heads.copy())
                self.trace.beta_length.append(st.total_length)
                if st.k == 1:
                    g_up = st.heads[0].copy()
                    g_up[-1] = st.m + self.kappa
                    self._pending_psi = self.store.nearest_above(g_up, ctx=self.ctx)
        if self.check:
            self._check(m0, M0)
        if self.record:
            self.records.append({"n": st.n, "x_n": st.last_x.tolist(), "psi": st.last_psi.tolist(),
                                 "m": st.m, "M": st.M, "L": st.L, "good": good,
                                 "renewal": renewal})
        return good, renewal

    def run(self, n_steps: int, stop: Callable[["Explorer"], bool] | None = None) -> int:
        """Take up to ``n_steps`` steps; ``stop(self)`` is evaluated after each one."""
        for i in range(n_steps):
            self.step()
            if stop is not None and stop(self):
                return i + 1
        return n_steps

    def _check(self, m0, M0):
        st, ctx = self.state, self.ctx
        if st.m < m0 or st.M < M0 or st.L < 0:
            self.violations["monotone"] += 1
        if len(st.history):
            lo, hi = st.history.bbox()
            pts = self.store.points_in_box(lo, hi)
            if len(pts) and st.history.contains(pts, ctx).any():
                self.violations["emptiness"] += 1
        for h in st.heads:
            if h[-1] > st.m and st.history.boundary_distance(h, ctx) >= BOUNDARY_TOL:
                self.violations["boundary"] += 1

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    def summary(self) -> dict:
        return {"steps": self.state.n, "k": self.k, "kappa": self.kappa, "R": self.R,
                "m": self.state.m, "M": self.state.M, "L": self.state.L,
                "n_good": len(self.trace.tau) - 1, "n_renewal": len(self.trace.beta),
                "violations": dict(self.violations)}


def calibrate_kappa(d: int, p, seed: int = 0, n_steps: int = 10_000, k: int = 1,
                    quantile: float = 0.8) -> float:
    """Default good-step threshold: the given quantile of ``L_n`` over a pilot run."""
    ctx = NormContext(d, p)
    store = PointStore(d, seed=_rng.derive_seed(seed, "kappa-pilot"), ctx=ctx)
    starts = np.zeros((k, d))
    starts[:, 0] = 3.0 * np.arange(k)
    ex = Explorer(store, starts, ctx)
    ex.run(n_steps)
    return float(np.quantile(ex.L_hist[1:], quantile))


# --------------------------------------------------------------------------- area bounds


@dataclass
class AreaCheck:
    ok: bool
    estimate: float
    stderr: float
    bound: float
    margin: float


def area_constant(d: int, p) -> float:
    """``min{(alpha_p/2)^d |B(0,1)|, |B^+(0,1)|}`` with MC ball volumes."""
    (vb, _), (vh, _) = unit_ball_volumes(d, float(p))
    return min((alpha_p(p) / 2.0) ** d * vb, vh)


def area_bound_check(state: ExplorationState, ell: float, n_mc: int, seed, ctx: NormContext,
                     z: float = 4.0) -> AreaCheck:
    """Compare ``|B^+(x_n, L_n + ell) minus H_n|`` with the deterministic lower bound."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    x = state.heads[state.lowest()]
    L = state.L
    rad = L + ell
    if ctx.is_inf:
        bound = ell * rad ** (ctx.d - 1)
    else:
        bound = area_constant(ctx.d, ctx.p) * max(ell, L) ** ctx.d
    if rad <= 0:
        return AreaCheck(True, 0.0, 0.0, bound, 0.0)
    region = HalfBall(x, rad) - state.history
    est, se = mc_measure(region, HalfBall(x, rad).bbox(ctx.d), n_mc, seed, ctx)
    margin = est + z * se - bound
    return AreaCheck(margin >= 0, est, se, bound, margin)


# --------------------------------------------------------------------------- independent process


@dataclass
class IndependentTrace:
    """Outcome of the independent-environment process."""

    zeta: int
    complete: bool
    positions: np.ndarray
    W: float
    delta: dict
    L: np.ndarray

    def to_dict(self) -> dict:
        return {"zeta": self.zeta, "complete": self.complete, "W": self.W,
                "positions": self.positions.tolist(), "L": self.L.tolist(),
                "delta": {f"{i},{j}": v.tolist() for (i, j), v in self.delta.items()}}


REJECTION_CAP = 10 ** 6


def conditioned_environment(d: int, kappa: float, R: float, seed: int, ctx: NormContext,
                            intensity: float = 1.0) -> PointStore:
    """Poisson environment conditioned on one point in ``D`` which lies in ``B^+(0, R)``.

    ``D = B(-kappa e_d, kappa + R) cap H^+(0)`` contains ``B^+(0, R)``, so the
    conditioned law is: no background point in ``D`` plus one uniform point of
    ``B^+(0, R)``.  The uniform point is drawn by rejection from the bounding box.
    """
    low = np.zeros(d)
    low[-1] = -kappa
    D = Intersection((Ball(low, kappa + R), HalfSpace(0.0)))
    store = PointStore(d, seed=_rng.derive_seed(seed, "background"), intensity=intensity,
                       exclude=D, ctx=ctx)
    gen = np.random.default_rng(_rng.derive_seed(seed, "inject"))
    target = HalfBall(np.zeros(d), R)
    lo, hi = target.bbox(d)
    attempts = 0
    while attempts < REJECTION_CAP:
        cand = lo + (hi - lo) * gen.random((256, d))
        ok = np.flatnonzero(target.contains(cand, ctx))
        if len(ok):
            attempts += int(ok[0]) + 1
            store.add_points(cand[ok[0]])
            return store
        attempts += 256
    raise RuntimeError("rejection sampler exceeded its attempt cap")


def independent_process(k: int, kappa: float, R: float, n_max: int, seed: int,
                        ctx: NormContext) -> IndependentTrace:
    """Run ``k`` trajectories from the origin in independent conditioned environments.

    Stops at the first step where the minimum level is at least ``R``, every
    individual history height is at most ``kappa`` and every trajectory
    satisfies its individual renewal condition; otherwise after ``n_max`` steps
    (flagged incomplete).
    """
    d = ctx.d
    envs = [conditioned_environment(d, kappa, R, _rng.derive_seed(seed, "env", i), ctx)
            for i in range(k)]
    pos = np.zeros((k, d))
    hists = [HistorySet(d, 0.0) for _ in range(k)]
    W = 0.0
    n = 0
    complete = False
    while True:
        m = float(pos[:, -1].min())
        for h in hists:
            h.set_level(m)
        if m >= R and all(h.height() <= kappa for h in hists):
            ok = True
            for i in range(k):
                nb, ns = renewal_region_count(envs[i], pos[i], m, kappa, R, hists[i],
                                              pos[i:i + 1] if pos[i, -1] > m else None, ctx)
                if not (nb == 1 and ns == 1):
                    ok = False
                    break
            if ok:
                complete = True
                break
        if n >= n_max:
            break
        i = int(np.argmin(pos[:, -1]))
        y, r = envs[i].nearest_above(pos[i], ctx=ctx, return_distance=True)
        hists[i].add(pos[i].copy(), r)
        pos[i] = y
        W += r
        n += 1
    delta = {}
    if complete:
        for i in range(k):
            for j in range(i + 1, k):
                delta[(i, j)] = pos[i, :-1] - pos[j, :-1]
    L = np.array([h.height() for h in hists])
    return IndependentTrace(n, complete, pos, W, delta, L)
