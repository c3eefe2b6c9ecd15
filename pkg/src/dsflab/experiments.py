"""Experiment harness: coalescence, escape, drift, scaling and audits.

Every experiment is a pure function of its configuration and base seed.
Replicate ``i`` draws its environment from ``derive_seed(seed, tag, i)``, and
summaries are computed from records sorted by replicate id, so reruns are
byte-identical and independent of completion order.
"""

from __future__ import annotations

import configparser
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from . import __version__
from . import rng as _rng
from .exploration import Explorer, block_stats, calibrate_kappa
from .lpgeom import NormContext
from .ppp import PointStore


class InsufficientDataError(ValueError):
    """Not enough observations for the requested statistic."""


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; every field is also a CLI flag and config key."""

    d: int = 2
    p: float = 2.0
    k: int = 2
    sep: float = 5.0
    horizon: float = 1000.0
    max_steps: int = 0
    reps: int = 10
    seed: int = 0
    kappa: float = 0.0
    R: float = 1.0
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.d < 1 or self.k < 1:
            raise ValueError("d and k must be >= 1")
        self.p = float(self.p)

    @property
    def ctx(self) -> NormContext:
        return NormContext(self.d, self.p)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["p"] = "inf" if math.isinf(self.p) else self.p
        return out


def _coerce(name: str, value):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    t = types.get(name)
    if t in ("int", int):
        return int(float(value))
    if t in ("float", float):
        return float(value)
    return value


def load_config_file(path) -> dict:
    """Read a flat ``key = value`` file (``#`` comments allowed)."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    return dict(cp["run"])


def make_config(values: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)} - {"extra"}
    kw, extra = {}, {}
    for key, val in values.items():
        key = key.replace("-", "_")
        if key in known:
            kw[key] = _coerce(key, val)
        else:
            extra[key] = val
    return ExperimentConfig(**kw, extra=extra)


def resolve_kappa(cfg: ExperimentConfig) -> float:
    """``cfg.kappa`` if positive, else the 80% quantile of ``L_n`` over a pilot run."""
    if cfg.kappa > 0:
        return cfg.kappa
    return calibrate_kappa(cfg.d, cfg.p, seed=cfg.seed, n_steps=3000)


def run_replicates(fn, cfg: ExperimentConfig, n: int | None = None) -> list[dict]:
    """``fn(cfg, i)`` for every replicate, sorted by replicate id."""
    ids = range(cfg.reps if n is None else n)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(fn, [cfg] * len(ids), ids))
    else:
        out = [fn(cfg, i) for i in ids]
    return sorted(out, key=lambda r: r["rep"])


# --------------------------------------------------------------------------- output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_outputs(out, command: str, cfg: ExperimentConfig | dict, records: list[dict],
                  summary: dict, tables: dict | None = None):
    """Write ``manifest.json``, ``records.jsonl``, ``summary.json`` and CSV tables."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    conf = cfg.to_dict() if isinstance(cfg, ExperimentConfig) else cfg
    manifest = {"command": command, "config": conf, "seed": conf.get("seed"),
                "version": __version__}
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2,
                                                  sort_keys=True) + "\n")
    with open(out / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2,
                                                 sort_keys=True) + "\n")
    for name, (header, rows) in (tables or {}).items():
        with open(out / f"{name}.csv", "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating))
                                  else str(v) for v in row) + "\n")


# --------------------------------------------------------------------------- coalescence


def line_starts(k: int, d: int, sep: float) -> np.ndarray:
    """``k`` points at height 0 spaced by ``sep`` along ``e_1``."""
    s = np.zeros((k, d))
    if d > 1:
        s[:, 0] = sep * np.arange(k)
    return s


def _default_max_steps(cfg: ExperimentConfig) -> int:
    return cfg.max_steps if cfg.max_steps > 0 else int(50 * cfg.k * (cfg.horizon + 10))


def coalescence_replicate(cfg: ExperimentConfig, i: int, sep=None) -> dict:
    """Joint exploration until two heads share a vertex or the minimum head passes the horizon.

    ``T`` is the height of the first common vertex (0 for identical starts).
    """
    sep = cfg.sep if sep is None else sep
    ctx = cfg.ctx
    store = PointStore(cfg.d, seed=_rng.derive_seed(cfg.seed, "coalesce", i), ctx=ctx)
    starts = line_starts(cfg.k, cfg.d, sep)
    ex = Explorer(store, starts, ctx)
    rec = {"rep": i, "sep": sep, "coalesced": False, "T": None, "steps": 0}
    if ex.state.n_distinct_heads() < cfg.k:
        rec.update(coalesced=True, T=0.0)
        return rec
    limit = _default_max_steps(cfg)
    while ex.state.m < cfg.horizon and ex.state.n < limit:
        ex.step()
        if ex.state.n_distinct_heads() < cfg.k:
            rec.update(coalesced=True, T=float(ex.state.last_psi[-1]))
            break
    rec["steps"] = ex.state.n
    rec["height"] = ex.state.m
    return rec


def _coalesce_fn(cfg, i):
    return coalescence_replicate(cfg, i)


def coalescence_run(cfg: ExperimentConfig) -> list[dict]:
    return run_replicates(_coalesce_fn, cfg)


def proportion(flags):
    flags = np.asarray(flags, dtype=float)
    n = len(flags)
    f = float(flags.mean()) if n else float("nan")
    return f, math.sqrt(max(f * (1 - f), 0.0) / n) if n else float("nan")


def coalescence_summary(records: list[dict]) -> dict:
    recs = sorted(records, key=lambda r: r["rep"])
    f, se = proportion([r["coalesced"] for r in recs])
    T = [r["T"] for r in recs if r["coalesced"]]
    return {"reps": len(recs), "coalesced": int(sum(r["coalesced"] for r in recs)),
            "frequency": f, "stderr": se, "median_T": float(np.median(T)) if T else None,
            "mean_steps": float(np.mean([r["steps"] for r in recs]))}


def proportion_gap_z(f1, n1, f2, n2) -> float:
    """z statistic of ``f1 - f2`` with the pooled binomial standard error."""
    pool = (f1 * n1 + f2 * n2) / (n1 + n2)
    se = math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    if se == 0:
        return math.inf if f1 > f2 else (0.0 if f1 == f2 else -math.inf)
    return (f1 - f2) / se


@dataclass
class TailFit:
    slope: float
    ci: tuple
    window: tuple
    n_obs: int
    n_censored: int

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi

    def to_dict(self) -> dict:
        return {"slope": self.slope, "ci": list(self.ci), "window": list(self.window),
                "n_obs": self.n_obs, "n_censored": self.n_censored}


def _survival(sorted_obs, n_total, t):
    return (n_total - np.searchsorted(sorted_obs, t, side="right")) / n_total


def _loglog_slope(obs, n_total, grid):
    s = _survival(obs, n_total, grid)
    ok = s > 0
    if ok.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.log(grid[ok]), np.log(s[ok]), 1)[0])


def coalescence_tail(T, censored: int = 0, horizon: float = math.inf, n_grid: int = 20,
                     n_boot: int = 200, seed: int = 0, min_obs: int = 200) -> TailFit:
    """Log-log slope of the empirical survival of ``T`` over its central decade.

    Censored replicates (no coalescence before the horizon) count as survivors
    at every ``t``.  The window is the decade centred (geometrically) on the
    sample median (censored values ranked last), with its upper end capped at
    80% of the horizon so that censoring never enters the window.  The CI is a 95% percentile bootstrap over replicates.
    """
    obs = np.sort(np.asarray([t for t in T if t is not None], dtype=float))
    obs = obs[obs > 0]
    if len(obs) < min_obs:
        raise InsufficientDataError(f"need >= {min_obs} uncensored times, got {len(obs)}")
    n_total = len(obs) + censored
    allv = np.concatenate([obs, np.full(censored, np.inf)])
    med = float(np.median(allv))
    if not math.isfinite(med):
        raise InsufficientDataError("more than half of the observations are censored")
    lo, hi = med / math.sqrt(10), med * math.sqrt(10)
    hi = min(hi, 0.8 * horizon)
    if hi <= lo:
        raise InsufficientDataError("empty fitting window")
    grid = np.geomspace(lo, hi, n_grid)
    slope = _loglog_slope(obs, n_total, grid)
    gen = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        sample = gen.choice(allv, size=n_total, replace=True)
        fin = np.sort(sample[np.isfinite(sample)])
        boots.append(_loglog_slope(fin, n_total, grid))
    boots = np.asarray(boots)
    boots = boots[np.isfinite(boots)]
    ci = (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975)))
    return TailFit(slope, ci, (lo, hi), len(obs), censored)


def synthetic_tail_selftest(n: int = 2000, seed: int = 0) -> dict:
    """Power-law ``P(T > t) = t^{-1/2}`` must fit near -1/2; exponential must not."""
    gen = np.random.default_rng(seed)
    power = coalescence_tail(gen.random(n) ** -2.0, seed=seed)
    expo = coalescence_tail(gen.exponential(1.0, n), seed=seed)
    ok = power.ci[0] <= -0.5 <= power.ci[1] and power.within(-0.65, -0.35) and \
        not expo.within(-0.65, -0.35)
    return {"passed": bool(ok), "power": power.to_dict(), "exponential": expo.to_dict()}


# --------------------------------------------------------------------------- escape


def growth_exponent(ns, dist, n_boot: int = 200, seed: int = 0):
    """Slope of ``log RMS(dist)`` against ``log n``, with a bootstrap 95% CI.

    ``dist`` has shape (replicates, len(ns)).
    """
    ns = np.asarray(ns, dtype=float)
    dist = np.asarray(dist, dtype=float)
    ok = ns > 0

    def fit(rows):
        rms = np.sqrt(np.mean(rows[:, ok] ** 2, axis=0))
        good = rms > 0
        if good.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(ns[ok][good]), np.log(rms[good]), 1)[0])

    slope = fit(dist)
    gen = np.random.default_rng(seed)
    boots = np.array([fit(dist[gen.integers(0, len(dist), len(dist))]) for _ in range(n_boot)])
    boots = boots[np.isfinite(boots)]
    ci = (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975))) if len(boots) \
        else (float("nan"), float("nan"))
    return slope, ci


def min_pairwise_lateral(heads: np.ndarray, ctx: NormContext) -> float:
    k = len(heads)
    if k < 2:
        return math.inf
    lat = heads[:, :-1]
    diff = lat[:, None, :] - lat[None, :, :]
    iu = np.triu_indices(k, 1)
    return float(NormContext(max(ctx.d - 1, 1), ctx.p).norm(diff[iu]).min())


def escape_replicate(cfg: ExperimentConfig, i: int) -> dict:
    """Run ``horizon`` exploration steps from a line configuration; track separations."""
    ctx = cfg.ctx
    n_steps = int(cfg.horizon)
    store = PointStore(cfg.d, seed=_rng.derive_seed(cfg.seed, "escape", i), ctx=ctx)
    ex = Explorer(store, line_starts(cfg.k, cfg.d, cfg.sep), ctx)
    checkpoints = sorted(set(np.unique(np.geomspace(1, max(n_steps, 1), 20).astype(int))))
    dists = []
    merged_at = None
    for n in range(1, n_steps + 1):
        ex.step()
        if merged_at is None and ex.state.n_distinct_heads() < cfg.k:
            merged_at = n
            break
        if n in checkpoints:
            dists.append(min_pairwise_lateral(ex.state.heads, ctx))
    return {"rep": i, "escaped": merged_at is None, "merged_at": merged_at,
            "checkpoints": [c for c in checkpoints if c <= n_steps][:len(dists)],
            "min_dist": dists, "steps": ex.state.n}


def escape_run(cfg: ExperimentConfig):
    """Non-coalescence frequency and growth exponent of the minimum pairwise distance."""
    recs = run_replicates(escape_replicate, cfg)
    f, se = proportion([r["escaped"] for r in recs])
    summary = {"reps": len(recs), "escaped": int(sum(r["escaped"] for r in recs)),
               "frequency": f, "stderr": se}
    full = [r for r in recs if r["escaped"] and len(r["min_dist"]) == len(r["checkpoints"])
            and r["checkpoints"]]
    if len(full) >= 2:
        ns = full[0]["checkpoints"]
        rows = np.array([r["min_dist"] for r in full if r["checkpoints"] == ns])
        slope, ci = growth_exponent(ns, rows, seed=cfg.seed)
        summary.update(growth_exponent=slope, growth_ci=list(ci))
    return recs, summary


# --------------------------------------------------------------------------- renewal processes


def V(z):
    """``log log(e + |z|_2^2)``, applied over the last axis."""
    z = np.asarray(z, dtype=float)
    return np.log(np.log(np.e + np.sum(z * z, axis=-1)))


def renewal_replicate(cfg: ExperimentConfig, i: int, kappa: float | None = None) -> dict:
    """Renewal-indexed lateral differences ``Z_n = g_1 - g_2`` and block sizes ``W``."""
    ctx = cfg.ctx
    kappa = resolve_kappa(cfg) if kappa is None else kappa
    store = PointStore(cfg.d, seed=_rng.derive_seed(cfg.seed, "renewal", i), ctx=ctx)
    starts = line_starts(cfg.k, cfg.d, cfg.sep)[::-1].copy()
    ex = Explorer(store, starts, ctx, kappa=kappa, R=cfg.R)
    ex.run(int(cfg.horizon), stop=lambda e: e.state.n_distinct_heads() < e.k)
    tr = ex.trace
    Z, W = [], []
    if len(tr.beta) >= 2:
        W, Zs = block_stats(tr)
        Z = Zs[:, 0, 1, :] if cfg.k > 1 else np.zeros((len(tr.beta), cfg.d - 1))
    elif len(tr.beta) == 1 and cfg.k > 1:
        h = tr.beta_heads[0]
        Z = (h[0, :-1] - h[1, :-1])[None, :]
    return {"rep": i, "kappa": kappa, "steps": ex.state.n, "n_renewal": len(tr.beta),
            "Z": np.asarray(Z).tolist(), "W": np.asarray(W).tolist()}


def block_tail(W, n_grid: int = 30, n_boot: int = 200, seed: int = 0):
    """Slope of ``log P(W > t)`` against ``sqrt(t)`` over the 5-95% quantile range, with CI."""
    W = np.sort(np.asarray(W, dtype=float))
    if len(W) < 20:
        raise InsufficientDataError("need at least 20 blocks")
    grid = np.quantile(W, np.linspace(0.05, 0.95, n_grid))

    def fit(w):
        s = _survival(w, len(w), grid)
        ok = s > 0
        return float(np.polyfit(np.sqrt(grid[ok]), np.log(s[ok]), 1)[0])

    slope = fit(W)
    gen = np.random.default_rng(seed)
    boots = np.array([fit(np.sort(gen.choice(W, len(W)))) for _ in range(n_boot)])
    return slope, (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975)))


@dataclass
class DriftEstimate:
    lo: float
    hi: float
    mean: float
    stderr: float
    count: int


def lyapunov_drift(Z_series, bins) -> list[DriftEstimate]:
    """Mean of ``V(Z_{n+1}) - V(Z_n)`` binned by ``|Z_n|_2``; empty bins are omitted.

    ``Z_series`` is a list of arrays of shape (n_renewals, d - 1), one per replicate.
    """
    z0, dv = [], []
    for Z in Z_series:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if len(Z) < 2:
            continue
        v = V(Z)
        z0.append(np.linalg.norm(Z[:-1], axis=1))
        dv.append(np.diff(v))
    if not z0:
        return []
    z0 = np.concatenate(z0)
    dv = np.concatenate(dv)
    out = []
    for lo, hi in zip(bins[:-1], bins[1:]):
        sel = (z0 >= lo) & (z0 < hi)
        c = int(sel.sum())
        if c == 0:
            continue
        x = dv[sel]
        se = float(x.std(ddof=1) / math.sqrt(c)) if c > 1 else float("inf")
        out.append(DriftEstimate(float(lo), float(hi), float(x.mean()), se, c))
    return out


@dataclass
class AuditReport:
    second_moment_ok: bool
    third_moment_ok: bool
    mean_on_F_ok: bool
    bins: list
    mean_on_F: float
    stderr_on_F: float
    n_on_F: int

    @property
    def passed(self) -> bool:
        return self.second_moment_ok and self.third_moment_ok and self.mean_on_F_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def assumption_audit(Z_series, W_series, kappa: float, R: float, n_bins: int = 4,
                     min_count: int = 10, third_factor: float = 5.0, z: float = 4.0) -> AuditReport:
    """Empirical check of the increment-moment conditions for ``Z`` in dimension two.

    Increments are binned by quartiles of ``|Z_n|`` (only ``Z_n != 0``; a merged
    pair stays merged).  Every bin's second moment must be positive and, within
    ``z`` standard errors, at least the pooled one divided by ``third_factor``;
    every bin's third absolute moment must stay below ``third_factor`` times the
    pooled one, again within ``z`` standard errors.  On the
    event ``2 max(W_{n+1}, kappa + R) < |Z_n|`` the mean increment must be
    within ``z`` standard errors of 0.
    """
    z0, dz, w = [], [], []
    for Z, W in zip(Z_series, W_series):
        Z = np.asarray(Z, dtype=float).reshape(len(Z), -1)[:, 0] if len(Z) else np.zeros(0)
        W = np.asarray(W, dtype=float)
        n = min(len(Z) - 1, len(W))
        if n <= 0:
            continue
        z0.append(Z[:n])
        dz.append(np.diff(Z)[:n])
        w.append(W[:n])
    if not z0:
        raise InsufficientDataError("no renewal increments")
    z0 = np.concatenate(z0)
    dz = np.concatenate(dz)
    w = np.concatenate(w)
    live = z0 != 0
    z0, dz, w = z0[live], dz[live], w[live]
    if len(z0) < n_bins * min_count:
        raise InsufficientDataError("too few increments for the requested bins")
    a = np.abs(z0)
    edges = np.quantile(a, np.linspace(0, 1, n_bins + 1))
    edges[-1] = np.inf
    pooled2 = float(np.mean(dz ** 2))
    pooled3 = float(np.mean(np.abs(dz) ** 3))
    bins, ok2, ok3 = [], True, True
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (a >= lo) & (a < hi)
        c = int(sel.sum())
        if c < min_count:
            continue
        m2 = dz[sel] ** 2
        m3 = np.abs(dz[sel]) ** 3
        s2 = float(m2.std(ddof=1) / math.sqrt(c))
        s3 = float(m3.std(ddof=1) / math.sqrt(c))
        ok2 &= bool(m2.mean() > 0 and m2.mean() + z * s2 >= pooled2 / third_factor)
        ok3 &= bool(m3.mean() - z * s3 <= third_factor * pooled3)
        bins.append({"lo": float(lo), "hi": float(hi), "count": c, "m2": float(m2.mean()),
                     "m2_se": s2, "m3": float(m3.mean()), "m3_se": s3})
    F = 2 * np.maximum(w, kappa + R) < a
    nF = int(F.sum())
    if nF >= 2:
        mF = float(dz[F].mean())
        sF = float(dz[F].std(ddof=1) / math.sqrt(nF))
        okF = abs(mF) <= z * sF if sF > 0 else mF == 0
    else:
        mF, sF, okF = float("nan"), float("nan"), False
    return AuditReport(ok2, ok3, bool(okF), bins, mF, sF, nF)


# --------------------------------------------------------------------------- scaled paths


@dataclass
class ScaledPath:
    """Piecewise-linear path ``t -> pi(gamma n^2 t) / (sigma n)`` sampled at its vertices."""

    start: float
    t: np.ndarray
    x: np.ndarray
    n: float
    gamma: float
    sigma: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(np.maximum(t, self.start), self.t, self.x)


def scale_path(points: np.ndarray, n: float, gamma: float, sigma: float) -> ScaledPath:
    h = points[:, -1] / (gamma * n * n)
    x = points[:, 0] / (sigma * n)
    return ScaledPath(float(h[0]), h, x, n, gamma, sigma)


def d_pi(a: ScaledPath, b: ScaledPath, grid) -> float:
    """Path distance evaluated as a supremum over ``grid`` (points below both starts skipped)."""
    grid = np.asarray(grid, dtype=float)
    g = grid[grid >= min(a.start, b.start)]
    term = abs(math.tanh(a.start) - math.tanh(b.start))
    if len(g) == 0:
        return term
    diff = np.abs(np.tanh(a(g)) - np.tanh(b(g))) / (1 + np.abs(g))
    return max(term, float(diff.max()))


def d_pi_matrix(paths, step: float = 1e-3, t_max: float | None = None):
    """Pairwise distances on a common grid (all starts included as grid points)."""
    starts = np.array([p.start for p in paths])
    t_end = min(p.t[-1] for p in paths) if t_max is None else t_max
    grid = np.union1d(np.arange(starts.min(), t_end + step / 2, step), starts)
    grid = grid[grid <= t_end]
    m = len(paths)
    D = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            D[i, j] = D[j, i] = d_pi(paths[i], paths[j], grid)
    return D


def metric_violations(D, tol: float = 1e-9) -> int:
    """Symmetry and triangle-inequality violations of a distance matrix."""
    D = np.asarray(D)
    bad = int(np.count_nonzero(np.abs(D - D.T) > tol))
    # tri[i, j, k]: D[i, k] > D[i, j] + D[j, k]
    tri = D[:, None, :] > D[:, :, None] + D[None, :, :] + tol
    return bad + int(np.count_nonzero(tri))


def calibrate_scaling(d: int, p, seed: int, n_traj: int = 400, height: float = 200.0):
    """Measure ``gamma`` (steps per unit height) and the lateral variance rate per unit height.

    Returns ``(gamma, sigma)`` with ``sigma^2 = gamma * D`` where ``D`` is the
    lateral variance per unit height, so that the scaled path has unit variance
    at ``t = 1``.
    """
    ctx = NormContext(d, p)
    steps, disp = [], []
    for i in range(n_traj):
        store = PointStore(d, seed=_rng.derive_seed(seed, "calib", i), ctx=ctx)
        x = np.zeros(d)
        n = 0
        while x[-1] < height:
            x = store.nearest_above(x, ctx=ctx)
            n += 1
        steps.append(n / x[-1])
        disp.append(x[0] ** 2 / x[-1])
    gamma = float(np.mean(steps))
    D = float(np.mean(disp))
    return gamma, math.sqrt(gamma * D)


def scaled_paths(cfg: ExperimentConfig, n_scale: float, gamma: float, sigma: float,
                 n_paths: int = 8, step: float = 1e-3, t_max: float = 1.0,
                 common_start: bool = False):
    """Trajectories from evenly spaced points of a window, scaled, with pairwise ``d_Pi``.

    Start points are the Poisson points reached first from ``n_paths`` lateral
    positions spread over ``[0, sigma n]`` at height 0.  With ``common_start``
    the paths start at those positions themselves, so all start times are 0;
    the distance only satisfies the triangle inequality in that case (distinct
    start times can break it by a margin of order the start-time spread).
    """
    if cfg.d != 2:
        raise ValueError("scaled paths are defined for d = 2")
    ctx = cfg.ctx
    store = PointStore(2, seed=_rng.derive_seed(cfg.seed, "scale"), ctx=ctx)
    target = gamma * n_scale ** 2 * t_max
    paths = []
    for j, x0 in enumerate(np.linspace(0, sigma * n_scale, n_paths)):
        u = np.array([x0, 0.0])
        start = u if common_start else store.nearest_above(u, ctx=ctx)
        pts = [start]
        x = start
        while x[-1] < target:
            x = store.nearest_above(x, ctx=ctx)
            pts.append(x)
        paths.append(scale_path(np.array(pts), n_scale, gamma, sigma))
    D = d_pi_matrix(paths, step=step, t_max=t_max)
    return paths, D


def scaled_variance(d: int, p, gamma: float, sigma: float, n_scale: float, reps: int,
                    seed: int) -> tuple:
    """Variance of ``pi(gamma n^2) / (sigma n)`` for paths started at the origin."""
    ctx = NormContext(d, p)
    vals = []
    for i in range(reps):
        store = PointStore(d, seed=_rng.derive_seed(seed, "scalevar", i), ctx=ctx)
        pts = trajectory_until(store, np.zeros(d), gamma * n_scale ** 2, ctx)
        path = scale_path(pts, n_scale, gamma, sigma)
        vals.append(float(path(1.0)))
    vals = np.asarray(vals)
    v = float(vals.var(ddof=1))
    se = v * math.sqrt(2.0 / (reps - 1))
    return v, se


def trajectory_until(store: PointStore, start, height: float, ctx: NormContext) -> np.ndarray:
    x = np.asarray(start, dtype=float)
    pts = [x]
    while x[-1] < height:
        x = store.nearest_above(x, ctx=ctx)
        pts.append(x)
    return np.array(pts)


__all__ = [
    "ExperimentConfig", "load_config_file", "make_config", "resolve_kappa", "run_replicates",
    "write_outputs", "coalescence_run", "coalescence_replicate", "coalescence_summary",
    "coalescence_tail", "synthetic_tail_selftest", "proportion", "proportion_gap_z",
    "escape_run", "growth_exponent", "V", "lyapunov_drift", "renewal_replicate", "block_tail",
    "assumption_audit", "ScaledPath", "scale_path", "d_pi", "d_pi_matrix", "metric_violations",
    "calibrate_scaling", "scaled_paths", "scaled_variance", "trajectory_until",
]
