"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Sizes and tolerances are the pinned acceptance values; the long runs are
marked ``slow`` but are part of the default run.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from dsflab import experiments as ex
from dsflab.domination import (alpha_curve, single_ball_history, counterexample_verify,
                               ecdf_dominance, monotone_violations, random_h0, sample_X_many,
                               section_inclusion_test)
from dsflab.exploration import (Explorer, area_bound_check, block_stats, calibrate_kappa,
                                independent_process)
from dsflab.lpgeom import NormContext, empty_ball_check
from dsflab.partition import (PartitionError, as_config, combinatorial_witness, dim1_partition,
                              group_partition, grow_cluster, random_config, witness_scale)
from dsflab.ppp import PointStore
from dsflab.cli import main as cli_main
from dsflab.rng import derive_seed

INF = math.inf
Z = 4.0


def test_criterion_01_counterexample():
    t0 = time.perf_counter()
    rep = counterexample_verify()
    dt = time.perf_counter() - t0
    ok = (rep.lifted_cube_sum == Fraction(11527, 216) and rep.base_cube == Fraction(3473, 64)
          and rep.lifted_cube_sum < 54 and rep.base_cube > 54 and rep.passed and dt < 1.0)
    record_criterion(1, ok, f"lifted={rep.lifted_cube_sum} base={rep.base_cube} vs 54, {dt:.3f}s")
    assert ok


@pytest.mark.slow
def test_criterion_02_empty_ball():
    bad, worst = {}, 0.0
    for d in (2, 3):
        for p in (1.0, 1.5, 2.0, 3.0):
            t0 = time.perf_counter()
            seed = derive_seed(2, str(d), str(p))
            bad[(d, p)] = empty_ball_check(d, p, 10 ** 4, 10 ** 3, seed=seed)
            worst = max(worst, time.perf_counter() - t0)
    total = sum(bad.values())
    ok = total == 0 and worst < 60.0
    record_criterion(2, ok, f"violations={total} over 8 (d,p), slowest (d,p) {worst:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_03_section_inclusion():
    grid = [(d, p) for p in (1.0, 2.0, INF) for d in (2, 3)] + [(2, 1.5), (2, 4.0)]
    viol = 0
    for gi, (d, p) in enumerate(grid):
        ctx = NormContext(d, p)
        gen = np.random.default_rng(1000 + gi)
        for i in range(10 ** 3):
            H = random_h0(d, ctx, gen)
            h, hp = sorted(gen.uniform(0.0, 0.99, 2))[::-1]
            seed = derive_seed(3, gi, i)
            viol += len(section_inclusion_test(H, h, hp, ctx, 10 ** 3, seed))
    c3 = NormContext(3, 3.0)
    x0 = np.array([[0.75, -0.5, 0.0]])
    found = len(section_inclusion_test(single_ball_history(), 2 / 3, 0.0, c3, 0, 0, points=x0)) == 1
    ok = viol == 0 and found
    record_criterion(3, ok, f"violations={viol} over {len(grid)}x1000 (H,h,h'); "
                            f"reference point violation found={found}")
    assert ok


@pytest.mark.slow
def test_criterion_04_stochastic_dominance():
    worst, fails = -INF, 0
    for d in (2, 3):
        for p in (1.0, 2.0, INF):
            ctx = NormContext(d, p)
            gen = np.random.default_rng(40 + d)
            Hs = [random_h0(d, ctx, gen) for _ in range(20)]
            (X0, _), = sample_X_many([None], ctx, derive_seed(4, str(d), str(p), "empty"), 10 ** 5)
            res = sample_X_many(Hs, ctx, derive_seed(4, str(d), str(p), "hist"), 10 ** 5)
            for X, _ in res:
                cmp = ecdf_dominance(X[:, -1], X0[:, -1], z=Z)
                worst = max(worst, cmp.max_violation_z)
                fails += not cmp.passed
    ok = fails == 0
    record_criterion(4, ok, f"histories with a z>{Z:g} violation: {fails}/120, max z={worst:.2f}")
    assert ok


@pytest.mark.slow
def test_criterion_05_alpha_monotone():
    hs = np.linspace(0.0, 0.95, 20)
    bad = 0
    for d in (2, 3):
        for p in (1.0, 2.0, INF):
            ctx = NormContext(d, p)
            gen = np.random.default_rng(50 + d)
            for i in range(20):
                H = random_h0(d, ctx, gen)
                est, se = alpha_curve(H, hs, ctx, 10 ** 4, seed=derive_seed(5, str(d), str(p), i))
                bad += len(monotone_violations(est, se, z=Z))
    c4 = NormContext(3, 4.0)
    est, se = alpha_curve(single_ball_history(3, 4), [0.0, 0.9], c4, 10 ** 6, 7)
    sep = (est[0] - est[1]) / math.hypot(se[0], se[1])
    ok = bad == 0 and sep >= Z
    record_criterion(5, ok, f"4-sigma decreases={bad} over 120 curves; (3,4) single-ball "
                            f"alpha0={est[0]:.4f} alpha0.9={est[1]:.4f} separation={sep:.1f} sigma")
    assert ok


@pytest.mark.slow
def test_criterion_06_exploration_invariants():
    totals = {"emptiness": 0, "monotone": 0, "boundary": 0, "renewal_psi": 0}
    steps = renewals = 0
    for k in (1, 2, 3):
        for d in (2, 3, 4):
            for p in (1.0, 2.0, INF):
                ctx = NormContext(d, p)
                kappa = calibrate_kappa(d, p, seed=1, n_steps=2000)
                store = PointStore(d, seed=derive_seed(6, k, d, str(p)), ctx=ctx)
                starts = ex.line_starts(k, d, 3.0)
                e = Explorer(store, starts, ctx, kappa=kappa, R=0.5, check=True)
                e.run(10 ** 4 // 9 + 1)
                steps += e.state.n
                if k == 1:
                    renewals += len(e.trace.beta)
                for key, v in e.violations.items():
                    totals[key] += v
    n_bad = sum(totals.values())
    ok = n_bad == 0 and steps >= 10 ** 4 and renewals > 0
    record_criterion(6, ok, f"violations={totals} over {steps} steps in 27 (k,d,p) runs, "
                            f"{renewals} k=1 renewals checked")
    assert ok


@pytest.mark.slow
def test_criterion_07_area_bounds():
    bad = checked = 0
    worst = INF
    for d in (2, 3):
        for p in (1.0, 2.0, INF):
            ctx = NormContext(d, p)
            store = PointStore(d, seed=70 + d, ctx=ctx)
            e = Explorer(store, ex.line_starts(2, d, 2.0), ctx)
            gen = np.random.default_rng(7 + d)
            for i in range(10 ** 3):
                e.step()
                ell = float(gen.uniform(0.0, 1.0))
                seed = derive_seed(7, str(d), str(p), i)
                res = area_bound_check(e.state, ell, 4000, seed, ctx, z=Z)
                checked += 1
                bad += not res.ok
                worst = min(worst, res.margin)
    ok = bad == 0
    record_criterion(7, ok, f"4-sigma violations={bad} over {checked} live states, "
                            f"min margin={worst:.3g}")
    assert ok


@pytest.mark.slow
def test_criterion_08_partition():
    grid = [(d, p) for d in (2, 3) for p in (1.0, 2.0, INF)]
    gen = np.random.default_rng(8)
    n_cfg = 10 ** 3
    cluster_fail = dim1_fail = witness_fail = 0
    for i in range(n_cfg):
        d, p = grid[i % len(grid)]
        ctx = NormContext(d, p)
        k = int(gen.integers(1, 6))
        cfg = random_config(k, d, gen)
        try:
            for i0 in range(k):
                grow_cluster(cfg, i0, Fraction(1, 2), ctx)
            group_partition(cfg, Fraction(1, 4), ctx)
        except PartitionError:
            cluster_fail += 1
        r = dim1_partition([c[0] for c in as_config(cfg)])
        dim1_fail += r.min_length < Fraction(2, math.factorial(k))
        _, R0, _ = witness_scale(k, ctx, 1)
        w = combinatorial_witness(random_config(k, d, gen, scale=R0), 1, ctx, n_mc=16, seed=i)
        witness_fail += not w.verified
    ok = cluster_fail == dim1_fail == witness_fail == 0
    record_criterion(8, ok, f"{n_cfg} configs: cluster/partition failures={cluster_fail}, "
                            f"dim1 short pieces={dim1_fail}, witness verified "
                            f"{n_cfg - witness_fail}/{n_cfg}")
    assert ok


@pytest.mark.slow
def test_criterion_09_coalescence_dichotomy():
    freqs = {}
    for p in (1.0, 2.0, INF):
        cfg = ex.ExperimentConfig(d=2, p=p, k=2, sep=5.0, horizon=1e4, reps=200, seed=9)
        freqs[p] = ex.coalescence_summary(ex.coalescence_run(cfg))["frequency"]
    low = {}
    for sep in (5.0, 50.0):
        cfg = ex.ExperimentConfig(d=4, p=2.0, k=3, sep=sep, horizon=100.0, reps=200, seed=90)
        s = ex.coalescence_summary(ex.coalescence_run(cfg))
        low[sep] = s["frequency"]
    zgap = ex.proportion_gap_z(low[5.0], 200, low[50.0], 200)
    cfg = ex.ExperimentConfig(d=4, p=2.0, k=3, sep=50.0, horizon=1e4, reps=100, seed=91)
    _, esc = ex.escape_run(cfg)
    ok = all(f >= 0.95 for f in freqs.values()) and esc["escaped"] > 0 and \
        low[50.0] < low[5.0] and zgap >= Z
    record_criterion(9, ok, "d=2 freq " + ", ".join(f"p={p:g}:{f:.3f}" for p, f in freqs.items())
                     + f"; d=4 escaped {esc['escaped']}/100; height-100 freq sep5={low[5.0]:.3f} "
                       f"sep50={low[50.0]:.3f} z={zgap:.1f}")
    assert ok


@pytest.mark.slow
def test_criterion_10_coalescence_tail():
    selftest = ex.synthetic_tail_selftest(seed=0)
    cfg = ex.ExperimentConfig(d=2, p=2.0, k=2, sep=2.0, horizon=1e4, reps=400, seed=10)
    recs = ex.coalescence_run(cfg)
    T = [r["T"] for r in recs if r["coalesced"]]
    fit = ex.coalescence_tail(T, censored=len(recs) - len(T), horizon=cfg.horizon, seed=10)
    ok = selftest["passed"] and fit.within(-0.65, -0.35)
    record_criterion(10, ok, f"self-test={selftest['passed']}; slope={fit.slope:.3f} "
                             f"CI=({fit.ci[0]:.3f},{fit.ci[1]:.3f}) window=({fit.window[0]:.3g},"
                             f"{fit.window[1]:.3g}) uncensored={fit.n_obs}")
    assert ok


@pytest.mark.slow
def test_criterion_11_block_tail():
    ctx = NormContext(2, 2.0)
    e = Explorer(PointStore(2, seed=11, ctx=ctx), np.zeros((1, 2)), ctx, kappa=0.26, R=0.5)
    e.run(30_000)
    W, _ = block_stats(e.trace)
    slope, ci = ex.block_tail(W, seed=11)
    ok = len(W) >= 10 ** 3 and slope < 0 and ci[1] < 0
    record_criterion(11, ok, f"{len(W)} blocks, slope={slope:.3f} CI=({ci[0]:.3f},{ci[1]:.3f})")
    assert ok


@pytest.mark.slow
def test_criterion_12_independent_symmetry():
    ctx = NormContext(3, INF)
    deltas, bound_bad, incomplete = [], 0, 0
    for i in range(10 ** 4):
        tr = independent_process(2, 0.2, 0.5, 5000, seed=derive_seed(12, i), ctx=ctx)
        if not tr.complete:
            incomplete += 1
            continue
        dlt = np.asarray(tr.delta[(0, 1)], float)
        bound_bad += bool(np.max(np.abs(dlt)) > tr.W + 1e-9)
        deltas.append(dlt[:2])
    D = np.array(deltas)
    n = len(D)
    zmeans = np.abs(D.mean(axis=0)) / (D.std(axis=0, ddof=1) / math.sqrt(n))
    half = n // 2
    p_flip = stats.ks_2samp(D[:half, 0], -D[half:2 * half, 0]).pvalue
    p_swap = stats.ks_2samp(D[:half, 0], D[half:2 * half, 1]).pvalue
    ok = bool(np.all(zmeans <= Z)) and p_flip > 0.01 and p_swap > 0.01 and bound_bad == 0
    record_criterion(12, ok, f"{n} complete ({incomplete} incomplete); |mean|/se="
                             f"{zmeans.round(2).tolist()}; KS p sign-flip={p_flip:.3f} "
                             f"swap={p_swap:.3f}; norm>W in {bound_bad}")
    assert ok


def test_criterion_13_determinism(tmp_path):
    runs = {
        "coalesce": ["coalesce", "--d", "2", "--p", "2", "--sep", "5", "--reps", "10", "--seed", "42"],
        "explore": ["explore", "--horizon", "300", "--check"],
        "partition": ["partition", "--configs", "3"],
    }
    same = True
    for name, args in runs.items():
        for tag in ("a", "b"):
            assert cli_main(["--seed", "13", "--out", str(tmp_path / name / tag)] + args) == 0
        for fname in ("manifest.json", "records.jsonl", "summary.json"):
            same &= (tmp_path / name / "a" / fname).read_bytes() == \
                (tmp_path / name / "b" / fname).read_bytes()
    record_criterion(13, same, f"byte-identical outputs for {sorted(runs)}")
    assert same
