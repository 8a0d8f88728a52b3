"""Acceptance criteria 1-12.

Each test prints one ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line with the measured values (shown even without ``-s``), then asserts.
Criteria that cannot be met are strict xfails: they print FAIL, and an
unexpected pass turns the run red.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from ridgecusum import ObservationMatrix, gplimit
from ridgecusum.baselines import (
    calibrate_mc,
    linf_cusum,
    make_statistic,
    null_statistics,
)
from ridgecusum.bench import (
    CovarianceModel,
    Design,
    ExperimentConfig,
    Method,
    SignalModel,
    binomial_se,
    make_sigma,
    resolve_methods,
    run_power_experiment,
    run_size_experiment,
)
from ridgecusum.detect import recursive_detect
from ridgecusum.mp import PSDModel, solve_mp
from ridgecusum.scan import grid_time_triples, scan
from ridgecusum.spectral import RidgeContext, eigendecompose, pooled_covariance, stieltjes_estimates
from ridgecusum.tuning import PriorSpec, population_asnr, select_minimax_population

from oracles import direct_d_values


@pytest.fixture()
def report(capsys):
    def _report(k, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        return ok

    return _report


@pytest.fixture(scope="module")
def mc_dense_table(tmp_path_factory):
    return gplimit.simulate_sup_quantiles("MC_DENSE", 0.1, B=20000, alphas=(0.05,), seed=1,
                                          cache_dir=tmp_path_factory.mktemp("acc_q"), resolution=100)


# ---------------------------------------------------------------- 1-2 quantile tables


def test_criterion_01_sc_quantiles(report):
    t0 = time.perf_counter()
    tab = gplimit.simulate_sup_quantiles("SC", 0.1, m=1000, B=20000, alphas=(0.1, 0.05, 0.01), seed=1)
    elapsed = time.perf_counter() - t0
    target = {0.1: 2.6890, 0.05: 2.9745, 0.01: 3.5235}
    dev = {a: tab.quantiles[a] - v for a, v in target.items()}
    ok = all(abs(d) <= 0.04 for d in dev.values()) and elapsed < 120
    got = ", ".join(f"xi({1 - a:.2f})={tab.quantiles[a]:.4f} (target {v})" for a, v in target.items())
    assert report(1, ok, f"{got}; runtime {elapsed:.1f}s (target < 120s)")


def test_criterion_02_mc_grid_quantiles(report):
    n1, n2 = len(grid_time_triples(0.1)), len(grid_time_triples(0.05))
    q1 = gplimit.simulate_sup_quantiles("MC_GRID", 0.1, B=20000, alphas=(0.05,), seed=1).quantiles[0.05]
    q2 = gplimit.simulate_sup_quantiles("MC_GRID", 0.05, B=20000, alphas=(0.05,), seed=1).quantiles[0.05]
    ok = n1 == 165 and n2 == 1330 and abs(q1 - 3.1871) <= 0.05 and abs(q2 - 3.6293) <= 0.05
    assert report(2, ok, f"eps=0.1: {n1} triples, xi(.95)={q1:.4f} (target 3.1871); "
                         f"eps=0.05: {n2} triples, xi(.95)={q2:.4f} (target 3.6293)")


# ---------------------------------------------------------------- 3 size


def test_criterion_03_empirical_size(report, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(p=100, n=200, reps=1000, methods=("ridge:SC", "ridge:MC"), seed=2024,
                           dense_resolution=100)
    size = run_size_experiment(cfg, cache_dir=tmp_path)
    elapsed = time.perf_counter() - t0
    sc, mc = size["ridge:SC"], size["ridge:MC"]
    ok = 0.033 <= sc <= 0.072 and 0.030 <= mc <= 0.075 and elapsed < 1200
    assert report(3, ok, f"size T_sc={sc:.3f} (band [0.033, 0.072]), T_mc={mc:.3f} (band [0.030, 0.075]); "
                         f"runtime {elapsed:.0f}s single worker")


# ---------------------------------------------------------------- 4-7 random-matrix checks


def test_criterion_04_mp_closed_form(report):
    sol = solve_mp(1.0, 1.0, PSDModel.point(1.0))
    err = abs(sol.phi - (math.sqrt(5) - 1) / 2)
    worst = 0.0
    for lam in (0.1, 0.3, 1.0, 3.0, 10.0):
        for c in (0.25, 0.5, 1.0, 2.0):
            worst = max(worst, solve_mp(lam, c, PSDModel.point(1.0)).residual)
    ok = err <= 1e-10 and worst <= 1e-12
    assert report(4, ok, f"|phi - (sqrt5-1)/2| = {err:.2e} (<= 1e-10); max residual over 20 (lambda, c) "
                         f"points = {worst:.2e} (<= 1e-12)")


def test_criterion_05_stieltjes_consistency(report):
    n, p = 800, 400
    lams = (0.1, 0.5, 1.0, 2.0)
    sols = {lam: solve_mp(lam, p / (n - 1), PSDModel.point(1.0)) for lam in lams}
    bound = 5 / math.sqrt(n)
    hits = dict.fromkeys(lams, 0)
    rng = np.random.default_rng(31)
    for _ in range(100):
        d = eigendecompose(pooled_covariance(rng.standard_normal((p, n))))
        for lam in lams:
            m, _ = stieltjes_estimates(d, lam, n)
            theta = 1 - lam * m
            s = sols[lam]
            if abs(m - s.phi) <= bound and abs(theta - s.theta_n) <= bound:
                hits[lam] += 1
    ok = all(h >= 95 for h in hits.values())
    assert report(5, ok, "replications within 5/sqrt(n) per lambda: "
                         + ", ".join(f"{lam}: {h}/100" for lam, h in hits.items()) + " (need >= 95)")


def test_criterion_06_rank_perturbation(report):
    p, n = 100, 200
    rng = np.random.default_rng(32)
    worst = {0.5: 0.0, 1.0: 0.0}
    worst_prime = {0.5: 0.0, 1.0: 0.0}
    held = 0
    for _ in range(100):
        Z = rng.standard_normal((p, n))
        X = Z.copy()
        X[:, n // 2:] += 2.0 * rng.standard_normal(p)[:, None]
        dz = eigendecompose(pooled_covariance(Z))
        dx = eigendecompose(pooled_covariance(X))
        good = True
        for lam in worst:
            mx, mpx = stieltjes_estimates(dx, lam, n)
            mz, mpz = stieltjes_estimates(dz, lam, n)
            r, rp = abs(mx - mz) * p * lam, abs(mpx - mpz) * p * lam**2
            worst[lam], worst_prime[lam] = max(worst[lam], r), max(worst_prime[lam], rp)
            good &= r <= 6 and rp <= 6
        held += good
    ok = held == 100
    assert report(6, ok, f"bound held in {held}/100; max p*lambda*|m - m~| = "
                         + ", ".join(f"{v:.3f} (lambda={k})" for k, v in worst.items())
                         + f"; max p*lambda^2*|m' - m~'| = {max(worst_prime.values()):.3f} (bound 6)")


def test_criterion_07_asnr_monotone(report):
    lams = np.geomspace(0.01, 20, 30)
    violations, checked, floors = 0, 0, []
    for cov in ("ID", "TOEPLITZ"):
        H = PSDModel.from_matrix(make_sigma(CovarianceModel(cov, 200)))
        for c in (0.5, 2.0):
            for theta in (0.0, 0.5, 1.0):
                a = [population_asnr(lam, c, H, PriorSpec.linear(theta)) for lam in lams]
                violations += sum(b > x + 1e-12 for x, b in zip(a, a[1:]))
                checked += len(a) - 1
            floors.append(select_minimax_population(lams, c, H) == lams[0])
    ok = violations == 0 and all(floors)
    assert report(7, ok, f"{violations} monotonicity violations in {checked} consecutive pairs; "
                         f"select_minimax at grid floor in {sum(floors)}/{len(floors)} settings")


# ---------------------------------------------------------------- 8-9 exactness


def _direct_all(X, lam, keys):
    """Vectorized direct-inverse oracle, checked against the per-triple loop."""
    p, n = X.shape
    ref, A = direct_d_values(X, lam, keys[:1])
    xbar = X.mean(axis=1, keepdims=True)
    S = (X - xbar) @ (X - xbar).T / n
    R = np.linalg.inv(n / (n - 1) * S + lam * np.eye(p))
    m, mp = np.trace(R) / p, np.trace(R @ R) / p
    g = p / (n - 1)
    theta = 1 - lam * m
    gamma = 2 * (1 - g + g * lam * m) * (1 - lam * m) - 2 * (lam * m - lam**2 * mp)
    P = np.concatenate([np.zeros((p, 1)), np.cumsum(X, axis=1)], axis=1)
    T = np.asarray(keys) - 1
    out = np.empty(len(T))
    for s in range(0, len(T), 20000):
        t = T[s:s + 20000]
        i1, i2, i3 = t[:, 0], t[:, 1], t[:, 2]
        C = (P[:, i3] - P[:, i2]) / (i3 - i2) - (P[:, i2] - P[:, i1]) / (i2 - i1)
        N = (i2 - i1) * (i3 - i2) / (i3 - i1)
        V = N * np.einsum("ij,ij->j", C, A @ C)
        out[s:s + 20000] = math.sqrt(p) * (V / p - theta) / math.sqrt(gamma)
    assert out[0] == pytest.approx(ref[0], rel=1e-10)
    return out


def test_criterion_08_oracle_equivalence(report):
    rng = np.random.default_rng(33)
    worst, total = 0.0, 0
    for _ in range(20):
        p, n = int(rng.integers(5, 61)), int(rng.integers(30, 121))
        lam = float(rng.uniform(0.05, 2.0))
        X = rng.standard_normal((p, n)) * rng.uniform(0.5, 2.0, size=(p, 1)) + rng.normal(size=(p, 1))
        ctx = RidgeContext.build(ObservationMatrix(X), lam)
        for mode in ("SC", "MC_GRID", "MC"):
            vals = scan(ctx, mode, 0.1, keep_values=True).all_values
            keys = list(vals)
            ref = _direct_all(X, lam, keys)
            got = np.array([vals[k] for k in keys])
            worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1.0))))
            total += len(keys)
    ok = worst <= 1e-8
    assert report(8, ok, f"{total} D values over 20 instances x 3 scans; max relative error {worst:.2e} "
                         "(relative to max(|D|, 1); tolerance 1e-8)")


def test_criterion_09_rotation_invariance(report):
    rng = np.random.default_rng(34)
    p, n, lam = 30, 80, 0.2
    X = rng.standard_normal((p, n))
    X[:, 40:] += 0.3
    base = {m: scan(RidgeContext.build(ObservationMatrix(X), lam), m, 0.1).statistic for m in ("SC", "MC")}
    worst = 0.0
    for _ in range(5):
        Q, R = np.linalg.qr(rng.standard_normal((p, p)))
        Q = Q * np.sign(np.diag(R))
        ctx = RidgeContext.build(ObservationMatrix(Q @ X), lam)
        for m, ref in base.items():
            worst = max(worst, abs(scan(ctx, m, 0.1).statistic - ref))
    ok = worst <= 1e-8
    assert report(9, ok, f"T_sc={base['SC']:.6f}, T_mc={base['MC']:.6f}; max change under 5 rotations "
                         f"{worst:.2e} (tolerance 1e-8)")


# ---------------------------------------------------------------- 10 power


def _pilot_c(cfg, methods, start, target, reps=50):
    """Smallest c on a doubling grid where pilot ridge power reaches ``target``."""
    c = start
    while True:
        pw = run_power_experiment(replace(cfg, reps=reps, seed=cfg.seed + 1000), [c], methods)[c]["ridge:SC"]
        if pw >= target or c > 100 * start:
            return c
        c *= 2


def test_criterion_10a_power_curve(report, tmp_path):
    cfg = ExperimentConfig(alternative="SINGLE", signal=SignalModel("IID_GAUSS", 0.0), p=100, n=300,
                           reps=200, methods=("ridge:SC",), seed=40)
    methods = resolve_methods(cfg, tmp_path)
    c_max = _pilot_c(cfg, methods, 0.0025, 0.95)
    grid = [round(c_max * f, 10) for f in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
    res = run_power_experiment(cfg, grid, methods)
    pw = [res[c]["ridge:SC"] for c in grid]
    drops = [(a, b) for a, b in zip(pw, pw[1:])
             if b < a - 2 * math.hypot(binomial_se(a, cfg.reps), binomial_se(b, cfg.reps))]
    ok = not drops and pw[-1] >= 0.9
    assert report("10a", ok, f"pilot c_max={c_max:g}; power over c={grid}: {[round(x, 3) for x in pw]}; "
                             f"{len(drops)} drops beyond 2 MC-SE; power at c_max {pw[-1]:.3f} (need >= 0.9)")


def _sparse_comparison(tmp_path):
    cfg = ExperimentConfig(alternative="SINGLE", signal=SignalModel("SPARSE", 0.0), p=100, n=300,
                           reps=400, methods=("ridge:SC", "linf:SC"), seed=41, calibration_reps=1000)
    methods = resolve_methods(cfg, tmp_path)
    # c where pilot ridge power is closest to 1/2, so neither test is saturated
    pilot = run_power_experiment(replace(cfg, reps=100, seed=1041), [0.04, 0.06, 0.08, 0.10, 0.12], methods)
    c = min(pilot, key=lambda k: abs(pilot[k]["ridge:SC"] - 0.5))
    wfn = lambda X: linf_cusum(X, 0.1, "SC", weighted=True).statistic  # noqa: E731
    wcv = calibrate_mc(wfn, np.eye(cfg.p), cfg.p, cfg.n, cfg.calibration_reps, cfg.alpha, seed=cfg.seed + 1)
    res = run_power_experiment(cfg, [c], [*methods, Method("linf_weighted:SC", wcv, wfn)])[c]
    se = lambda a, b: math.hypot(binomial_se(a, cfg.reps), binomial_se(b, cfg.reps))  # noqa: E731
    return c, res, se


@pytest.mark.xfail(strict=True, reason="the printed unweighted sup-norm statistic loses to ridge at p=100, n=300; "
                                       "see the decisions ledger")
def test_criterion_10b_sparse_direction(report, tmp_path):
    c, res, se = _sparse_comparison(tmp_path)
    r, l, w = res["ridge:SC"], res["linf:SC"], res["linf_weighted:SC"]
    margin = l - r
    ok = margin >= -2 * se(l, r)
    report("10b", ok, f"sparse c={c}: ridge {r:.3f}, linf {l:.3f}, margin {margin:+.3f} "
                      f"(need >= -{2 * se(l, r):.3f}); diagnostic sqrt(N)-weighted linf {w:.3f} "
                      f"(margin {w - r:+.3f})")
    assert ok


# ---------------------------------------------------------------- 11 detection


def test_criterion_11_recursive_detection(report, mc_dense_table):
    cv = mc_dense_table.critical_value(0.05)
    base = dict(alternative="EPIDEMIC", tau=(0.35, 0.65), p=100, n=600)
    tol = 0.02 * 600

    def localized(d, r):
        obs, truth = d.panel(r)
        found = recursive_detect(obs, cv).change_points
        return all(any(abs(k - b) <= tol for k in found) for b in truth["changes"])

    # pilot on separate seeds: smallest c (doubling) localizing both ends in 5/5 pilot runs, then doubled
    c = 0.003125
    while not all(localized(Design(ExperimentConfig(signal=SignalModel("IID_GAUSS", c), seed=977, **base)), r)
                  for r in range(5)):
        c *= 2
    c_strong = 2 * c
    d = Design(ExperimentConfig(signal=SignalModel("IID_GAUSS", c_strong), seed=5, **base))
    hits = sum(localized(d, r) for r in range(20))
    ok = hits >= 18
    assert report(11, ok, f"pilot c={c:g}, run c={c_strong:g}, cv={cv:.4f}; both boundaries within "
                          f"+-{tol:g} in {hits}/20 runs (need >= 18)")


# ---------------------------------------------------------------- 12 ZL pivotality


@pytest.mark.xfail(strict=True, reason="ZL null quantile depends on the covariance through "
                                       "sqrt(tr Sigma^2)/tr Sigma; see the decisions ledger")
def test_criterion_12_zl_pivotality(report):
    p, n, reps = 50, 200, 2000
    fn = make_statistic("zl", 0.1, "SC")
    toe = make_sigma(CovarianceModel("TOEPLITZ", p))
    a = null_statistics(fn, None, p, n, reps, seed=12)
    b = null_statistics(fn, toe, p, n, reps, seed=12)
    qa, qb = gplimit.empirical_quantile(a, 0.95), gplimit.empirical_quantile(b, 0.95)
    se = math.hypot(gplimit.quantile_stderr(a, 0.95), gplimit.quantile_stderr(b, 0.95))
    z = abs(qa - qb) / se
    ok = z <= 3
    report(12, ok, f"cv ID={qa:.4f}, cv Toeplitz={qb:.4f}, difference {abs(qa - qb):.4f} = {z:.1f} "
                   f"combined MC SEs (need <= 3)")
    assert ok
