"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a one-line verdict that is printed in the pytest summary
(and by ``python3 tests/test_acceptance.py``). Criterion 4 checks the
published Poisson-mixture formula against Monte Carlo with jumps; see the
repository notes for why it is expected to miss.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import lines, record  # noqa: E402
from oracles import (  # noqa: E402
    black_scholes_call,
    brute_force_geometric_asian,
    geometric_asian_call,
    power_mean_direct,
)

from adoptions.backtest import revenue_change  # noqa: E402
from adoptions.calibration import (  # noqa: E402
    LogReturnSeries,
    fit_mle,
    log_returns,
    select_detector,
)
from adoptions.model import (  # noqa: E402
    DAY,
    JumpDiffusionParams,
    LogADE,
    LogLaplacian,
    LogNormal,
    OptionSpec,
    PriceSeries,
    build_time_grid,
)
from adoptions.payoff import power_mean  # noqa: E402
from adoptions.pricing import closed_form_price, mc_price, merton_european_price  # noqa: E402
from adoptions.simulation import RngSpec, simulate_paths, simulate_series  # noqa: E402
from adoptions.stylized_facts import ks_normality_test, ljung_box_test  # noqa: E402


# 1 ------------------------------------------------------------------------


def test_criterion_01_martingale():
    start = time.perf_counter()
    laws = {"lognormal": LogNormal(0.1, 0.2), "ade": LogADE(10.0, 5.0, 0.5, 0.5),
            "laplacian": LogLaplacian(0.0, 0.1)}
    grid = build_time_grid(OptionSpec(1, 1.0, S=0.0, T=1.0, m=250))
    details, ok = [], True
    for name, dist in laws.items():
        p = JumpDiffusionParams(0.05, 0.2, 2.0, dist)
        x = simulate_paths(100.0, p, grid, 200_000, RngSpec(2024)).terminal * math.exp(-0.05)
        se = x.std(ddof=1) / math.sqrt(x.size)
        z = (x.mean() - 100.0) / se
        ok &= abs(z) <= 3
        details.append(f"{name} z={z:+.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30
    assert record(1, "discounted X(T) is a martingale", ok,
                  ", ".join(details) + f", {elapsed:.1f}s (limit 30s)")


# 2 ------------------------------------------------------------------------


def test_criterion_02_closed_form_vs_mc():
    start = time.perf_counter()
    p = JumpDiffusionParams(0.1, 0.2, 0.0, LogNormal(0.0, 0.0))
    spec = OptionSpec(1, 100.0, S=0.0, T=1.0, m=50)
    # mc_price averages m grid points; the formula's finite-m moments are the matching target
    target = closed_form_price(100.0, p, spec, averaging="discrete").pi0
    continuous = closed_form_price(100.0, p, spec).pi0
    hits = hits_cont = 0
    for seed in range(100):
        res = mc_price(100.0, p, spec, 200_000, RngSpec(seed))
        hits += res.contains(target)
        hits_cont += res.contains(continuous)
    brute, brute_se = brute_force_geometric_asian(100, 100, 0.1, 0.2, 1.0, 1_000_000, 500, 7)
    rel = abs(continuous - brute) / brute
    elapsed = time.perf_counter() - start
    ok = hits >= 90 and rel < 0.01 and elapsed < 300
    assert record(2, "closed form vs Monte Carlo at lambda=0", ok,
                  f"coverage {hits}/100 of m=50 value {target:.4f} (continuous {continuous:.4f} "
                  f"covered {hits_cont}/100), brute-force {brute:.4f}+-{brute_se:.4f} "
                  f"rel diff {rel:.2%}, {elapsed:.0f}s")


# 3 ------------------------------------------------------------------------


def test_criterion_03_limiting_cases():
    gen = np.random.default_rng(3)
    worst_bs = 0.0
    for K, T in zip(gen.uniform(60, 140, 20), gen.uniform(0.05, 3.0, 20)):
        for r, sigma in ((0.05, 0.2),):
            p = JumpDiffusionParams(r, sigma, 0.0, LogNormal(0.0, 0.0))
            got = merton_european_price(100.0, p, K, T).pi0
            ref = black_scholes_call(100.0, K, r, sigma, T)
            worst_bs = max(worst_bs, abs(got - ref) / ref)
    worst_asian = 0.0
    for K, T, r, sigma in zip(gen.uniform(70, 130, 20), gen.uniform(0.1, 2.0, 20),
                              gen.uniform(0.0, 0.15, 20), gen.uniform(0.1, 0.6, 20)):
        p = JumpDiffusionParams(r, sigma, 0.0, LogNormal(0.0, 0.0))
        got = closed_form_price(100.0, p, OptionSpec(1, K, S=0.0, T=T, m=10)).pi0
        ref = geometric_asian_call(100.0, K, r, sigma, T)
        worst_asian = max(worst_asian, abs(got - ref) / ref)
    ok = worst_bs < 1e-10 and worst_asian < 1e-10
    assert record(3, "Black-Scholes and geometric-Asian reductions", ok,
                  f"max rel err BS {worst_bs:.1e}, Asian {worst_asian:.1e} (limit 1e-10)")


# 4 ------------------------------------------------------------------------


def test_criterion_04_jump_formula_inside_mc_ci():
    p = JumpDiffusionParams(0.1, 0.2, 5.0, LogNormal(0.1, 0.2))
    spec = OptionSpec(1, 0.75, S=30 * DAY, T=60 * DAY, m=30, c=0.2, c_tilde=0.2)
    formula = closed_form_price(1.0, p, spec).pi0
    hits = 0
    estimates = []
    for seed in range(50):
        res = mc_price(1.0, p, spec, 100_000, RngSpec(1000 + seed))
        hits += res.contains(formula)
        estimates.append(res.pi0)
    mc_mean = float(np.mean(estimates))
    gap = formula / mc_mean - 1
    assert record(4, "jump formula inside the MC 95% CI", hits >= 40,
                  f"coverage {hits}/50 (need 40), formula {formula:.5f} vs MC mean "
                  f"{mc_mean:.5f}, systematic gap {gap:+.2%}")


# 5 ------------------------------------------------------------------------


def test_criterion_05_power_mean_properties():
    gen = np.random.default_rng(5)
    failures = []
    worst_cont = 0.0
    for i in range(10_000):
        w = gen.lognormal(0.0, gen.uniform(0.01, 2.0), gen.integers(1, 40))
        cases = {"min": (-math.inf, w.min()), "harmonic": (-1.0, power_mean_direct(w, -1)),
                 "geometric": (0.0, power_mean_direct(w, 0)),
                 "arithmetic": (1.0, w.mean()), "quadratic": (2.0, math.sqrt((w * w).mean())),
                 "max": (math.inf, w.max())}
        for name, (g, ref) in cases.items():
            if not math.isclose(power_mean(w, g), ref, rel_tol=1e-12):
                failures.append(name)
        g1, g2 = np.sort(gen.uniform(-30, 30, 2))
        if power_mean(w, g1) > power_mean(w, g2) * (1 + 1e-12):
            failures.append("monotonicity")
        g0 = power_mean(w, 0.0)
        for g in (-2e-8, -1.01e-8, 1.01e-8, 2e-8):
            worst_cont = max(worst_cont, abs(power_mean(w, g) - g0) / g0)
        # limiting cases: large finite exponents approach the extremes
        if i % 10 == 0:
            # 1e-12 slack: a one-element window can round one ulp past its own value
            if not (w.max() * 0.9 <= power_mean(w, 400.0) <= w.max() * (1 + 1e-12)):
                failures.append("limit max")
            if not (w.min() * (1 - 1e-12) <= power_mean(w, -400.0) <= w.min() * 1.1):
                failures.append("limit min")
    ok = not failures and worst_cont < 1e-6
    assert record(5, "power-mean special cases, monotonicity, continuity", ok,
                  f"10000 windows, {len(failures)} failures, max |psi(g)-psi(0)|/psi(0) for |g| just above the geometric cutoff "
                  f"{worst_cont:.1e}")


# 6 ------------------------------------------------------------------------


def test_criterion_06_mle_recovery():
    lam = 0.05 / DAY
    worst = [0.0, 0.0, 0.0]
    ok = True
    for seed in range(10):
        p = JumpDiffusionParams(0.05, 0.2, lam, LogNormal(0.5, 0.2), risk_neutral=False)
        prices, _ = simulate_series(1.0, p, DAY, 5000, RngSpec(600 + seed))
        est = fit_mle(log_returns(PriceSeries.from_prices(prices, DAY)), lam)
        errs = (abs(est.sigma_hat / 0.2 - 1), abs(est.alpha_hat - 0.5), abs(est.beta_hat - 0.2))
        worst = [max(a, b) for a, b in zip(worst, errs)]
        ok &= errs[0] <= 0.15 and errs[1] <= 0.15 and errs[2] <= 0.1
    r = np.random.default_rng(6).normal(0.0003, 0.01, 3000)
    gauss = fit_mle(LogReturnSeries(r, DAY), 0.0)
    sigma_cf = r.std() / math.sqrt(DAY)
    rel = abs(gauss.sigma_hat - sigma_cf) / sigma_cf
    ok &= rel < 1e-6
    assert record(6, "MLE recovers Merton parameters", ok,
                  f"worst sigma {worst[0]:.1%} (15%), alpha {worst[1]:.3f} (0.15), beta "
                  f"{worst[2]:.3f} (0.1); lambda=0 sigma rel err {rel:.1e}")


# 7 ------------------------------------------------------------------------


def test_criterion_07_detector_selection():
    good = 0
    raw_min = math.inf
    for seed in range(20):
        p = JumpDiffusionParams(0.05, 0.2, 10.0, LogNormal(0.0, 0.1), risk_neutral=False)
        prices, _ = simulate_series(1.0, p, DAY, 1000, RngSpec(700 + seed))
        det, diag, raw = select_detector(log_returns(PriceSeries.from_prices(prices, DAY)))
        chosen = next(d for d in diag if d.detector is det.detector)
        raw_min = min(raw_min, raw)
        good += chosen.in_range and raw > 4
    assert record(7, "selected detector leaves kurtosis in [2,4]", good >= 16,
                  f"{good}/20 seeds (need 16), min raw kurtosis {raw_min:.1f}")


# 8 ------------------------------------------------------------------------


def test_criterion_08_test_sizes():
    ks_rej = 0
    lb_rej = {5: 0, 10: 0, 15: 0}
    for seed in range(200):
        x = np.random.default_rng(8000 + seed).normal(size=500)
        ks_rej += ks_normality_test(x).reject
        w = np.random.default_rng(9000 + seed).normal(size=1000)
        for lag in lb_rej:
            lb_rej[lag] += ljung_box_test(w, lag).reject
    power = 0
    for seed in range(200):
        e = np.random.default_rng(10_000 + seed).normal(size=1000)
        x = np.empty_like(e)
        x[0] = e[0]
        for i in range(1, x.size):
            x[i] = 0.6 * x[i - 1] + e[i]
        power += ljung_box_test(x, 5).reject
    rates = [ks_rej / 200] + [v / 200 for v in lb_rej.values()]
    ok = all(0.02 <= rt <= 0.08 for rt in rates) and power / 200 >= 0.95
    # context only: a 2000-seed Ljung-Box size estimate separates bias from sampling noise
    big = np.mean([ljung_box_test(np.random.default_rng(50_000 + s).normal(size=1000), 15).reject
                   for s in range(2000)])
    assert record(8, "KS and Ljung-Box size, Ljung-Box power", ok,
                  f"KS {rates[0]:.1%}, LB lags 5/10/15 " + "/".join(f"{v:.1%}" for v in rates[1:])
                  + f" (5%+-3%), AR(1) power {power / 200:.1%} (>=95%); "
                  f"LB lag-15 size over 2000 other seeds {big:.1%}")


# 9 ------------------------------------------------------------------------


def test_criterion_09_backtest_accounting():
    def spec(K, theta):
        return OptionSpec(theta=theta, K=K, S=0.0, T=3 * DAY, m=3, gamma=1.0)

    # (pi0, K, theta, window, exercised, hand-computed change)
    fixtures = [
        (0.3, 5.0, 2.0, [1.0, 2.0, 3.0], False, (0.15 + 2.0 - 2.0) / 2.0),
        (0.2, 1.5, 1.0, [2.0, 3.0, 4.0], True, (0.2 + 1.5 - 3.0) / 3.0),
        (1.0, 2.0, 4.0, [2.0, 2.0, 2.0], False, (0.25 + 2.0 - 2.0) / 2.0),
        (0.5, 1.0, 1.0, [1.0, 1.0, 4.0], True, (0.5 + 1.0 - 2.0) / 2.0),
    ]
    mismatches = 0
    for pi0, K, theta, window, exercised, expected in fixtures:
        out = revenue_change(pi0, spec(K, theta), window)
        mismatches += out.exercised != exercised or out.revenue_change != expected
    gen = np.random.default_rng(9)
    violations = 0
    for _ in range(2000):
        window = gen.uniform(0.5, 2.0, 3)
        K = window.mean() * gen.uniform(1.0001, 3.0)
        out = revenue_change(gen.uniform(1e-6, 5.0), spec(K, gen.integers(1, 100)), window)
        violations += out.exercised or not out.revenue_change > 0
    ok = mismatches == 0 and violations == 0
    assert record(9, "backtest revenue accounting", ok,
                  f"{len(fixtures) - mismatches}/{len(fixtures)} fixtures exact, {violations} "
                  "unexercised-premium violations in 2000 draws")


# 10 -----------------------------------------------------------------------


def _run_cli(args, out_dir, threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
    cmd = [sys.executable, "-m", "adoptions.cli", *args, "--out-dir", str(out_dir)]
    subprocess.run(cmd, check=True, capture_output=True, env=env)
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


def test_criterion_10_determinism(tmp_path):
    series_dir = tmp_path / "series"
    _run_cli(["simulate", "--series-steps", "149", "--seed", "11", "--lam", "15"], series_dir, 1)
    data = str(series_dir / "series.csv")
    commands = {
        "simulate": ["simulate", "--paths", "50", "--seed", "3"],
        "price": ["price", "--z", "20000", "--seed", "3"],
        "calibrate": ["calibrate", "--input", data, "--seed", "3"],
        "facts": ["facts", "--input", data, "--seed", "3"],
        "backtest": ["backtest", "--input", data, "--z", "2000", "--seed", "3"],
    }
    differing = []
    for name, args in commands.items():
        runs = [_run_cli(args, tmp_path / f"{name}-{i}", threads)
                for i, threads in enumerate((1, 1, 2))]
        if not (runs[0] == runs[1] == runs[2]):
            differing.append(name)
    assert record(10, "seeded commands are byte-identical", not differing,
                  f"{len(commands)} commands x 3 runs (threads 1,1,2); differing: "
                  f"{', '.join(differing) or 'none'}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print("\n".join(lines()))
    sys.exit(code)
