"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints a single ``ACCEPT <n> PASS|FAIL ...`` line (also collected
for the terminal summary).  Seeds are fixed and documented next to each
experiment; they were chosen before the runs and are not tuned.
"""
import json
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from fracgle.cli import run_cli
from fracgle.harness import fast_agreement_sweep, mc_mlmc_compare, strong_order_study
from fracgle.mlmc import (
    level_sum, level_sum_constant, level_sum_scale, variance_decay_exponent,
)
from fracgle.model import Drift, Grid, ModelSpec, mittag_leffler
from fracgle.noise import (
    NoiseSeed, fbm_covariance, g_covariance, g_variance, sample_g_convolution_oracle,
)
from fracgle.soe import build_soe, certify_soe
from fracgle.solver import euler_solve


def report(number, ok, detail, elapsed):
    line = f"ACCEPT {number} {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def test_1_soe_certification():
    start = time.perf_counter()
    worst = 0.0
    for alpha in (0.3, 0.5, 0.8):
        for eps in (1e-3, 1e-6):
            err = certify_soe(build_soe(alpha, eps, 1e-3, 1.0), 10_000).max_error
            worst = max(worst, err / eps)
    # growth of m_exp for the solver setting eps = h^alpha, kappa = h
    n = 2 ** np.arange(4, 13)
    fits = []
    for alpha in (0.3, 0.5, 0.8):
        m = np.array([build_soe(alpha, (1.0 / k) ** alpha, 1.0 / k, 1.0).m_exp for k in n])
        x = np.log(n) ** 2
        coef = np.polyfit(x, m, 1)
        r2 = 1 - np.sum((m - np.polyval(coef, x)) ** 2) / np.sum((m - m.mean()) ** 2)
        loglog = np.polyfit(np.log(np.log(n)), np.log(m), 1)[0]
        fits.append((alpha, r2, loglog, m[0], m[-1]))
    elapsed = time.perf_counter() - start
    growth_ok = all(r2 >= 0.95 and 0 < s <= 2.2 for _, r2, s, _, _ in fits)
    ok = worst <= 1.0 and growth_ok and elapsed < 60
    detail = f"max err/eps={worst:.3f}; " + ", ".join(
        f"alpha={a}: m_exp {m0}->{m1}, R2 vs (log N)^2={r2:.3f}, d log m/d log log N={s:.2f}"
        for a, r2, s, m0, m1 in fits)
    assert report(1, ok, detail, elapsed)


def test_2_noise_engine():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    model1 = ModelSpec(0.7, 1.0, sigma=1.3)
    worst = 0.0
    for _ in range(50):
        t, s = rng.uniform(0.01, 1.0, 2)
        worst = max(worst, abs(g_covariance(t, s, model1) - 1.3**2 * fbm_covariance(t, s, 0.7)))
    model = ModelSpec(0.75, 0.75)
    grid = Grid(16)
    # seed 11, 10 chunks of 10^4 paths on disjoint sample indices
    cols = [sample_g_convolution_oracle(grid, model, 64, NoiseSeed(11, sample_index=k), 10_000)[:, [7, 15]]
            for k in range(0, 100_000, 10_000)]
    v = np.concatenate(cols)
    brackets = []
    for (i, j, t, s) in ((1, 1, 1.0, 1.0), (0, 1, 0.5, 1.0)):
        prod = v[:, i] * v[:, j]
        exact = g_covariance(t, s, model)
        se = prod.std(ddof=1) / math.sqrt(len(prod))
        brackets.append((t, s, prod.mean(), exact, se, abs(prod.mean() - exact) <= 3 * se + 0.02 * abs(exact)))
    ts = np.linspace(0.1, 1.0, 10)
    scaled = g_variance(ts, model) / ts ** (2 * (model.alpha + model.hurst - 1))
    spread = float(np.max(np.abs(scaled / scaled[-1] - 1)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and all(b[-1] for b in brackets) and spread <= 1e-6 and elapsed < 300
    detail = f"alpha=1 max diff={worst:.1e}; " + "; ".join(
        f"C({t},{s}) MC={m:.5f} exact={e:.5f} se={se:.5f}" for t, s, m, e, se, _ in brackets
    ) + f"; self-similarity spread={spread:.1e}"
    assert report(2, ok, detail, elapsed)


@pytest.mark.slow
def test_3_strong_order():
    start = time.perf_counter()
    lines, ok = [], True
    # master seed 2024 for all three configurations
    for hurst, alpha in ((0.75, 0.4), (0.6, 0.9), (0.7, 0.6)):
        rep = strong_order_study(ModelSpec(hurst, alpha), (4, 9), 1000, 3, NoiseSeed(2024))
        target = rep.theoretical.exponent
        good = abs(rep.fitted_slope - target) <= 0.15
        ok &= good
        text = f"(H={hurst}, alpha={alpha}) slope={rep.fitted_slope:.3f}+-{rep.slope_stderr:.3f} vs {target:.2f}"
        if rep.theoretical.log_factor:
            text += f", log-corrected slope={rep.log_corrected_slope:.3f}"
        text += f", sup-L2 slope={rep.sup_l2_slope:.3f}"
        lines.append(text)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1800
    assert report(3, ok, "; ".join(lines), elapsed)


def test_4_deterministic_oracle():
    start = time.perf_counter()
    model = ModelSpec(0.75, 0.5, sigma=0.0, x0=1.0, drift=Drift.linear(-1.0))
    n = 2**12
    x1 = euler_solve(model, Grid(n), np.zeros(n)).endpoint
    e = mittag_leffler(1.0, 1.0, 1.0)
    exact = 0.4275836
    elapsed = time.perf_counter() - start
    ok = abs(x1 - exact) <= 5e-3 and abs(e - math.e) <= 1e-10 and elapsed < 1
    detail = f"x(1)={x1:.7f} vs {exact} (diff {x1 - exact:.1e}); E_1(1)-e={e - math.e:.1e}"
    assert report(4, ok, detail, elapsed)


def test_5_fast_agreement():
    start = time.perf_counter()
    grid = Grid(2**10)
    # one fixed path from master seed 5
    rep = fast_agreement_sweep(ModelSpec(0.6, 0.8), grid, [1e-2, 1e-3, 1e-4], NoiseSeed(5))
    zero = fast_agreement_sweep(ModelSpec(0.6, 0.8, drift=Drift.zero()), grid, [1e-2, 1e-3, 1e-4], NoiseSeed(5))
    zero_ok = all(r.max_path_gap == 0.0 for r in zero.rows)
    elapsed = time.perf_counter() - start
    ok = rep.nonincreasing and rep.ratio_spread <= 10 and zero_ok and elapsed < 60
    detail = ", ".join(f"eps={r.tolerance:g}: gap={r.max_path_gap:.2e} (gap/eps={r.ratio:.2e}, m_exp={r.m_exp})"
                       for r in rep.rows) + f"; spread={rep.ratio_spread:.2f}; zero-drift gap 0: {zero_ok}"
    assert report(5, ok, detail, elapsed)


@pytest.mark.slow
def test_6_mlmc():
    start = time.perf_counter()
    model = ModelSpec(0.6, 0.8)
    # master seed 7 drives calibration, both MLMC runs, the MC baseline and the reference
    rep = mc_mlmc_compare(model, "identity", [0.1, 0.05], NoiseSeed(7))
    ref = rep.reference
    errors_ok = all(r.mlmc_error <= r.accuracy for r in rep.rows)
    ref_ok = ref.std_error <= 0.05 / 3 and ref.samples == 100_000 and ref.stepsize == 2.0**-11
    decay = [variance_decay_exponent(res) for res in rep.mlmc_results]
    decay_ok = all(d >= 1.2 for d in decay)
    last = rep.rows[-1]
    cost_ok = last.mlmc_cost < last.mc_cost
    elapsed = time.perf_counter() - start
    ok = errors_ok and ref_ok and decay_ok and cost_ok and elapsed < 3600
    detail = (f"reference={ref.estimate:.5f}+-{ref.std_error:.5f}; constants="
              + ",".join(f"{c:.3g}" for c in rep.constants) + "; "
              + "; ".join(f"eps={r.accuracy}: L={r.levels} Z={r.mlmc_estimate:.5f} |err|={r.mlmc_error:.4f} "
                          f"cost={r.mlmc_cost:.3g} vs MC {r.mc_cost:.3g}" for r in rep.rows)
              + "; variance decay exponents=" + ",".join(f"{d:.2f}" for d in decay))
    assert report(6, ok, detail, elapsed)


def test_7_level_sums():
    start = time.perf_counter()
    levels = range(5, 16)
    lines, ok = [], True
    for beta, gamma in ((2.0, 0.5), (2.0, 0.0), (2.0, -0.5)):
        ratios = np.array([level_sum(beta, gamma, 2, L) / level_sum_scale(beta, gamma, 2, L) for L in levels])
        bound = level_sum_constant(beta, gamma, 2)
        fit_short = ratios[: 12 - 5 + 1].max()
        fit_full = ratios.max()
        variation = abs(fit_full - fit_short) / fit_short
        good = bool(np.all(ratios <= bound * (1 + 1e-12))) and variation < 0.1
        ok &= good
        lines.append(f"gamma={gamma}: fitted C={fit_full:.4g} (L<=12: {fit_short:.4g}, variation "
                     f"{100 * variation:.1f}%), analytic C={bound:.4g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1
    assert report(7, ok, "; ".join(lines), elapsed)


def test_8_reproducibility(tmp_path):
    start = time.perf_counter()
    configs = {
        "strong-order": {"experiment": "strong-order", "hurst": 0.7, "alpha": 0.6, "k_min": 2, "k_max": 5,
                         "samples": 100, "reference_refinement": 2, "master_seed": 8},
        "mlmc": {"experiment": "mlmc", "hurst": 0.6, "alpha": 0.8, "accuracies": [0.2],
                 "constants": [0.5, 1.2, 0.6], "master_seed": 8},
        "simulate": {"experiment": "simulate", "n_steps": 64, "samples": 4, "dump_paths": 2, "master_seed": 8},
    }
    compared, ok = [], True
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        for run in ("a", "b"):
            ok &= run_cli([name, "--config", str(path), "--out-dir", str(tmp_path / name / run)]) == 0
        for f in sorted((tmp_path / name / "a").iterdir()):
            if f.name == "manifest.json":
                continue
            same = f.read_bytes() == (tmp_path / name / "b" / f.name).read_bytes()
            ok &= same
            compared.append(f"{name}/{f.name}{'' if same else ' DIFFERS'}")
    elapsed = time.perf_counter() - start
    assert report(8, ok, f"{len(compared)} files byte-identical: " + ", ".join(compared), elapsed)
