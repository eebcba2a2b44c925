import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracgle.errors import DomainError, GridMismatch, NonFinite, SoeMismatch
from fracgle.model import Drift, Grid, ModelSpec, mittag_leffler
from fracgle.noise import NoiseSeed, build_g_sampler, sample_g
from fracgle.soe import build_soe
from fracgle.solver import (
    FastState, coupled_pair_solve, default_soe, euler_solve, fast_euler_solve, fractional_ode_reference,
    kernel_weight, memory_coefficients, solve,
)
from fracgle.harness import fit_rate

E_HALF_MINUS_ONE = 0.42758357615580700442


def noise(model, n, samples=None, seed=0):
    return sample_g(build_g_sampler(Grid(n, model.horizon), model), NoiseSeed(seed), n_samples=samples)


class TestKernelWeight:
    def test_last_panel(self):
        assert kernel_weight(5, 5, 0.4, 0.1) == pytest.approx(0.1**0.4 / 0.4)

    @given(st.integers(1, 50), st.floats(0.01, 1.0))
    def test_alpha_one(self, n, h):
        assert all(kernel_weight(n, j, 1.0, h) == pytest.approx(h) for j in range(1, n + 1))

    @given(st.integers(1, 200), st.floats(0.05, 1.0), st.floats(1e-3, 1.0))
    def test_telescoping(self, n, a, h):
        total = sum(kernel_weight(n, j, a, h) for j in range(1, n + 1))
        assert total == pytest.approx((n * h) ** a / a, rel=1e-10)

    def test_matches_memory_coefficients(self):
        a, h, n = 0.35, 0.01, 9
        c = memory_coefficients(n, a, h)
        for j in range(1, n + 1):
            assert c[n - j] == pytest.approx(kernel_weight(n, j, a, h) / math.gamma(a), rel=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            kernel_weight(3, 4, 0.5, 0.1)


class TestEuler:
    def test_zero_drift_is_exact(self):
        m = ModelSpec(0.7, 0.6, x0=0.3, drift=Drift.zero())
        g = noise(m, 64, samples=5)
        sol = euler_solve(m, Grid(64), g)
        assert np.array_equal(sol.values[:, 1:], 0.3 + g)
        assert np.all(sol.values[:, 0] == 0.3)
        assert sol.values.shape == (5, 65)

    def test_classical_euler_at_alpha_one(self):
        m = ModelSpec(0.7, 1.0, sigma=0.0, x0=1.0, drift=Drift.linear(-1.0))
        n = 50
        x = euler_solve(m, Grid(n), np.zeros(n)).values
        assert np.allclose(x, (1 - 1 / n) ** np.arange(n + 1), rtol=1e-13)

    def test_euler_maruyama_reduction(self):
        m = ModelSpec(0.7, 1.0, x0=0.2, drift=Drift.bounded_well())
        n = 128
        g = noise(m, n)
        x = euler_solve(m, Grid(n), g).values
        h = 1 / n
        y = [0.2]
        gp = np.concatenate([[0.0], g])
        for k in range(1, n + 1):
            y.append(y[-1] + h * m.drift(y[-1]) + gp[k] - gp[k - 1])
        assert np.allclose(x, y, rtol=0, atol=1e-13)

    def test_mittag_leffler_endpoint(self):
        m = ModelSpec(0.7, 0.5, sigma=0.0, x0=1.0, drift=Drift.linear(-1.0))
        n = 2**12
        x = euler_solve(m, Grid(n), np.zeros(n)).values[-1]
        assert abs(x - E_HALF_MINUS_ONE) <= 5e-3

    def test_fractional_ode_order(self):
        m = ModelSpec(0.7, 0.5, sigma=0.0, x0=1.0, drift=Drift.linear(-1.0))
        exact = fractional_ode_reference(-1.0, 0.5, 1.0, 1.0)
        ns = [2**k for k in range(5, 11)]
        errs = [abs(euler_solve(m, Grid(n), np.zeros(n)).values[-1] - exact) for n in ns]
        assert fit_rate([1 / n for n in ns], errs).slope >= 0.8 * 0.5

    def test_ode_reference(self):
        assert fractional_ode_reference(-1.0, 0.5, 2.0, 1.0) == pytest.approx(2 * mittag_leffler(0.5, 1, -1))

    def test_deterministic(self):
        m = ModelSpec(0.6, 0.8)
        g = noise(m, 32, samples=3)
        assert np.array_equal(euler_solve(m, Grid(32), g).values, euler_solve(m, Grid(32), g).values)

    def test_batch_matches_single(self):
        m = ModelSpec(0.6, 0.8)
        g = noise(m, 32, samples=3)
        batch = euler_solve(m, Grid(32), g).values
        assert np.allclose(batch[1], euler_solve(m, Grid(32), g[1]).values, rtol=1e-15, atol=1e-15)

    def test_nonfinite(self):
        m = ModelSpec(0.7, 0.6, sigma=0.0, x0=1e200, drift=Drift.linear(1e200))
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFinite):
            euler_solve(m, Grid(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            euler_solve(ModelSpec(0.7, 0.6), Grid(4), np.zeros(5))


class TestFastEuler:
    def test_zero_drift_identical(self):
        m = ModelSpec(0.7, 0.6, x0=-0.4, drift=Drift.zero())
        g = noise(m, 256, samples=3)
        grid = Grid(256)
        fast = fast_euler_solve(m, grid, default_soe(0.6, grid), g).values
        assert np.array_equal(fast, euler_solve(m, grid, g).values)

    @pytest.mark.parametrize("drift", [Drift.cosine(), Drift.linear(-3.0), Drift.bounded_well()])
    def test_first_step_identical(self, drift):
        m = ModelSpec(0.75, 0.4, x0=0.7, drift=drift)
        grid = Grid(64)
        g = noise(m, 64, samples=4)
        x = euler_solve(m, grid, g).values
        y = fast_euler_solve(m, grid, default_soe(0.4, grid), g).values
        assert np.array_equal(x[:, :2], y[:, :2])

    def test_single_step_without_soe(self):
        m = ModelSpec(0.6, 0.8)
        g = noise(m, 1, samples=3)
        x = euler_solve(m, Grid(1), g).values
        assert np.array_equal(fast_euler_solve(m, Grid(1), None, g).values, x)

    def test_gap_linear_in_tolerance(self):
        m = ModelSpec(0.6, 0.8)
        grid = Grid(1024)
        g = noise(m, 1024, seed=3)
        x = euler_solve(m, grid, g).values
        ratios = []
        for eps in (1e-2, 1e-3, 1e-4):
            y = fast_euler_solve(m, grid, build_soe(0.8, eps, grid.stepsize, 1.0), g).values
            ratios.append(np.max(np.abs(y - x)) / eps)
        assert max(ratios) / min(ratios) <= 3

    def test_soe_mismatch(self):
        m = ModelSpec(0.6, 0.8)
        grid = Grid(16)
        g = np.zeros(16)
        with pytest.raises(SoeMismatch):
            fast_euler_solve(m, grid, build_soe(0.8, 1e-3, 0.1, 1.0), g)
        with pytest.raises(SoeMismatch):
            fast_euler_solve(m, grid, build_soe(0.8, 1e-3, 1 / 16, 0.5), g)
        with pytest.raises(SoeMismatch):
            fast_euler_solve(m, grid, build_soe(0.7, 1e-3, 1 / 16, 1.0), g)
        with pytest.raises(SoeMismatch):
            fast_euler_solve(m, grid, None, g)

    def test_state_starts_at_zero(self):
        assert np.all(FastState.start(3, 7).modes == 0) and FastState.start(3, 7).modes.shape == (3, 7)

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            solve(ModelSpec(0.6, 0.8), Grid(2), np.zeros(2), "milstein")


class TestCoupledPair:
    def test_zero_drift_endpoints_equal(self):
        m = ModelSpec(0.6, 0.8, drift=Drift.zero())
        g = noise(m, 64, samples=4)
        for method in ("euler", "fast_euler"):
            f, c = coupled_pair_solve(m, Grid(64), Grid(16), method, g)
            assert np.array_equal(f.endpoint, c.endpoint)

    def test_hand_computed(self):
        a, lam = 0.7, -2.0
        m = ModelSpec(0.6, a, sigma=0.0, x0=1.0, drift=Drift.linear(lam))
        f, c = coupled_pair_solve(m, Grid(2), Grid(1), "euler", np.zeros(2))
        h = 0.5
        w0 = h**a / math.gamma(a + 1)
        w1 = h**a / math.gamma(a + 1) * (2**a - 1)
        x1 = 1 + w0 * lam
        x2 = 1 + lam * (w1 * 1.0 + w0 * x1)
        assert f.values == pytest.approx([1.0, x1, x2], rel=1e-14)
        assert c.values == pytest.approx([1.0, 1 + lam / math.gamma(a + 1)], rel=1e-14)
        assert f.endpoint - c.endpoint == pytest.approx(x2 - 1 - lam / math.gamma(a + 1), rel=1e-13)

    def test_coarse_uses_restriction(self):
        m = ModelSpec(0.6, 0.8)
        g = noise(m, 8, samples=2)
        _, c = coupled_pair_solve(m, Grid(8), Grid(4), "euler", g)
        assert np.array_equal(c.g_path, g[:, 1::2])

    @pytest.mark.parametrize("fine,coarse", [(Grid(8), Grid(3)), (Grid(8), Grid(8)), (Grid(8, 2.0), Grid(4))])
    def test_grid_mismatch(self, fine, coarse):
        with pytest.raises(GridMismatch):
            coupled_pair_solve(ModelSpec(0.6, 0.8), fine, coarse, "euler", np.zeros(8))

    def test_variance_decay(self):
        m = ModelSpec(0.6, 0.8)
        levels = range(1, 8)
        var = []
        for l in levels:
            fine, coarse = Grid(2**l), Grid(2 ** (l - 1))
            g = sample_g(build_g_sampler(fine, m), NoiseSeed(3, level=l), n_samples=1000)
            f, c = coupled_pair_solve(m, fine, coarse, "fast_euler", g)
            var.append(np.var(f.endpoint - c.endpoint, ddof=1))
        slope = fit_rate([2.0**-l for l in levels], var).slope
        assert slope >= 4 - 4 * 0.6 - 0.3
