import math

import numpy as np
import pytest

from volterra_clt.errors import ContractError, DivergenceError
from volterra_clt.kernels import (constant_kernel, fbm_kernel, gamma_fn,
                                  kernel_pow_integral, riemann_liouville)
from volterra_clt.models import builtin_model
from volterra_clt.paths import (PathBundle, TimeGrid, make_increment_stack,
                                make_path)
from volterra_clt.solver import (KERNEL_INTEGRATED, LEFT_POINT, SchemeConfig,
                                 VolterraScheme, diffusion_weights,
                                 drift_weights, normalized_error,
                                 solve_deterministic, solve_limit,
                                 solve_perturbed)


@pytest.fixture
def grid():
    return TimeGrid(1.0, 64)


class TestWeights:
    def test_constant_kernel_integrated(self):
        g = TimeGrid(1.0, 4)
        w = drift_weights(constant_kernel(1.0), g)
        for j in range(5):
            for i in range(4):
                if i < j:
                    assert w[j, i] == pytest.approx(0.25, rel=1e-15)
                else:
                    assert w[j, i] == 0.0

    def test_rl_first_panel_closed_form(self):
        g = TimeGrid(1.0, 1)
        w = drift_weights(riemann_liouville(0.75), g)
        expect = 1.0 / (1.25 * gamma_fn(1.25))
        assert w[1, 0] == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(0.8826101211, abs=1e-9)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_rl_row_sums_match_power_integral(self, H, grid):
        w = drift_weights(riemann_liouville(H), grid)
        nodes = grid.nodes
        for j in (1, 13, 64):
            total = w[j, :j].sum()
            assert total == pytest.approx(
                kernel_pow_integral(riemann_liouville(H), float(nodes[j]), 1.0),
                abs=1e-10)

    def test_fbm_row_sums_match_power_integral(self, quad):
        g = TimeGrid(1.0, 16)
        w = drift_weights(fbm_kernel(0.7), g, SchemeConfig(quad=quad))
        for j in (1, 7, 16):
            total = w[j, :j].sum()
            expect = kernel_pow_integral(fbm_kernel(0.7),
                                         float(g.nodes[j]), 1.0, quad)
            assert total == pytest.approx(expect, abs=1e-8)

    def test_triangularity(self, grid):
        for k in (constant_kernel(2.0), riemann_liouville(0.3),
                  fbm_kernel(0.7)):
            for w in (drift_weights(k, grid), diffusion_weights(k, grid)):
                for j in range(grid.n + 1):
                    assert np.all(w[j, j:] == 0.0)

    def test_diffusion_values(self, grid):
        zc = diffusion_weights(constant_kernel(3.0), grid)
        assert zc[5, 2] == 3.0
        zh = diffusion_weights(riemann_liouville(0.5), grid)
        assert zh[5, 2] == 1.0
        # (1/4)^{-0.2} / Gamma(0.8), from the gamma and power oracles.
        z3 = diffusion_weights(riemann_liouville(0.3), TimeGrid(1.0, 4))
        expect = 0.25 ** (-0.2) / gamma_fn(0.8)
        assert z3[2, 1] == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(1.1333741917, abs=1e-9)

    def test_left_point_drift(self, grid):
        w = drift_weights(riemann_liouville(0.7), grid,
                          SchemeConfig(drift_weighting=LEFT_POINT))
        assert w[3, 1] == pytest.approx(
            (grid.nodes[3] - grid.nodes[1]) ** 0.2 / gamma_fn(1.2) * grid.dt,
            rel=1e-12)


class TestDeterministic:
    def test_zero_model_stays_at_start(self, grid):
        mo = builtin_model("zero", d=2, m=1)
        traj = solve_deterministic(mo, riemann_liouville(0.7),
                                   [1.5, -2.0], grid)
        assert np.all(traj.values == np.array([1.5, -2.0]))

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_unit_drift_reproduces_kernel_integral(self, H, grid):
        # b = 1 makes the recursion integrate the kernel exactly.
        mo = builtin_model("linear-additive", [0.0, 0.0, 1.0])
        traj = solve_deterministic(mo, riemann_liouville(H), [0.5], grid)
        e = H + 0.5
        for j in (7, 32, 64):
            t = float(grid.nodes[j])
            expect = 0.5 + t ** e / (e * gamma_fn(e))
            assert traj.values[j, 0] == pytest.approx(expect, rel=1e-12)

    def test_unit_drift_left_point_first_order(self):
        # Left-point weighting converges at roughly O(1/n).
        mo = builtin_model("linear-additive", [0.0, 0.0, 1.0])
        k = riemann_liouville(0.75)
        exact = 1.0 / (1.25 * gamma_fn(1.25))
        errs = []
        for n in (64, 128, 256):
            g = TimeGrid(1.0, n)
            traj = solve_deterministic(
                mo, k, [0.0], g, SchemeConfig(drift_weighting=LEFT_POINT))
            errs.append(abs(traj.values[-1, 0] - exact))
        assert errs[0] > errs[1] > errs[2]
        assert errs[0] / errs[2] == pytest.approx(4.0, rel=0.5)

    def test_exponential_growth(self):
        g = TimeGrid(1.0, 2048)
        mo = builtin_model("linear-additive", [1.0, 0.0])
        traj = solve_deterministic(mo, constant_kernel(1.0), [1.0], g)
        assert traj.values[-1, 0] == pytest.approx(math.e, abs=1e-3)


class TestPerturbed:
    def test_zero_noise_matches_deterministic(self, grid):
        mo = builtin_model("linear-additive", [-1.0, 0.0])
        path = make_path(3, 0, grid, 1)
        pert = solve_perturbed(mo, riemann_liouville(0.7),
                               riemann_liouville(0.7), [1.0], 0.5, path, grid)
        det = solve_deterministic(mo, riemann_liouville(0.7), [1.0], grid)
        assert np.array_equal(pert.values, det.values)

    def test_pure_noise_is_scaled_random_walk(self, grid):
        mo = builtin_model("linear-additive", [0.0, 1.0])
        path = make_path(4, 2, grid, 1)
        eps = 0.04
        pert = solve_perturbed(mo, constant_kernel(1.0), constant_kernel(1.0),
                               [2.0], eps, path, grid)
        walk = 2.0 + math.sqrt(eps) * np.concatenate(
            [[0.0], np.cumsum(path.increments[:, 0])])
        assert np.allclose(pert.values[:, 0], walk, rtol=0, atol=1e-12)

    def test_ito_isometry_rl_kernel(self):
        # Var X_1 = eps * sum z^2 dt -> eps * int K^2 over (0,1).
        g = TimeGrid(1.0, 512)
        mo = builtin_model("linear-additive", [0.0, 1.0])
        eps = 0.25
        scheme = VolterraScheme(riemann_liouville(0.7), riemann_liouville(0.7), g)
        dB = make_increment_stack(17, range(10_000), g, 1)
        vals = scheme.perturbed(mo, [0.0], eps, dB)
        sample_var = vals[:, -1, 0].var(ddof=1)
        exact = eps * kernel_pow_integral(riemann_liouville(0.7), 1.0, 2.0)
        se = sample_var * math.sqrt(2.0 / 10_000)
        assert abs(sample_var - exact) <= 3.0 * se + 5e-3 * exact

    def test_eps_domain(self, grid):
        mo = builtin_model("sin-drift", [1.0])
        path = make_path(1, 0, grid, 1)
        for eps in (0.0, -0.5, 1.5):
            with pytest.raises(ContractError):
                solve_perturbed(mo, constant_kernel(1.0), constant_kernel(1.0),
                                [0.0], eps, path, grid)

    def test_grid_mismatch(self, grid):
        mo = builtin_model("sin-drift", [1.0])
        other = make_path(1, 0, TimeGrid(1.0, 32), 1)
        with pytest.raises(ContractError):
            solve_perturbed(mo, constant_kernel(1.0), constant_kernel(1.0),
                            [0.0], 0.1, other, grid)

    def test_divergence_detection(self, grid):
        # Explosive linear drift with a huge coefficient overflows quickly.
        mo = builtin_model("linear-additive", [2000.0, 0.0])
        with pytest.raises(DivergenceError) as err:
            solve_deterministic(mo, constant_kernel(1.0), [1.0], grid)
        assert err.value.step is not None


class TestLimit:
    def test_zero_diffusion_gives_zero(self, grid):
        mo = builtin_model("linear-additive", [-1.0, 0.0])
        path = make_path(9, 0, grid, 1)
        traj = solve_limit(mo, constant_kernel(1.0), constant_kernel(1.0),
                           [1.0], path, grid)
        assert np.all(traj.values == 0.0)

    def test_no_drift_is_random_walk(self, grid):
        mo = builtin_model("linear-additive", [0.0, 1.0])
        path = make_path(11, 1, grid, 1)
        traj = solve_limit(mo, constant_kernel(1.0), constant_kernel(1.0),
                           [5.0], path, grid)
        walk = np.concatenate([[0.0], np.cumsum(path.increments[:, 0])])
        assert np.allclose(traj.values[:, 0], walk, atol=1e-12)

    def test_ou_stationary_variance(self):
        g = TimeGrid(1.0, 2048)
        a, c = -1.0, 1.0
        mo = builtin_model("linear-additive", [a, c])
        scheme = VolterraScheme(constant_kernel(1.0), constant_kernel(1.0), g)
        dB = make_increment_stack(7, range(10_000), g, 1)
        z = scheme.limit(mo, [0.0], dB)
        var = z[:, -1, 0].var(ddof=1)
        target = c * c * (math.exp(2 * a) - 1.0) / (2 * a)
        se = var * math.sqrt(2.0 / 10_000)
        assert abs(var - target) <= 3.0 * se + 2e-3

    def test_initial_value_is_zero(self, grid):
        mo = builtin_model("sin-drift", [1.0])
        path = make_path(2, 0, grid, 1)
        traj = solve_limit(mo, riemann_liouville(0.7), riemann_liouville(0.7),
                           [1.0], path, grid)
        assert np.all(traj.values[0] == 0.0)


class TestNormalizedError:
    def test_identical_inputs_give_zero(self, grid):
        mo = builtin_model("sin-drift", [1.0])
        det = solve_deterministic(mo, constant_kernel(1.0), [1.0], grid)
        out = normalized_error(det, det, 0.01)
        assert np.all(out.values == 0.0)
        assert out.label == "NormalizedZeps"

    def test_grid_mismatch(self, grid):
        mo = builtin_model("sin-drift", [1.0])
        det1 = solve_deterministic(mo, constant_kernel(1.0), [1.0], grid)
        det2 = solve_deterministic(mo, constant_kernel(1.0), [1.0],
                                   TimeGrid(1.0, 32))
        with pytest.raises(ContractError):
            normalized_error(det1, det2, 0.1)

    @pytest.mark.parametrize("kernel", [constant_kernel(1.0),
                                        riemann_liouville(0.3),
                                        riemann_liouville(0.7),
                                        fbm_kernel(0.7)])
    def test_linear_exactness(self, kernel):
        # For linear drift and constant diffusion the rescaled fluctuation
        # satisfies the same recursion as the limit process.
        g = TimeGrid(1.0, 128)
        mo = builtin_model("linear-additive", [-1.0, 1.0])
        path = make_path(21, 5, g, 1)
        det = solve_deterministic(mo, kernel, [1.0], g)
        lim = solve_limit(mo, kernel, kernel, [1.0], path, g)
        for eps in (1e-1, 1e-2, 1e-4):
            pert = solve_perturbed(mo, kernel, kernel, [1.0], eps, path, g)
            resc = normalized_error(pert, det, eps)
            gap = np.abs(resc.values - lim.values).max()
            scale = max(np.abs(lim.values).max(), 1e-30)
            assert gap / scale < 1e-8


class TestSchemeProperties:
    def test_causality(self, grid):
        # Changing one increment only affects later nodes.
        mo = builtin_model("sin-drift", [1.0])
        base = make_path(33, 0, grid, 1)
        bumped = np.array(base.increments)
        k_bump = 20
        bumped[k_bump, 0] += 0.5
        bumped_path = PathBundle(grid=grid, m=1, increments=bumped,
                                 master_seed=33, path_index=0)
        a = solve_perturbed(mo, constant_kernel(1.0), constant_kernel(1.0),
                            [0.0], 0.25, base, grid)
        b = solve_perturbed(mo, constant_kernel(1.0), constant_kernel(1.0),
                            [0.0], 0.25, bumped_path, grid)
        assert np.array_equal(a.values[:k_bump + 1], b.values[:k_bump + 1])
        assert np.any(a.values[k_bump + 1:] != b.values[k_bump + 1:])

    def test_drift_weighting_consistency(self):
        # Smooth kernels: the two drift weightings differ by about O(1/n).
        mo = builtin_model("sin-drift", [1.0])
        gaps = []
        for n in (64, 128):
            g = TimeGrid(1.0, n)
            a = solve_deterministic(mo, constant_kernel(1.0), [1.0], g,
                                    SchemeConfig(drift_weighting=KERNEL_INTEGRATED))
            b = solve_deterministic(mo, constant_kernel(1.0), [1.0], g,
                                    SchemeConfig(drift_weighting=LEFT_POINT))
            gaps.append(np.abs(a.values - b.values).max())
        assert gaps[1] == pytest.approx(gaps[0] / 2.0, rel=0.35)

    def test_rescaled_fluctuation_independent_of_eps_for_additive_noise(
            self, grid):
        mo = builtin_model("linear-additive", [0.0, 1.0])
        path = make_path(44, 0, grid, 1)
        det = solve_deterministic(mo, constant_kernel(1.0), [0.0], grid)
        outs = []
        for eps in (0.5, 0.01):
            pert = solve_perturbed(mo, constant_kernel(1.0),
                                   constant_kernel(1.0), [0.0], eps, path,
                                   grid)
            outs.append(normalized_error(pert, det, eps).values)
        assert np.allclose(outs[0], outs[1], atol=1e-13)
