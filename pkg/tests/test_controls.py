import numpy as np
import pytest

from slowfast_is.engine import (
    PeriodicTable,
    constant_policy,
    gradient_range,
    make_control_r1,
    make_control_r2,
    make_control_r3,
    zero_policy,
)
from slowfast_is.errors import LatticeError
from slowfast_is.torus import (
    TorusGrid,
    cell_provider_r1,
    cell_provider_r2,
    cell_provider_r3,
    solve_cell_r1,
    solve_cell_r3,
)
from slowfast_is.variational import LinearCost, QuadraticCost, affine_subsolution, hopf_lax_subsolution


class TestPeriodicTable:
    def test_interpolates_and_wraps(self):
        g = TorusGrid(64)
        vals = np.vstack([np.sin(2 * np.pi * g.nodes), np.cos(2 * np.pi * g.nodes)])
        tab = PeriodicTable(vals, g)
        y = np.array([0.123, 1.123, -0.877])
        np.testing.assert_allclose(tab(np.zeros(3), y), np.sin(2 * np.pi * 0.123), atol=1e-6)
        np.testing.assert_allclose(tab(np.ones(3), y), np.cos(2 * np.pi * 0.123), atol=1e-6)

    def test_nodes_exact(self):
        g = TorusGrid(64)
        v = np.random.default_rng(1).normal(size=(1, 64))
        np.testing.assert_allclose(PeriodicTable(v, g)(np.zeros(64), g.nodes), v[0], atol=1e-13)


class TestSimplePolicies:
    def test_zero_and_constant(self):
        u1, u2 = zero_policy(2)(0.0, np.zeros((3, 1)), np.zeros(3))
        assert u1.shape == (3, 2) and not u1.any()
        u1, u2 = constant_policy([0.5], [-0.5])(0.0, np.zeros((2, 1)), np.zeros(2))
        assert u1.tolist() == [[0.5], [0.5]] and u2.tolist() == [[-0.5], [-0.5]]


class TestR1Control:
    def test_formula(self, rl_model, grid256):
        # [DERIVED] u1 = -(sigma + chi' tau1) DU with sigma = tau1 = sqrt 2, tau2 = 0
        sub = hopf_lax_subsolution(QuadraticCost([1.0]), (np.zeros(1), np.eye(1)), 1.0)
        pol = make_control_r1(sub, cell_provider_r1(rl_model, grid256), rl_model)
        y = grid256.nodes[::37]
        x = np.full((y.size, 1), 0.4)
        u1, u2 = pol(0.2, x, y)
        dchi = solve_cell_r1(rl_model, [0.4], grid256).dchi_dy[::37, 0]
        expect = -np.sqrt(2.0) * (1 + dchi) * sub.grad_x(0.2, x)[:, 0]
        np.testing.assert_allclose(u1[:, 0], expect, atol=1e-12)
        assert not u2.any()
        assert pol.regime == "R1" and "corrector" in pol.provenance

    def test_zero_corrector_needs_b_zero(self, rl_model):
        sub = affine_subsolution([1.0], 0.0, 0.0, LinearCost([1.0]), 1.0)
        with pytest.raises(ValueError):
            make_control_r1(sub, None, rl_model)

    def test_sup_norm(self, rl_model, grid256):
        sub = affine_subsolution([0.5], 0.0, 0.0, LinearCost([0.5]), 1.0)
        pol = make_control_r1(sub, cell_provider_r1(rl_model, grid256), rl_model)
        # [DERIVED] |u1| = sqrt2 * 0.5 * (1 + chi') = sqrt2 * 0.5 * e^{Q}/L_hat, maximal at Q = 1
        from scipy.special import i0
        assert pol.sup_norm(rl_model, ([-1.0], [1.0]), [0.0], n_y=64) == pytest.approx(
            np.sqrt(2) * 0.5 * np.e / i0(1.0), rel=1e-6)


class TestCellControls:
    def test_r3_matches_cell(self, fv_model, grid256):
        sub = affine_subsolution([0.8], 0.0, 0.0, LinearCost([0.8]), 1.0)
        pol = make_control_r3(sub, cell_provider_r3(fv_model, grid256), fv_model,
                              p_range=(0.7, 0.9), n_p=3)
        y = grid256.nodes[::29]
        u1, u2 = pol(0.0, np.zeros((y.size, 1)), y)
        sol = solve_cell_r3(fv_model, [0.0], [0.8], grid256)
        v = fv_model.evaluate(np.zeros(1), y)
        expect = -v.sigma[:, 0, 0] * 0.8 - v.tau1[:, 0] * sol.dxi0_dy[::29]
        np.testing.assert_allclose(u1[:, 0], expect, atol=1e-10)

    def test_lattice_range(self, fv_model, grid256):
        sub = hopf_lax_subsolution(QuadraticCost([1.0]), (np.zeros(1), np.eye(1)), 1.0)
        pol = make_control_r2(sub, cell_provider_r2(fv_model, 1.0, grid256), fv_model, 1.0,
                              p_range=(-0.1, 0.1), n_p=3)
        with pytest.raises(LatticeError):
            pol(0.0, np.array([[-3.0]]), np.zeros(1))

    def test_gradient_range_covers(self):
        sub = hopf_lax_subsolution(QuadraticCost([1.0]), (np.zeros(1), np.eye(1)), 1.0)
        lo, hi = gradient_range(sub, ([-1.0], [1.0]), 0.0)
        # DU = 2 (x - 1) / (1 + 2 tau) lies in [-4, 0] on the box
        assert lo <= -4.0 and hi >= 0.0

    def test_r2_rejects_gamma(self, fv_model, grid256):
        sub = affine_subsolution([0.5], 0.0, 0.0, LinearCost([0.5]), 1.0)
        with pytest.raises(ValueError):
            make_control_r2(sub, None, fv_model, 0.0, p_range=(0, 1))
