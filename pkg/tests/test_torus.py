import numpy as np
import pytest
from scipy import integrate

from slowfast_is import ScaleRegime
from slowfast_is.errors import CenteringError
from slowfast_is.experiments import (
    RoughLangevinSpec,
    build_rough_langevin,
    fast_vol_r3_closed_form,
    langevin_closed_forms,
)
from slowfast_is.torus import (
    EffectiveDynamics,
    HamiltonianR2,
    TabulatedEffective,
    TorusGrid,
    effective_coefficients,
    solve_cell_r1,
    solve_cell_r2,
    solve_cell_r3,
    solve_invariant_measure,
)

from conftest import fourier_d


class TestGrid:
    def test_nodes(self):
        g = TorusGrid(64, 2.0)
        assert g.h == 2.0 / 64
        assert g.nodes[-1] == 2.0 - 2.0 / 64

    def test_size_rule(self):
        with pytest.raises(ValueError):
            TorusGrid(48)

    @pytest.mark.parametrize("order,rate", [(2, 4.0), (4, 16.0)])
    def test_derivative_convergence(self, order, rate):
        # [DERIVED] error ratio under halving h is 2**order
        errs = []
        for n in (64, 128):
            g = TorusGrid(n)
            y = g.nodes
            errs.append(np.max(np.abs(g.diff(np.sin(2 * np.pi * y), order) - 2 * np.pi * np.cos(2 * np.pi * y))))
        assert errs[0] / errs[1] == pytest.approx(rate, rel=0.05)

    def test_second_derivative(self):
        g = TorusGrid(128)
        y = g.nodes
        err = np.max(np.abs(g.diff2(np.cos(2 * np.pi * y)) + 4 * np.pi**2 * np.cos(2 * np.pi * y)))
        assert err < 1e-4

    def test_integrate(self):
        g = TorusGrid(64)
        assert g.integrate(np.cos(2 * np.pi * g.nodes) ** 2) == pytest.approx(0.5, abs=1e-14)


class TestInvariantMeasure:
    def test_gibbs_density(self, rl_model, rl_spec, grid256):
        # [DERIVED] for f = -Q', a = 2D the stationary density is exp(-Q/D)/L
        mu = solve_invariant_measure(rl_model, [0.0], grid256)
        L = integrate.quad(lambda y: np.exp(-np.cos(2 * np.pi * y)), 0, 1)[0]
        exact = np.exp(-np.cos(2 * np.pi * grid256.nodes)) / L
        assert np.max(np.abs(mu.density - exact)) < 1e-6
        assert grid256.h * mu.density.sum() == pytest.approx(1.0, abs=1e-13)


class TestCellR1:
    def test_corrector_matches_closed_form(self, rl_model, rl_spec, grid256):
        cf = langevin_closed_forms(rl_spec)
        cell = solve_cell_r1(rl_model, [0.3], grid256)
        exact = cf.dchi(rl_spec.Q, rl_spec.D, rl_spec.period)(grid256.nodes)
        assert np.max(np.abs(cell.dchi_dy[:, 0] - exact)) < 1e-6
        assert abs(grid256.h * cell.measure.density @ cell.chi[:, 0]) < 1e-12

    def test_uncentered_raises(self, rl_model, grid256):
        from dataclasses import replace
        bad = replace(rl_model, b=lambda x, y: 1.0 + 0.0 * np.asarray(y)[..., None])
        with pytest.raises(CenteringError):
            solve_cell_r1(bad, [0.0], grid256)

    def test_closed_form_normalizers(self, rl_spec):
        # [DERIVED] L = L_hat = I0(1) for Q = cos(2 pi y), D = 1
        from scipy.special import i0
        cf = langevin_closed_forms(rl_spec)
        assert cf.L == pytest.approx(i0(1.0), rel=1e-13)
        assert cf.L_hat == pytest.approx(i0(1.0), rel=1e-13)


class TestEffective:
    def test_flat_cell(self):
        # [DERIVED] Q = 0: r = -V', q = 2D
        spec = RoughLangevinSpec.cosine(amplitude=0.0, D=0.7)
        r, q = effective_coefficients(build_rough_langevin(spec), [1.3], TorusGrid(64))
        assert r[0] == pytest.approx(-1.3, abs=1e-10)
        assert q[0, 0] == pytest.approx(1.4, abs=1e-10)

    def test_explicit_q(self, rl_model, rl_spec, grid256):
        cf = langevin_closed_forms(rl_spec)
        r, q = effective_coefficients(rl_model, [0.8], grid256)
        assert q[0, 0] == pytest.approx(cf.q, abs=1e-7)
        assert r[0] == pytest.approx(cf.r(np.array(0.8)), abs=1e-7)

    def test_memoized_and_constant_check(self, rl_model, grid256):
        eff = EffectiveDynamics(rl_model, grid256)
        assert eff.q([0.1]) is eff.q([0.1])
        assert not eff.is_constant([[0.0], [1.0]])
        const = EffectiveDynamics.from_constant([0.5], [[2.0]])
        assert const.is_constant_input
        assert const.hamiltonian(None, [1.0]) == pytest.approx(0.5 - 1.0)

    def test_constant_needs_spd(self):
        with pytest.raises(Exception):
            EffectiveDynamics.from_constant([0.0], [[-1.0]])

    def test_tabulated(self, rl_model, grid256):
        eff = EffectiveDynamics(rl_model, grid256)
        tab = TabulatedEffective(eff, np.linspace(-2, 2, 9))
        assert tab.r([0.7])[0] == pytest.approx(eff.r([0.7])[0], abs=1e-10)
        assert tab.q([0.7])[0, 0] == pytest.approx(eff.q([0.7])[0, 0], abs=1e-10)
        with pytest.raises(ValueError):
            tab.r([2.5])


def spectral_hbar(spec, p, gamma, rho=1.0, n=128):
    """Principal eigenvalue of -(gamma^2/2) v'' - gamma B v' + V v with a
    Fourier discretization (periodic surrogate, a = 1)."""
    y = np.arange(n) / n
    sig = spec.sigma(y)
    f = np.sin(2 * np.pi * (spec.m - y)) / (2 * np.pi)
    B = gamma * f - rho * sig * p
    V = -0.5 * sig**2 * p**2
    d1, d2 = fourier_d(n)
    K = -0.5 * gamma**2 * d2 - gamma * B[:, None] * d1 + np.diag(V)
    return float(np.min(np.linalg.eigvals(K).real))


class TestCellR2:
    @pytest.mark.parametrize("gamma", [1.0, 0.1])
    @pytest.mark.parametrize("p", [-1.0, 0.7])
    def test_matches_spectral_eigenvalue(self, fv_model, fv_spec, grid256, gamma, p):
        sol = solve_cell_r2(fv_model, [0.0], [p], gamma, grid256)
        assert sol.h_bar == pytest.approx(spectral_hbar(fv_spec, p, gamma), abs=1e-8)
        assert sol.residual < 1e-6

    def test_zero_p_gives_zero(self, fv_model, grid256):
        # [TRIVIAL] V = 0, B xi' term vanishes for constant xi
        assert solve_cell_r2(fv_model, [0.0], [0.0], 0.5, grid256).h_bar == pytest.approx(0.0, abs=1e-9)

    def test_hamiltonian_concave(self, fv_model, grid256):
        ham = HamiltonianR2(fv_model, 0.1, grid256)
        ps = np.linspace(-1.5, 1.5, 7)
        vals = np.array([ham([0.0], [p]) for p in ps])
        assert np.max(vals[2:] - 2 * vals[1:-1] + vals[:-2]) <= 1e-8


class TestCellR3:
    @pytest.mark.parametrize("p", [0.5, 1.0, -1.3])
    def test_closed_form(self, fv_model, fv_spec, p):
        g = TorusGrid(512)
        sol = solve_cell_r3(fv_model, [0.0], [p], g)
        xi, dxi, H = fast_vol_r3_closed_form(fv_spec, p, g.nodes)
        # [DERIVED] integral of 1 + sin(2 pi y)/2 over a period is 1
        assert H == pytest.approx(-0.5 * p**2, abs=1e-12)
        assert sol.h_bar0 == pytest.approx(H, abs=1e-8)
        assert np.max(np.abs(sol.xi0 - xi)) < 1e-8

    def test_r2_approaches_r3(self, fv_model, grid256):
        h0 = solve_cell_r3(fv_model, [0.0], [1.0], grid256).h_bar0
        gaps = [abs(solve_cell_r2(fv_model, [0.0], [1.0], g, grid256).h_bar - h0) for g in (0.1, 0.01)]
        assert gaps[1] < gaps[0]
