import numpy as np
import pytest

from slowfast_is import CoefficientSet, GridSpec, ScaleRegime, validate_model
from slowfast_is.errors import ModelValidationError
from slowfast_is.experiments import build_preset


class TestScaleRegime:
    def test_r2_delta(self):
        # [TRIVIAL] delta = eps / gamma
        assert ScaleRegime("R2", gamma=4.0).delta(0.5) == 0.125

    def test_power_regimes(self):
        assert ScaleRegime("R1", exponent=2.0).delta(0.25) == pytest.approx(0.0625)
        assert ScaleRegime("R3", exponent=0.5).delta(0.25) == pytest.approx(0.5)
        assert ScaleRegime("R1", exponent=1.5).ratio(0.25) == pytest.approx(2.0)

    @pytest.mark.parametrize("kw", [
        dict(tag="R4", exponent=2.0),
        dict(tag="R1", exponent=1.0),
        dict(tag="R3", exponent=1.5),
        dict(tag="R2"),
        dict(tag="R2", gamma=-1.0),
        dict(tag="R1"),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ScaleRegime(**kw)

    def test_delta_needs_positive_eps(self):
        with pytest.raises(ValueError):
            ScaleRegime("R2", gamma=1.0).delta(0.0)


class TestCoefficientSet:
    def test_evaluate_shapes(self, rl_model):
        v = rl_model.evaluate(np.array([[0.2], [0.4]]), np.array([0.1, 0.3]))
        assert v.b.shape == (2, 1)
        assert v.sigma.shape == (2, 1, 1)
        assert v.tau1.shape == (2, 1)
        assert v.f.shape == (2,)

    def test_rough_langevin_values(self, rl_model):
        # b = f = 2 pi sin(2 pi y), c = g = -x, sigma = sqrt(2)
        v = rl_model.evaluate(np.array([0.5]), np.array([0.25]))
        assert v.b[0, 0] == pytest.approx(2 * np.pi)
        assert v.f[0] == pytest.approx(2 * np.pi)
        assert v.c[0, 0] == pytest.approx(-0.5)
        assert v.sigma[0, 0, 0] == pytest.approx(np.sqrt(2.0))

    def test_bad_dimensions(self, rl_model):
        from dataclasses import replace
        with pytest.raises(ValueError):
            replace(rl_model, m=0)
        with pytest.raises(ValueError):
            replace(rl_model, period=0.0)


class TestValidateModel:
    def test_rough_langevin_ok(self, rl_model):
        rep = validate_model(rl_model, ScaleRegime("R1", exponent=2.0))
        assert rep.ok, rep.failures
        assert rep.periodicity_ok
        assert rep.ellipticity_min == pytest.approx(2.0, rel=1e-12)
        assert rep.centering_residual is not None
        assert float(np.max(rep.centering_residual)) < 1e-8

    def test_zero_noise_fails_ellipticity(self):
        model = build_preset("rough_langevin", {"sigma_scale": "0"})
        rep = validate_model(model, ScaleRegime("R1", exponent=2.0))
        assert not rep.ok
        assert any("ellipticity" in f for f in rep.failures)
        with pytest.raises(ModelValidationError):
            rep.require_ok()

    def test_non_periodic_coefficient(self, rl_model):
        from dataclasses import replace
        bad = replace(rl_model, g=lambda x, y: -x[..., 0] + 0.3 * y)
        rep = validate_model(bad, ScaleRegime("R2", gamma=1.0))
        assert not rep.periodicity_ok
        assert not rep.ok

    def test_uncentered_drift_fails_only_in_r1(self, rl_model):
        from dataclasses import replace
        bad = replace(rl_model, b=lambda x, y: 1.0 + 0.0 * np.asarray(y)[..., None])
        assert not validate_model(bad, ScaleRegime("R1", exponent=2.0)).ok
        assert validate_model(bad, ScaleRegime("R2", gamma=1.0)).ok

    def test_non_finite_raises(self, rl_model):
        from dataclasses import replace
        bad = replace(rl_model, c=lambda x, y: np.full(np.shape(y) + (1,), np.nan))
        with pytest.raises(ModelValidationError):
            validate_model(bad, ScaleRegime("R2", gamma=1.0))

    def test_coarse_grid_rejected(self, rl_model):
        with pytest.raises(ValueError):
            validate_model(rl_model, ScaleRegime("R2", gamma=1.0), GridSpec(n_fast=8))

    def test_rows_are_key_value(self, rl_model):
        rows = validate_model(rl_model, ScaleRegime("R2", gamma=1.0)).rows()
        assert [k for k, _ in rows][:2] == ["regime", "periodicity_ok"]
        assert dict(rows)["ok"] is True


class TestPresets:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            build_preset("nope", {})

    def test_unknown_param(self):
        with pytest.raises(ValueError, match="unknown parameters"):
            build_preset("rough_langevin", {"colour": "red"})

    def test_fast_vol_ou_needs_r1(self):
        with pytest.raises(ValueError):
            build_preset("fast_vol", {"periodic": "false"}, ScaleRegime("R3", exponent=0.5))
        m = build_preset("fast_vol", {"periodic": "false"}, ScaleRegime("R1", exponent=2.0))
        assert m.period == np.inf

    def test_bad_bool(self):
        with pytest.raises(ValueError):
            build_preset("fast_vol", {"periodic": "maybe"})
