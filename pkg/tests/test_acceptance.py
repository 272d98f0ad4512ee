"""Acceptance criteria at their stated tolerances.

Each test records a PASS/FAIL line; the lines are printed together at the
end of the pytest session (see ``conftest.pytest_terminal_summary``).
"""

import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from slowfast_is import ScaleRegime
from slowfast_is.engine import (
    ExpCost,
    SimConfig,
    constant_policy,
    estimate,
    make_control_r1,
    simulate_batch,
    zero_policy,
)
from slowfast_is.experiments import FastVolSpec, RoughLangevinSpec, build_fast_vol, build_rough_langevin
from slowfast_is.torus import (
    EffectiveDynamics,
    HamiltonianR2,
    TorusGrid,
    cell_provider_r1,
    effective_coefficients,
    solve_cell_r1,
    solve_cell_r2,
    solve_cell_r3,
)
from slowfast_is.variational import (
    HamiltonianHandle,
    LinearCost,
    QuadraticCost,
    affine_subsolution,
    hopf_lax_subsolution,
    hopf_lax_value,
    local_rate_bruteforce_r1,
    verify_subsolution,
    zero_subsolution,
)

R1 = ScaleRegime("R1", exponent=1.5)


def romberg(fn, a=0.0, b=1.0, k=14):
    y = np.linspace(a, b, 2**k + 1)
    return float(integrate.romb(fn(y), dx=(b - a) / 2**k))


@pytest.fixture(scope="module")
def langevin():
    return build_rough_langevin(RoughLangevinSpec.cosine(amplitude=1.0, D=1.0))


@pytest.fixture(scope="module")
def langevin_oracle():
    """L and L_hat for Q = cos(2 pi y), D = 1, by Romberg quadrature."""
    L = romberg(lambda y: np.exp(-np.cos(2 * np.pi * y)))
    L_hat = romberg(lambda y: np.exp(np.cos(2 * np.pi * y)))
    return L, L_hat


@pytest.fixture(scope="module")
def fast_vol():
    spec = FastVolSpec.sine(amplitude=0.5, periodic_surrogate=True)
    return spec, build_fast_vol(spec, ScaleRegime("R3", exponent=0.5))


def test_c01_corrector(langevin, langevin_oracle, verdict):
    _, L_hat = langevin_oracle
    g = TorusGrid(512)
    cell = solve_cell_r1(langevin, [0.0], g)
    exact = np.exp(np.cos(2 * np.pi * g.nodes)) / L_hat - 1.0
    err = float(np.max(np.abs(cell.dchi_dy[:, 0] - exact)))
    verdict(1, "corrector correctness", err <= 1e-4, f"max|chi' - oracle| = {err:.2e} (tol 1e-4)")


def test_c02_effective_coefficients(langevin, langevin_oracle, verdict):
    L, L_hat = langevin_oracle
    _, q = effective_coefficients(langevin, [0.0], TorusGrid(512))
    err_q = abs(q[0, 0] - 2.0 / (L * L_hat))
    flat = build_rough_langevin(RoughLangevinSpec.cosine(amplitude=0.0, D=1.0))
    err_flat = 0.0
    for x in (-1.5, 0.0, 0.7, 2.0):
        r0, q0 = effective_coefficients(flat, [x], TorusGrid(512))
        err_flat = max(err_flat, abs(r0[0] + x), abs(q0[0, 0] - 2.0))
    verdict(2, "effective coefficients", err_q <= 1e-6 and err_flat <= 1e-10,
            f"|q - 2D/(L L_hat)| = {err_q:.2e} (tol 1e-6), Q = 0 max error {err_flat:.2e} (tol 1e-10)")


def test_c03_local_rate_oracles(langevin, langevin_oracle, verdict):
    L, L_hat = langevin_oracle
    factor = 1.0 / (L * L_hat)
    q = 2.0 * factor
    g = TorusGrid(512)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        x, beta = rng.uniform(-2, 2), rng.uniform(-3, 3)
        explicit = (beta + factor * x) ** 2 / (2 * q)
        brute = local_rate_bruteforce_r1([x], [beta], langevin, g)
        worst = max(worst, abs(explicit - brute) / abs(explicit))
    verdict(3, "local-rate oracle equivalence", worst <= 1e-6, f"max relative error {worst:.2e} over 20 points (tol 1e-6)")


def test_c04_regime3_closed_form(fast_vol, verdict):
    spec, model = fast_vol
    g = TorusGrid(512)
    y = g.nodes
    total = integrate.quad(lambda s: float(spec.sigma(s)), 0, 1, epsabs=1e-14)[0]
    partial = np.array([integrate.quad(lambda s: float(spec.sigma(s)), 0, v, epsabs=1e-14)[0] for v in y])
    worst = 0.0
    for p in (-1.3, 0.5, 1.0, 2.0):
        sol = solve_cell_r3(model, [0.0], [p], g)
        xi = p * (y * total - partial)
        xi = xi - xi[0] + sol.xi0[0]
        worst = max(worst, float(np.max(np.abs(sol.xi0 - xi))), abs(sol.h_bar0 + 0.5 * p**2 * total**2))
    verdict(4, "regime-3 closed form", worst <= 1e-8, f"max error in (xi0, H0) {worst:.2e} (tol 1e-8)")


def test_c05_regime_continuity(fast_vol, verdict):
    _, model = fast_vol
    g = TorusGrid(512)
    h0 = solve_cell_r3(model, [0.0], [1.0], g).h_bar0
    gaps = [abs(solve_cell_r2(model, [0.0], [1.0], gam, g).h_bar - h0) for gam in (1e-1, 1e-2, 1e-3)]
    ps = np.linspace(-2.0, 2.0, 9)
    defect = -np.inf
    for gam in (1e-1, 1e-2, 1e-3):
        ham = HamiltonianR2(model, gam, g)
        vals = np.array([ham([0.0], [p]) for p in ps])
        defect = max(defect, float(np.max(vals[2:] - 2 * vals[1:-1] + vals[:-2])))
    ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] <= 1e-2 and defect <= 1e-8
    verdict(5, "regime continuity", ok,
            "gaps " + ", ".join(f"{v:.2e}" for v in gaps) + f"; max second difference {defect:.2e}")


def test_c06_girsanov_normalization(langevin, verdict):
    cfg = SimConfig.for_regime(R1, 0.25, n_paths=10_000, seed=21, model=langevin)
    sub = affine_subsolution([0.5], 0.0, 0.0, LinearCost([0.5]), 1.0)
    policies = [zero_policy(1), constant_policy([0.3], [0.0]),
                make_control_r1(sub, cell_provider_r1(langevin, TorusGrid(256)), langevin)]
    details, ok = [], True
    for pol in policies:
        lr = np.exp(simulate_batch(langevin, cfg, pol).log_lr)
        mean, se = lr.mean(), lr.std(ddof=1) / math.sqrt(lr.size)
        ok &= abs(mean - 1.0) <= 3 * se
        details.append(f"{mean:.4f} +- {se:.4f}")
    verdict(6, "Girsanov normalization", ok, "E[LR] " + "; ".join(details))


def test_c07_unbiasedness(langevin, verdict):
    h = QuadraticCost([1.0])
    eff = EffectiveDynamics(langevin, TorusGrid(256))
    sub = hopf_lax_subsolution(h, (eff.r([0.0]), eff.q([0.0])), 1.0)
    pol = make_control_r1(sub, cell_provider_r1(langevin, TorusGrid(256)), langevin)
    is_cfg = SimConfig.for_regime(R1, 0.25, n_paths=10_000, seed=1, model=langevin)
    mc_cfg = SimConfig.for_regime(R1, 0.25, n_paths=10_000, seed=2, model=langevin)
    a = estimate(langevin, R1, is_cfg, pol, ExpCost(h))
    b = estimate(langevin, R1, mc_cfg, zero_policy(1), ExpCost(h))
    z = abs(a.theta_hat - b.theta_hat) / math.hypot(a.std_err, b.std_err)
    verdict(7, "unbiasedness", z <= 3.0,
            f"IS {a.theta_hat:.5f} +- {a.std_err:.5f}, MC {b.theta_hat:.5f} +- {b.std_err:.5f}, {z:.2f} combined SE")


def test_c08_variance_reduction_and_decay(verdict):
    model = build_rough_langevin(RoughLangevinSpec.cosine(amplitude=0.0, potential="linear", stiffness=0.0))
    eff = EffectiveDynamics(model, TorusGrid(128))
    r, q = eff.r([0.0]), eff.q([0.0])
    h = QuadraticCost([1.0], weight=-0.1, offset=1.2)
    sub = hopf_lax_subsolution(h, (r, q), 1.0)
    rep = verify_subsolution(sub, HamiltonianHandle.from_effective(eff), ([-3.0], [3.0]), tol=1e-8)
    G = hopf_lax_value(0.0, np.zeros(1), h, r, q, 1.0)[0]
    bound = G + float(sub.u(0.0, np.zeros((1, 1)))[0])
    pol = make_control_r1(sub, cell_provider_r1(model, TorusGrid(128)), model)
    rows = {}
    for eps in (0.25, 0.125):
        cfg = dict(n_paths=10_000, model=model)
        is_rep = estimate(model, R1, SimConfig.for_regime(R1, eps, seed=1, **cfg), pol, ExpCost(h))
        mc_rep = estimate(model, R1, SimConfig.for_regime(R1, eps, seed=2, **cfg), zero_policy(1), ExpCost(h))
        rows[eps] = (is_rep, mc_rep)
    better = all(rows[e][0].rel_err <= rows[e][1].rel_err for e in rows)
    d_hi, d_lo = rows[0.25][0].decay_2nd, rows[0.125][0].decay_2nd
    ok = rep.passed and better and d_lo >= 0.85 * bound and d_lo >= d_hi
    verdict(8, "variance reduction and decay bound", ok,
            f"rel_err IS/MC {rows[0.25][0].rel_err:.1e}/{rows[0.25][1].rel_err:.1e} (0.25), "
            f"{rows[0.125][0].rel_err:.1e}/{rows[0.125][1].rel_err:.1e} (0.125); decay_2nd "
            f"{d_hi:.4f} -> {d_lo:.4f}, G + U = {bound:.4f}, ratio {d_lo / bound:.3f}")


def test_c09_subsolution_verification(langevin, verdict):
    g = TorusGrid(256)
    ham = HamiltonianHandle.from_effective(EffectiveDynamics(langevin, g))
    zero = verify_subsolution(zero_subsolution(QuadraticCost([1.0]), 1.0), ham, ([-2.0], [2.0]))
    linear = build_rough_langevin(RoughLangevinSpec.cosine(amplitude=1.0, potential="linear"))
    eff = EffectiveDynamics(linear, g)
    sub = hopf_lax_subsolution(QuadraticCost([1.0]), eff, 1.0, probe=np.array([[-3.0], [0.0], [3.0]]))
    hl = verify_subsolution(sub, HamiltonianHandle.from_effective(eff), ([-3.0], [3.0]), tol=1e-6)
    ok = zero.passed and hl.passed and hl.max_abs_residual <= 1e-6
    verdict(9, "subsolution verification", ok,
            f"U = 0 {'passes' if zero.passed else 'fails'}; Hopf-Lax max |HJB residual| {hl.max_abs_residual:.2e} (tol 1e-6)")


DETERMINISM = """
[model]
name = rough_langevin
[model.params]
amplitude = 1.0
potential = quadratic
[regime]
tag = R1
exponent = 1.5
[solver]
n = 256
[sim]
epsilon = 0.5
eps_list = 0.5, 0.35
T = 0.5
n_paths = 3000
seed = 99
chunk_size = 512
[functional]
h = quadratic
center = 1.0
[subsolution]
kind = hopf_lax
freeze_at = 0.0
"""


def test_c10_determinism(tmp_path, verdict):
    cfg = tmp_path / "det.ini"
    cfg.write_text(DETERMINISM, encoding="utf-8")
    outputs = {}
    for command, name in (("estimate", "estimate.csv"), ("sweep", "sweep.csv")):
        for threads in (1, 3):
            out = tmp_path / f"{command}_{threads}"
            proc = subprocess.run([sys.executable, "-m", "slowfast_is.cli", command, "--config", str(cfg),
                                   "--out", str(out), "--threads", str(threads), "--no-timing"],
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outputs[command, threads] = (out / name).read_bytes()
    same = all(outputs[c, 1] == outputs[c, 3] for c in ("estimate", "sweep"))
    verdict(10, "determinism", same, "estimate and sweep CSV byte-identical for --threads 1 and 3"
            if same else "CSV output differs between thread counts")
