"""Command-line frontend.

    slowfast-is COMMAND --config run.ini [--seed N] [--threads N] [--out DIR] [--no-timing]

Commands: validate, solve-cell, effective, quasipotential, estimate, sweep.
Exit status 0 on success, 1 on a computation or validation failure and 2 on
a configuration error.  Every output is a UTF-8 CSV file with a header row.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine
from .config import RunConfig, load_config
from .errors import ConfigError, SlowFastError
from .experiments import FastVolSpec, build_preset, fast_vol_q_gauss_hermite
from .model import GridSpec, ScaleRegime, validate_model
from .torus import (
    EffectiveDynamics,
    HamiltonianR2,
    TabulatedEffective,
    TorusGrid,
    cell_provider_r1,
    cell_provider_r2,
    cell_provider_r3,
    solve_cell_r1,
    solve_cell_r2,
    solve_cell_r3,
)
from .variational import (
    HamiltonianHandle,
    LinearCost,
    QuadraticCost,
    VerifyGrid,
    ZeroCost,
    affine_subsolution,
    hopf_lax_subsolution,
    hopf_lax_value,
    path_opt_value,
    table_subsolution,
    verify_subsolution,
    zero_subsolution,
)

log = logging.getLogger("slowfast_is")

OUT_ENV = "SLOWFAST_IS_OUT"


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v


# ---------------------------------------------------------------------------
# problem assembly


class Problem:
    """Objects shared by the commands, built lazily from a config."""

    def __init__(self, cfg: RunConfig, seed: Optional[int] = None):
        self.cfg = cfg
        reg = cfg.section("regime")
        try:
            self.regime = ScaleRegime(reg["tag"], gamma=reg["gamma"], exponent=reg["exponent"])
        except ValueError as exc:
            raise ConfigError(f"{cfg.where('regime')}: {exc}") from None
        name = cfg.get("model", "name")
        params = cfg.section("model.params")
        try:
            self.model = build_preset(name, params, self.regime)
        except ValueError as exc:
            raise ConfigError(f"{cfg.where('model.params')}: {exc}") from None
        self.params = params
        sim = cfg.section("sim")
        self.seed = int(seed) if seed is not None else sim["seed"]
        self.sim = sim
        self.x0 = np.asarray(sim["x0"], float)
        if self.x0.size != self.model.m:
            raise ConfigError(f"{cfg.where('sim', 'x0')}: needs {self.model.m} value(s)")
        order = int(cfg.get("solver", "order"))
        self.order = order
        n = cfg.get("solver", "n")
        self._grid = None
        self._n = n
        box = cfg.get("subsolution", "verify_box")
        if len(box) != 2 * self.model.m:
            raise ConfigError(f"{cfg.where('subsolution', 'verify_box')}: needs lo and hi per slow dimension")
        m = self.model.m
        self.box = (np.asarray(box[:m]), np.asarray(box[m:]))
        self._eff = None
        self._ham = None
        self._sub = None

    # grids and effective objects

    @property
    def periodic(self) -> bool:
        return bool(np.isfinite(self.model.period))

    @property
    def grid(self) -> TorusGrid:
        if self._grid is None:
            if not self.periodic:
                raise SlowFastError("the fast variable is not periodic; cell problems are unavailable "
                                    "(set model.params periodic = true)")
            try:
                self._grid = TorusGrid(self._n, self.model.period)
            except ValueError as exc:
                raise ConfigError(f"{self.cfg.where('solver', 'n')}: {exc}") from None
        return self._grid

    def effective(self) -> EffectiveDynamics:
        """R1 effective dynamics (closed form for the Gaussian fast factor)."""
        if self._eff is None:
            if self.periodic:
                self._eff = EffectiveDynamics(self.model, self.grid, order=self.order)
            elif self.model.name == "fast_vol":
                spec = FastVolSpec.sine(amplitude=float(self.params.get("amplitude", 0.5)),
                                        m=float(self.params.get("m", 0.0)))
                scale = float(self.params.get("sigma_scale", 1.0))
                q = scale**2 * fast_vol_q_gauss_hermite(spec)
                self._eff = EffectiveDynamics.from_constant(np.zeros(1), np.array([[q]]))
            else:
                raise SlowFastError("no effective dynamics for a non-periodic fast variable")
        return self._eff

    def tabulated(self) -> EffectiveDynamics:
        """Spline table of the R1 coefficients over the padded verification box."""
        eff = self.effective()
        if eff.is_constant_input or self.model.m != 1:
            return eff
        lo, hi = float(self.box[0][0]), float(self.box[1][0])
        pad = hi - lo
        return TabulatedEffective(eff, np.linspace(lo - pad, hi + pad, 61))

    def hamiltonian(self) -> HamiltonianHandle:
        if self._ham is None:
            if self.regime.tag == "R1":
                self._ham = HamiltonianHandle.from_effective(self.effective())
            else:
                gamma = self.regime.gamma if self.regime.tag == "R2" else 0.0
                self._ham = HamiltonianHandle.from_cells(HamiltonianR2(self.model, gamma, self.grid),
                                                         self.regime.tag)
        return self._ham

    def probe_points(self) -> np.ndarray:
        lo, hi = self.box
        return np.array([lo + f * (hi - lo) for f in (0.0, 0.3, 0.5, 0.8, 1.0)])

    def constant_rq(self):
        """Constant ``(r, q)`` with ``H(x, p) = <r, p> - p q p / 2``.

        R1 checks the effective coefficients on probe points; R2/R3 fit the
        quadratic to the cell Hamiltonian and check the fit.
        """
        if self.regime.tag == "R1":
            eff = self.effective()
            pts = self.probe_points()
            if not eff.is_constant(pts):
                raise SlowFastError("effective coefficients are not constant on the verification box; "
                                    "Hopf-Lax does not apply")
            return eff.r(pts[0]), eff.q(pts[0])
        if self.model.m != 1:
            raise SlowFastError("quadratic fit of the cell Hamiltonian needs m = 1")
        ham = self.hamiltonian()
        pts = self.probe_points()
        vals = {p: [float(ham(x, np.array([p]))) for x in pts] for p in (-2.0, -1.0, 0.0, 1.0, 2.0)}
        for p, v in vals.items():
            if np.ptp(v) > 1e-8 * (1 + np.max(np.abs(v))):
                raise SlowFastError("the cell Hamiltonian depends on x; Hopf-Lax does not apply")
        H = {p: v[0] for p, v in vals.items()}
        r = 0.5 * (H[1.0] - H[-1.0])
        q = -(H[1.0] + H[-1.0] - 2 * H[0.0])
        for p in (-2.0, 2.0):
            if abs(H[p] - (r * p - 0.5 * q * p * p) - H[0.0]) > 1e-7 * (1 + abs(H[p])):
                raise SlowFastError("the cell Hamiltonian is not quadratic in p; Hopf-Lax does not apply")
        if abs(H[0.0]) > 1e-8:
            raise SlowFastError("the cell Hamiltonian does not vanish at p = 0")
        return np.array([r]), np.array([[q]])

    def frozen_rq(self, at):
        """R1 effective coefficients evaluated at one slow point."""
        if self.regime.tag != "R1":
            raise ConfigError(f"{self.cfg.where('subsolution', 'freeze_at')}: only available in R1")
        x = np.asarray(at, float)
        if x.size != self.model.m:
            raise ConfigError(f"{self.cfg.where('subsolution', 'freeze_at')}: needs {self.model.m} value(s)")
        eff = self.effective()
        return eff.r(x), eff.q(x)

    # functionals and subsolutions

    def terminal_cost(self):
        f = self.cfg.section("functional")
        m = self.model.m
        if f["h"] == "zero":
            return ZeroCost(m)
        if f["h"] == "linear":
            a = f["a"]
            if len(a) != m:
                raise ConfigError(f"{self.cfg.where('functional', 'a')}: needs {m} value(s)")
            return LinearCost(a, f["offset"])
        center = f["center"]
        if len(center) != m:
            raise ConfigError(f"{self.cfg.where('functional', 'center')}: needs {m} value(s)")
        return QuadraticCost(center, f["weight"], f["offset"])

    def functional(self):
        f = self.cfg.section("functional")
        if f["kind"] == "exp_cost":
            return engine.ExpCost(self.terminal_cost())
        if f["set"] == "box":
            if f["lo"] is None or f["hi"] is None:
                raise ConfigError(f"{self.cfg.where('functional')}: a box needs lo and hi")
            return engine.Indicator(engine.Box(f["lo"], f["hi"]))
        if f["set"] == "halfspace":
            if f["normal"] is None or f["level"] is None:
                raise ConfigError(f"{self.cfg.where('functional')}: a halfspace needs normal and level")
            return engine.Indicator(engine.HalfSpace(f["normal"], f["level"]))
        raise ConfigError(f"{self.cfg.where('functional', 'set')}: indicator needs set = box | halfspace")

    def subsolution(self):
        if self._sub is not None:
            return self._sub
        s = self.cfg.section("subsolution")
        h = self.terminal_cost()
        T = self.sim["T"]
        m = self.model.m
        kind = s["kind"]
        if kind == "zero":
            sub = zero_subsolution(h, T, m)
        elif kind == "affine":
            if s["a"] is None or len(s["a"]) != m:
                raise ConfigError(f"{self.cfg.where('subsolution', 'a')}: affine needs {m} value(s) for a")
            a = np.asarray(s["a"], float)
            ham = self.hamiltonian()
            vals = [float(ham(x, a)) for x in self.probe_points()]
            if np.ptp(vals) > 1e-8 * (1 + np.max(np.abs(vals))):
                raise SlowFastError("H(x, a) depends on x; the affine family needs it constant")
            sub = affine_subsolution(a, s["b"], vals[0], h, T)
        elif kind == "hopf_lax":
            if s["freeze_at"] is not None:
                sub = hopf_lax_subsolution(h, self.frozen_rq(s["freeze_at"]), T)
            else:
                sub = hopf_lax_subsolution(h, self.constant_rq(), T)
        else:
            if not s["table"]:
                raise ConfigError(f"{self.cfg.where('subsolution')}: kind = table needs a table path")
            sub = load_table_subsolution(self._resolve(s["table"]), h)
        self._sub = sub
        return sub

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.cfg.source not in ("<string>", ""):
            p = Path(self.cfg.source).parent / p
        return p

    def policy(self):
        c = self.cfg.section("control")
        k = self.model.kappa
        if c["policy"] == "zero":
            return engine.zero_policy(k)
        sub = self.subsolution()
        lattice = np.asarray(c["x_lattice"], float) if c["x_lattice"] else None
        if lattice is not None and (lattice.size < 2 or np.any(np.diff(lattice) <= 0)):
            raise ConfigError(f"{self.cfg.where('control', 'x_lattice')}: needs at least 2 increasing nodes")
        tag = self.regime.tag
        if tag == "R1":
            if not self.periodic:
                return engine.make_control_r1(sub, None, self.model)
            provider = cell_provider_r1(self.model, self.grid, order=self.order)
            return engine.make_control_r1(sub, provider, self.model, grid=self.grid, x_lattice=lattice)
        p_range = engine.gradient_range(sub, self.box, self.sim["t0"])
        if tag == "R2":
            provider = cell_provider_r2(self.model, self.regime.gamma, self.grid, order=self.order)
            return engine.make_control_r2(sub, provider, self.model, self.regime.gamma, p_range=p_range,
                                          n_p=c["p_nodes"], x_lattice=lattice, grid=self.grid)
        provider = cell_provider_r3(self.model, self.grid)
        return engine.make_control_r3(sub, provider, self.model, p_range=p_range, n_p=c["p_nodes"],
                                      x_lattice=lattice, grid=self.grid)

    def sim_template(self) -> dict:
        s = self.sim
        tpl = dict(t0=s["t0"], T=s["T"], n_paths=s["n_paths"], seed=self.seed, x0=tuple(s["x0"]),
                   y0=s["y0"], c_fast=s["c_fast"], chunk_size=s["chunk_size"], model=self.model)
        if s["dt"] != "auto":
            tpl["dt"] = s["dt"]
        return tpl

    def quasipotential(self, t, x):
        """``(G, z)`` with the configured method; z is the path endpoint."""
        q = self.cfg.section("quasipotential")
        h = self.terminal_cost()
        T = self.sim["T"]
        x = np.atleast_1d(np.asarray(x, float))
        if q["method"] == "hopf_lax" or self.regime.tag != "R1":
            r, qq = self.constant_rq()
            return hopf_lax_value(t, x, h, r, qq, T)
        G, path = path_opt_value(t, x, h, self.tabulated(), T, K=q["K"], n_starts=q["n_starts"],
                                 seed=self.seed)
        return G, path.nodes[-1]

    def bound(self) -> float:
        """``G + U`` at ``(t0, x0)`` or NaN when G is unavailable."""
        t0 = self.sim["t0"]
        try:
            G = self.quasipotential(t0, self.x0)[0]
        except (SlowFastError, ValueError) as exc:
            log.warning("decay bound unavailable: %s", exc)
            return float("nan")
        return engine.decay_bound(self.subsolution(), t0, self.x0, float(G))


def load_table_subsolution(path: Path, h):
    """Read a long-format CSV with columns ``t, x, u`` on a full grid."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read subsolution table {path}: {exc}") from None
    try:
        t, x, u = data["t"], data["x"], data["u"]
    except (ValueError, IndexError):
        raise ConfigError(f"{path}: subsolution table needs columns t, x, u") from None
    ts, xs = np.unique(t), np.unique(x)
    if ts.size * xs.size != t.size:
        raise ConfigError(f"{path}: table is not a full (t, x) grid")
    grid = np.full((ts.size, xs.size), np.nan)
    grid[np.searchsorted(ts, t), np.searchsorted(xs, x)] = u
    if np.isnan(grid).any():
        raise ConfigError(f"{path}: table has missing (t, x) entries")
    return table_subsolution(ts, xs, grid, h)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(prob: Problem, out: Path, args) -> int:
    v = prob.cfg.section("validate")
    spec = GridSpec(n_fast=v["n_fast"], n_slow=v["n_slow"], slow_box=tuple(v["slow_box"]))
    try:
        rep = validate_model(prob.model, prob.regime, spec, ell_tol=v["ell_tol"], bound=v["bound"])
    except ValueError as exc:
        raise ConfigError(f"{prob.cfg.where('validate')}: {exc}") from None
    write_csv(out / "validation.csv", ["key", "value"], rep.rows())
    for msg in rep.failures:
        print(f"validation failure: {msg}", file=sys.stderr)
    print("model valid" if rep.ok else "model invalid")
    return 0 if rep.ok else 1


def cmd_solve_cell(prob: Problem, out: Path, args) -> int:
    c = prob.cfg.section("cell")
    m = prob.model.m
    x = np.asarray(c["x"], float)
    if x.size != m:
        raise ConfigError(f"{prob.cfg.where('cell', 'x')}: needs {m} value(s)")
    grid = prob.grid
    y = grid.nodes
    tag = prob.regime.tag
    summary = [("regime", tag), ("n", grid.n), ("period", grid.period)] + [
        (f"x{i + 1}", v) for i, v in enumerate(x)]
    if tag == "R1":
        cell = solve_cell_r1(prob.model, x, grid, order=prob.order)
        if m == 1:
            header = ["y", "chi", "dchi"]
        else:
            header = ["y"] + [f"chi{i + 1}" for i in range(m)] + [f"dchi{i + 1}" for i in range(m)]
        rows = np.column_stack([y, cell.chi, cell.dchi_dy])
        write_csv(out / "cell.csv", header, rows.tolist())
        write_csv(out / "measure.csv", ["y", "value"], np.column_stack([y, cell.measure.density]).tolist())
        summary += [("residual", cell.residual), ("measure_residual", cell.measure.residual)]
    else:
        p = np.asarray(c["p"], float)
        if p.size != m:
            raise ConfigError(f"{prob.cfg.where('cell', 'p')}: needs {m} value(s)")
        summary += [(f"p{i + 1}", v) for i, v in enumerate(p)]
        if tag == "R2":
            sol = solve_cell_r2(prob.model, x, p, prob.regime.gamma, grid, order=prob.order)
            xi, dxi, hb = sol.xi, sol.dxi_dy, sol.h_bar
            summary += [("gamma", prob.regime.gamma), ("h_bar", hb), ("residual", sol.residual),
                        ("iterations", sol.iterations)]
        else:
            sol = solve_cell_r3(prob.model, x, p, grid)
            xi, dxi, hb = sol.xi0, sol.dxi0_dy, sol.h_bar0
            summary += [("h_bar", hb), ("residual", sol.residual), ("branch", sol.branch),
                        ("branch_switch", sol.branch_switch)]
        write_csv(out / "cell.csv", ["y", "xi", "dxi"], np.column_stack([y, xi, dxi]).tolist())
    write_csv(out / "cell_summary.csv", ["key", "value"], summary)
    return 0


def cmd_effective(prob: Problem, out: Path, args) -> int:
    m = prob.model.m
    pts = np.asarray(prob.cfg.get("effective", "x"), float)
    if pts.size % m:
        raise ConfigError(f"{prob.cfg.where('effective', 'x')}: length must be a multiple of {m}")
    pts = pts.reshape(-1, m)
    if prob.regime.tag == "R1":
        eff = prob.effective()
        header = [f"x{i + 1}" for i in range(m)] + [f"r{i + 1}" for i in range(m)] + [
            f"q{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        rows = [[*x, *eff.r(x), *np.ravel(eff.q(x))] for x in pts]
        write_csv(out / "effective.csv", header, rows)
    else:
        ham = prob.hamiltonian()
        ps = np.asarray(prob.cfg.get("effective", "p"), float)
        if ps.size % m:
            raise ConfigError(f"{prob.cfg.where('effective', 'p')}: length must be a multiple of {m}")
        ps = ps.reshape(-1, m)
        header = [f"x{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(m)] + ["h_bar"]
        rows = [[*x, *p, float(ham(x, p))] for x in pts for p in ps]
        write_csv(out / "effective.csv", header, rows)
    return 0


def cmd_quasipotential(prob: Problem, out: Path, args) -> int:
    q = prob.cfg.section("quasipotential")
    m = prob.model.m
    t = q["t"] if q["t"] is not None else prob.sim["t0"]
    xs = np.asarray(q["x"] if q["x"] is not None else prob.x0, float).reshape(-1, m)
    rows = []
    for x in xs:
        G, z = prob.quasipotential(t, x)
        rows.append([t, *x, G, *np.atleast_1d(z)])
    header = ["t"] + [f"x{i + 1}" for i in range(m)] + ["G"] + [f"z{i + 1}" for i in range(m)]
    write_csv(out / "quasipotential.csv", header, rows)

    sub = prob.subsolution()
    s = prob.cfg.section("subsolution")
    rep = verify_subsolution(sub, prob.hamiltonian(), prob.box, VerifyGrid(), t0=prob.sim["t0"],
                             tol=s["verify_tol"])
    write_csv(out / "verification.csv", rep.header(m), rep.rows)
    write_csv(out / "verification_summary.csv", ["key", "value"], [
        ("subsolution", sub.name), ("passed", rep.passed), ("worst_hjb", rep.worst_hjb),
        ("worst_terminal", rep.worst_terminal), ("max_abs_residual", rep.max_abs_residual),
        ("box_lo", " ".join(map(repr, map(float, rep.box[0])))),
        ("box_hi", " ".join(map(repr, map(float, rep.box[1])))), ("tol", rep.tol),
    ])
    print(f"subsolution '{sub.name}' {'passes' if rep.passed else 'fails'} verification "
          f"(worst HJB {rep.worst_hjb:.3e}, worst terminal slack {rep.worst_terminal:.3e})")
    return 0 if rep.passed else 1


def _need_epsilon(prob: Problem) -> float:
    eps = prob.sim["epsilon"]
    if eps is None:
        raise ConfigError(f"{prob.cfg.where('sim')}: estimate needs [sim] epsilon")
    if not eps > 0:
        raise ConfigError(f"{prob.cfg.where('sim', 'epsilon')}: must be positive")
    return eps


def cmd_estimate(prob: Problem, out: Path, args) -> int:
    eps = _need_epsilon(prob)
    try:
        cfg = engine.SimConfig.for_regime(prob.regime, eps, **prob.sim_template())
    except ValueError as exc:
        raise ConfigError(f"{prob.cfg.where('sim')}: {exc}") from None
    policy = prob.policy()
    functional = prob.functional()
    bound = prob.bound()
    rep = engine.estimate(prob.model, prob.regime, cfg, policy, functional, threads=args.threads,
                          bound=bound)
    row = rep.row(timing=not args.no_timing)
    write_csv(out / "estimate.csv", engine.SWEEP_COLUMNS, [[row[c] for c in engine.SWEEP_COLUMNS]])
    if prob.sim["per_path_log"]:
        batch = engine.simulate_batch(prob.model, cfg, policy, threads=args.threads)
        logw = functional.log_weight(batch.x_T, eps)
        m = prob.model.m
        header = ["path"] + [f"x{i + 1}_T" for i in range(m)] + ["log_lr", "log_gamma", "diverged_step"]
        rows = [[i, *batch.x_T[i], batch.log_lr[i], logw[i] + batch.log_lr[i], batch.diverged[i]]
                for i in range(cfg.n_paths)]
        write_csv(out / "paths.csv", header, rows)
    print(f"theta_hat = {rep.theta_hat:.6g} +- {rep.std_err:.3g} (rel_err {rep.rel_err:.3g}, "
          f"{cfg.n_steps} steps, {policy.provenance})")
    return 0


def cmd_sweep(prob: Problem, out: Path, args) -> int:
    eps_list = prob.sim["eps_list"]
    if eps_list is None:
        raise ConfigError(f"{prob.cfg.where('sim')}: sweep needs [sim] eps_list")
    policy = prob.policy()
    functional = prob.functional()
    bound = prob.bound()
    rows = engine.sweep_epsilon(prob.model, prob.regime, lambda e: policy, eps_list,
                                prob.sim_template(), functional, bound=bound, threads=args.threads)
    table = [[r.row(timing=not args.no_timing)[c] for c in engine.SWEEP_COLUMNS] for r in rows]
    write_csv(out / "sweep.csv", engine.SWEEP_COLUMNS, table)
    write_csv(out / "sweep_plot.csv", ["epsilon", "decay_2nd", "bound"],
              [[r.epsilon, r.decay_2nd, r.bound] for r in rows])
    failed = [r for r in rows if r.error]
    if failed:
        write_csv(out / "sweep_errors.csv", ["epsilon", "error"], [[r.epsilon, r.error] for r in failed])
        for r in failed:
            print(f"eps = {r.epsilon}: {r.error}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "solve-cell": cmd_solve_cell,
    "effective": cmd_effective,
    "quasipotential": cmd_quasipotential,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowfast-is",
        description="Cell problems, quasipotentials and importance-sampling estimators "
                    "for small-noise slow-fast diffusions.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("--config", required=True, metavar="PATH", help="run configuration file")
        p.add_argument("--seed", type=int, help="override [sim] seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads for the sampler (default: all cores)")
        p.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_ENV} and [output] dir)")
        p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0 for byte-stable output")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        prob = Problem(cfg, seed=args.seed)
        out = Path(args.out or os.environ.get(OUT_ENV) or cfg.get("output", "dir"))
        return COMMANDS[args.command](prob, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SlowFastError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
