"""Compare the compiled and numpy sampler kernels.

    python benchmarks/bench_kernels.py [--paths 4096] [--repeat 20]

Times one Euler-Maruyama step and one periodic-spline lookup per backend on
identical inputs, checks that the outputs agree bit for bit, and finishes
with an end-to-end batch simulation under each backend.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from slowfast_is import ScaleRegime
from slowfast_is.engine import SimConfig, kernels, simulate_batch, zero_policy
from slowfast_is.experiments import RoughLangevinSpec, build_rough_langevin


def step_inputs(P: int, m: int = 1, k: int = 1, seed: int = 0):
    rng = np.random.default_rng(seed)
    arrays = dict(
        x=rng.standard_normal((P, m)), y=rng.random(P), drift_x=rng.standard_normal((P, m)),
        sig=1.0 + rng.random((P, m, k)), drift_y=rng.standard_normal(P),
        tau1=rng.random((P, k)), tau2=rng.random((P, k)), u1=rng.standard_normal((P, k)),
        u2=rng.standard_normal((P, k)), dW=rng.standard_normal((P, k)), dB=rng.standard_normal((P, k)),
        loglr=np.zeros(P),
    )
    return arrays, (1e-3, 0.5, 8.0, 4.0)


def run_step(arrays, scalars):
    a = {k: v.copy() for k, v in arrays.items()}
    kernels.em_step(a["x"], a["y"], a["drift_x"], a["sig"], a["drift_y"], a["tau1"], a["tau2"],
                    a["u1"], a["u2"], a["dW"], a["dB"], a["loglr"], *scalars)
    return a


def spline_inputs(P: int, n: int = 256, K: int = 8, seed: int = 1):
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((K, 4, n))
    idx = rng.integers(0, K, P).astype(np.int64)
    y = 3.0 * rng.standard_normal(P)
    return coef, idx, y


def time_backend(name, P, repeat):
    kernels.set_backend(name)
    arrays, scalars = step_inputs(P)
    coef, idx, y = spline_inputs(P)
    out = np.empty(P)
    t_step = min(timeit.repeat(lambda: run_step(arrays, scalars), number=1, repeat=repeat))
    t_spline = min(timeit.repeat(lambda: kernels.periodic_cubic(coef, idx, y, 1.0, out),
                                 number=1, repeat=repeat))
    step_out = run_step(arrays, scalars)
    spline_out = kernels.periodic_cubic(coef, idx, y, 1.0, np.empty(P)).copy()
    return t_step, t_spline, step_out, spline_out


def end_to_end(name, n_paths):
    kernels.set_backend(name)
    model = build_rough_langevin(RoughLangevinSpec.cosine())
    cfg = SimConfig.for_regime(ScaleRegime("R1", exponent=1.5), 0.25, T=0.25, n_paths=n_paths,
                               seed=0, x0=(0.0,), model=model)
    t = timeit.default_timer()
    out = simulate_batch(model, cfg, zero_policy(model.kappa))
    return timeit.default_timer() - t, out, cfg.n_steps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--e2e-paths", type=int, default=1024)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    results = {b: time_backend(b, args.paths, args.repeat) for b in backends}
    print(f"{'backend':<10}{'em_step [us]':>14}{'spline [us]':>14}")
    for b, (ts, tc, _, _) in results.items():
        print(f"{b:<10}{1e6 * ts:>14.1f}{1e6 * tc:>14.1f}")
    if len(backends) == 2:
        (_, _, s_c, c_c), (_, _, s_p, c_p) = results["compiled"], results["python"]
        same = all(np.array_equal(s_c[k], s_p[k]) for k in s_c) and np.array_equal(c_c, c_p)
        print(f"outputs bitwise equal: {same}")

    e2e = {b: end_to_end(b, args.e2e_paths) for b in backends}
    for b, (t, _, steps) in e2e.items():
        print(f"end-to-end {b:<9} {t:8.3f} s  ({args.e2e_paths} paths x {steps} steps)")
    if len(backends) == 2:
        a, b = e2e["compiled"][1], e2e["python"][1]
        print(f"end-to-end results bitwise equal: "
              f"{np.array_equal(a.x_T, b.x_T) and np.array_equal(a.log_lr, b.log_lr)}")
    kernels.set_backend(backends[0])


if __name__ == "__main__":
    main()
