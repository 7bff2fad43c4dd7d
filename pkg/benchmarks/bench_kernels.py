"""Compiled vs pure-Python integration kernels: parity and timing.

    python benchmarks/bench_kernels.py [--orbits 200] [--steps 1000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from nhcyl.kernels import backend, compiled_available
from nhcyl.model import pendulum_family


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--orbits", type=int, default=200)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    spec = pendulum_family(epsilon=0.05)
    model = spec.kernel_model
    rng = np.random.default_rng(0)
    y0 = np.concatenate([rng.uniform(size=(args.orbits, 2)),
                         spec.p0 + 0.1 * rng.uniform(-1, 1, size=(args.orbits, 2))], axis=1)
    t0 = np.zeros(args.orbits)
    eps2 = spec.epsilon**2
    names = ["python"] + (["compiled"] if compiled_available() else [])
    results = {}
    for name in names:
        k = backend(name)
        for tangent in (False, True):
            run = lambda: k.rk4(model, y0, t0, 1e-3, args.steps, eps2, tangent, None, None, 0)  # noqa: E731
            dt, out = best_time(run, args.repeat)
            results[name, tangent] = (dt, out)
            per = dt / (args.orbits * args.steps) * 1e6
            print(f"{name:9s} tangent={tangent!s:5s}  {dt:8.4f} s   {per:7.3f} us per orbit-step")
    if "compiled" in names:
        for tangent in (False, True):
            (tp, op), (tc, oc) = results["python", tangent], results["compiled", tangent]
            diff = float(np.max(np.abs(op[0] - oc[0])))
            jd = float(np.max(np.abs(op[1] - oc[1]))) if tangent else 0.0
            print(f"tangent={tangent!s:5s}  speedup {tp / tc:6.2f}x   max |state diff| {diff:.2e}   "
                  f"max |jacobian diff| {jd:.2e}")
    else:
        print("compiled kernels not built; only the python backend was timed")


if __name__ == "__main__":
    main()
