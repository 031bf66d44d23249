"""Compare the compiled midpoint kernel with the numpy fallback.

Two workloads: a random kernel call (4- and 8-dimensional, with a mean field)
and a full SLIC run with a dipolar field through :func:`evolve`, timed in a
subprocess per backend so the import-time selection is exercised.

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from phipsim import _kernel_py

try:
    from phipsim import _kernel
except ImportError:
    _kernel = None

_FULL = """
import time
from phipsim import catalog, PYRUVATE as P, ErrorParams, EvolveOptions, BACKEND
from phipsim.sequence import schedule
from phipsim.propagator import evolve
s = schedule(catalog.build("SLIC", P), P)
t = time.perf_counter()
tr = evolve(s, ErrorParams(deltaDF=2 * 3.141592653589793 * 0.3), EvolveOptions(n_samples=2))
print(BACKEND, time.perf_counter() - t, tr.stats["steps"], repr(tr.p_final))
"""


def problem(dim, nsteps, seed=1):
    rng = np.random.default_rng(seed)
    nops = 6

    def herm(*shape):
        a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        return np.ascontiguousarray(a + np.swapaxes(a.conj(), -1, -2))

    ops = herm(nops, dim, dim)
    Hlin = herm(8, dim, dim)
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    rho0 = np.ascontiguousarray(np.outer(psi, psi.conj()))
    idx = (np.arange(nsteps) % 8).astype(np.int64)
    dt = np.full(nsteps, 1e-3)
    # weak enough that the random flow is not chaotic; strong fields amplify roundoff
    M = np.ascontiguousarray(0.02 * rng.normal(size=(nops, nops)))
    pick = np.array([nsteps - 1], dtype=np.int64)
    return (rho0, Hlin, idx, ops, dt, M, 8, 1e-12, pick, ops)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernel is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'workload':28s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s} {'max |diff|':>11s}")
    for dim in (4, 8):
        a = problem(dim, args.steps)
        tc, (rc, _, _) = best_of(_kernel.midpoint_evolve, a, args.repeat)
        tp, (rp, _, _) = best_of(_kernel_py.midpoint_evolve, a, 1)
        diff = np.abs(np.asarray(rc) - rp).max()
        print(f"{f'kernel dim={dim} steps={args.steps}':28s} {tc:10.4f} {tp:10.4f} {tp / tc:9.1f} {diff:11.1e}")
    res = {}
    for pure in ("0", "1"):
        env = dict(os.environ, PHIPSIM_PURE=pure)
        out = subprocess.run([sys.executable, "-c", _FULL], env=env, capture_output=True, text=True, check=True)
        backend, secs, steps, p = out.stdout.split()
        res[backend] = (float(secs), int(steps), float(p))
    (tc, steps, pc), (tp, _, pp) = res["cython"], res["python"]
    print(f"{f'evolve SLIC+dDF ({steps} steps)':28s} {tc:10.4f} {tp:10.4f} {tp / tc:9.1f} {abs(pc - pp):11.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
