"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on the matrix sizes the solver sees, then one full solve
per backend (run in a subprocess so that QIB_PURE_PYTHON takes effect).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qib import _kernels_py as py

try:
    from qib import _kernels as cy
except ImportError:
    cy = None

SOLVE = ("import time; from qib.problems import bundled; from qib.solver import solve, SolverConfig, MemoryKind; "
         "from qib._backend import NAME; p = bundled('{name}'); t = time.perf_counter(); "
         "s = solve(p, MemoryKind('quantum', {d_m}), SolverConfig(alpha={alpha})); "
         "print(NAME, time.perf_counter() - t, s.iterations)")


def random_state(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = g @ g.conj().T
    return m / np.trace(m).real


def cases(rng):
    for d in (4, 8, 16, 32):
        s = random_state(rng, d)
        w, v = np.linalg.eigh(s)
        yield f"eigh d={d}", lambda k, s=s: k.eigh(s)
        yield f"herm_log_floor d={d}", lambda k, s=s: k.herm_log_floor(s)
        yield f"herm_exp_normalized d={d}", lambda k, s=s: k.herm_exp_normalized(s)
        yield f"spectral d={d}", lambda k, w=w, v=v: k.spectral(w, v, np.exp(w))
        yield f"entropy_nats d={d}", lambda k, s=s: k.entropy_nats(s)
    s = random_state(rng, 32)
    yield "ptrace_first 4x8", lambda k: k.ptrace_first(s, 4, 8)
    yield "ptrace_second 4x8", lambda k: k.ptrace_second(s, 4, 8)
    g = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
    yield "hestenes 8x6", lambda k: k.hestenes(g)


def bench(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled kernels not built; only the numpy fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'python [us]':>12s} {'cython [us]':>12s} {'speedup':>8s}")
    for name, fn in cases(rng):
        tp = bench(lambda: fn(py), args.repeat)
        tc = bench(lambda: fn(cy), args.repeat)
        print(f"{name:28s} {tp * 1e6:12.1f} {tc * 1e6:12.1f} {tp / tc:8.2f}")
    print()
    for name, d_m, alpha in (("phase-damping", 2, 0.3), ("amplitude-damping", 2, 0.1), ("even", 3, 0.05)):
        times = {}
        for pure in ("1", "0"):
            env = dict(os.environ, QIB_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", SOLVE.format(name=name, d_m=d_m, alpha=alpha)], env=env,
                                 capture_output=True, text=True, check=True).stdout.split()
            times[out[0]] = (float(out[1]), int(out[2]))
        tp, tc = times["python"][0], times["cython"][0]
        print(f"solve {name} d_M={d_m} alpha={alpha}: python {tp:.3f}s, cython {tc:.3f}s "
              f"({times['cython'][1]} iterations), speedup {tp / tc:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
