"""Time the numba kernels against the numpy fallback.

Kernel timings use the real element arrays of a WG space on Example 1.
``--solve`` also times a full Example 1 ladder in a subprocess per backend,
since the backend is fixed at import through WGGPE_BACKEND.

    python3 benchmarks/bench_kernels.py --N 128 --k 1 2 --solve
"""
import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from wggpe import _kernels
from wggpe.cli import EXAMPLES
from wggpe.mesh import uniform_mesh
from wggpe.wg import WgSpace

SOLVE_SNIPPET = """
import time
from wggpe.cli import ExperimentConfig, run_experiment
t = time.perf_counter()
rep = run_experiment(ExperimentConfig(example="example1", methods=("wg_k1", "p2"), N={N}))
assert not rep.failures
print(time.perf_counter() - t)
"""


def kernel_cases(N, k):
    spec = EXAMPLES["example1"].spec(1.0)
    space = WgSpace(uniform_mesh(spec.domain, N), k)
    rng = np.random.default_rng(0)
    phi = np.ascontiguousarray(space.phi)
    _, W = space.element_quad
    W = np.ascontiguousarray(W)
    coef = rng.normal(size=(space.mesh.n_triangles, space.n0))
    weight = rng.random(W.shape)
    nt, n0, m = space.mesh.n_triangles, space.n0, space.n_local - space.n0
    A = rng.normal(size=(nt, n0, n0))
    A = np.einsum("tij,tkj->tik", A, A) + n0 * np.eye(n0)
    B = rng.normal(size=(nt, n0, m))
    C = rng.normal(size=(nt, m, m))
    return {
        "density_blocks": (phi, W, coef, 3.0),
        "quartic_sum": (phi, W, coef),
        "weighted_mass": (phi, W, weight),
        "condense": (A, B, C),
    }


def best_time(fn, args, repeat):
    fn(*args)  # warm-up (triggers numba compilation)
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def max_difference(a, b):
    if isinstance(a, tuple):
        return max(max_difference(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))


def run_kernels(Ns, ks, repeat):
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return
    fast, slow = _kernels.get_kernels("numba"), _kernels.get_kernels("numpy")
    print(f"{'kernel':16s} {'N':>4s} {'k':>2s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'rel diff':>9s}")
    for N in Ns:
        for k in ks:
            for name, args in kernel_cases(N, k).items():
                t_np = best_time(slow[name], args, repeat)
                t_nb = best_time(fast[name], args, repeat)
                diff = max_difference(fast[name](*args), slow[name](*args))
                print(f"{name:16s} {N:4d} {k:2d} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f} {diff:9.1e}")


def run_solves(Ns):
    print(f"\nExample 1 ladder N={Ns}, methods wg_k1 + p2 (wall seconds, one run each)")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, WGGPE_BACKEND=backend)
        # warm the numba cache first so compilation is not timed
        subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(N=(4,))], env=env, check=True,
                       capture_output=True)
        t0 = time.perf_counter()
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(N=tuple(Ns))], env=env, check=True,
                             capture_output=True, text=True)
        print(f"  {backend:6s} solve {float(out.stdout):7.2f} s  (process {time.perf_counter() - t0:6.2f} s)")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[64, 128])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve", action="store_true", help="also time an end-to-end ladder per backend")
    args = ap.parse_args(argv)
    run_kernels(args.N, args.k, args.repeat)
    if args.solve:
        run_solves([16, 32, 64, 128])


if __name__ == "__main__":
    main()
