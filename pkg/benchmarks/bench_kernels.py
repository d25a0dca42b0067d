"""Compare the compiled and numpy kernel backends on identical inputs.

    python3 benchmarks/bench_kernels.py [--sizes 2000,20000] [--dim 6] [--repeat 5]

Also runs one full LR-QR fit per backend (in a subprocess so the backend
switch takes effect at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lrqr import _kernels_py as py

try:
    from lrqr import _ckernels as cy
except ImportError:
    cy = None


def _inputs(n, d, seed=0):
    rng = np.random.default_rng(seed)
    phi = np.ascontiguousarray(np.hstack([np.ones((n, 1)), rng.normal(size=(n, d - 1))]))
    s = rng.exponential(size=n)
    gamma = rng.normal(size=d) * 0.1
    sigma = phi.T @ phi / n
    mu2 = phi.mean(axis=0)
    r = s - phi @ gamma
    v = rng.normal(size=n)
    sign = np.sign(r)
    return phi, s, gamma, sigma, mu2, r, v, sign


def _cases(mod, n, d):
    phi, s, gamma, sigma, mu2, r, v, sign = _inputs(n, d)
    return {
        "pinball_value_grad": lambda: mod.pinball_value_grad(phi, s, gamma, 0.1),
        "projected_subgradient(100)": lambda: mod.projected_subgradient(
            phi, s, sigma, mu2, gamma, 0.1, 0.5, 1.0, 50.0, 0.1, 100),
        "line_search": lambda: mod.line_search(r, v, sign, -5.0, 0.0, 0.1, n),
    }


FIT_SNIPPET = """
import time, warnings
warnings.simplefilter('ignore')
from lrqr import kernels, solve, LrqrConfig, CalibrationBundle, Basis
from lrqr.data import SyntheticSpec, generate
d = generate(SyntheticSpec(seed=1))
basis = Basis.group_indicators(5)
b = CalibrationBundle.from_features(basis, d.X1, d.s1, d.X2, d.X3)
t = time.perf_counter()
for lam in (0.05, 0.2, 0.8):
    solve(LrqrConfig(lam=lam), b, basis)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="2000,20000")
    ap.add_argument("--dim", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':28s} {'n':>7s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for n in (int(v) for v in args.sizes.split(",")):
        py_cases = _cases(py, n, args.dim)
        cy_cases = _cases(cy, n, args.dim) if cy is not None else {}
        for name, fn in py_cases.items():
            t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
            if name in cy_cases:
                t_cy = min(timeit.repeat(cy_cases[name], number=1, repeat=args.repeat)) * 1e3
                print(f"{name:28s} {n:7d} {t_py:11.3f} {t_cy:12.3f} {t_py / t_cy:7.1f}x")
            else:
                print(f"{name:28s} {n:7d} {t_py:11.3f} {'-':>12s}")
    print("\nend-to-end: three LR-QR fits, group shift, n=2000 per sample [s]")
    for flag in ("0", "1"):
        env = dict(os.environ, LRQR_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    main()
