"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each row reports the best-of-``repeat`` time per call for both backends and
the speed-up; results of the two backends are checked for agreement first.
"""

import argparse
import csv
import sys
import timeit

import numpy as np
from scipy.special import gammaln

from decaylab import _pykernels

try:
    from decaylab import _ckernels
except ImportError:
    _ckernels = None


def _tridiag(n, rng):
    dl = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    d = 4 + rng.normal(size=n) + 1j * rng.normal(size=n)
    du = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    return dl, d, du


def cases(rng):
    for n in (400, 3000, 20000):
        dl, d, du = _tridiag(n, rng)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        yield f"tridiag_factor n={n}", lambda m, a=(dl, d, du): m.tridiag_factor(*a)
        yield f"factor+solve n={n}", lambda m, a=(dl, d, du), b=b: m.tridiag_solve(m.tridiag_factor(*a), b)
    for K in (20, 200):
        la = -gammaln(np.arange(K + 1) + 1)
        yield f"log_binom_conv K={K}", lambda m, a=la: m.log_binom_conv(a, a)
        lm = 2 * gammaln(np.arange(K + 1) + 1)
        yield f"inverse_recursion K={K}", lambda m, lm=lm, K=K: m.inverse_recursion(0.0, 0.5, lm, K)


def _agree(x, y):
    if isinstance(x, tuple):
        return all(_agree(a, b) for a, b in zip(x, y))
    return np.allclose(np.asarray(x), np.asarray(y), rtol=1e-10, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="write the table as CSV")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .`", file=sys.stderr)
        return 1
    rows = []
    for name, fn in cases(np.random.default_rng(0)):
        if not _agree(fn(_ckernels), fn(_pykernels)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        times = {}
        for label, mod in (("cython", _ckernels), ("python", _pykernels)):
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            times[label] = min(timer.repeat(args.repeat, number)) / number
        rows.append((name, times["cython"], times["python"], times["python"] / times["cython"]))
    print(f"{'case':<28} {'cython':>12} {'python':>12} {'speed-up':>9}")
    for name, tc, tp, sp in rows:
        print(f"{name:<28} {tc * 1e6:>10.1f}us {tp * 1e6:>10.1f}us {sp:>8.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "cython_s", "python_s", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
