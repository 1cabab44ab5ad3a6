"""Compare the compiled kernels with the NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time of each kernel for both backends, the speedup
and the largest difference between the two results.
"""

import argparse
import statistics
import time

import numpy as np

from ladderlab import _pykernels
from ladderlab.testfunctions import TestFunction

try:
    from ladderlab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=2_000_000)
    ap.add_argument("--freqs", type=int, default=20_000)
    ap.add_argument("--s-points", type=int, default=4096)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    y, dy, h = TestFunction(0.5).table
    X = h * (y.size - 1)
    x = rng.uniform(-1.2 * X, 1.2 * X, args.points)
    w = rng.uniform(0.5, 2.0, args.points)
    freqs = np.sort(rng.uniform(0, 400, args.freqs))
    fw = rng.uniform(0.5, 2.0, args.freqs)
    s = np.linspace(0, 2 * np.pi, args.s_points, endpoint=False)

    cases = [
        ("hermite_eval", lambda k: k.hermite_eval(x, y, dy, h)),
        ("hermite_sum", lambda k: k.hermite_sum(x, w, y, dy, h)),
        ("phase_sum", lambda k: k.phase_sum(freqs, fw, s)),
    ]
    print(f"{'kernel':<14}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases:
        tp, rp = _time(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<14}{tp:>12.4f}{'n/a':>12}{'n/a':>10}{'n/a':>12}")
            continue
        tc, rc = _time(lambda: fn(_ckernels), args.repeat)
        diff = float(np.max(np.abs(np.asarray(rp) - np.asarray(rc))))
        print(f"{name:<14}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.2f}{diff:>12.3g}")


if __name__ == "__main__":
    main()
