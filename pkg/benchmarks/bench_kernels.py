"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 16 256 4096] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from semlink import _pykernels, kernels

D, RC = 1024, 0.4375


def _cases(b, rng):
    w = rng.uniform(0.01, 1.0, b)
    g = rng.exponential(1.0, b)
    p = rng.uniform(0.0, 3.0, b)
    return {
        "dual_allocate": lambda be: be.dual_allocate(w, g, float(b), D, RC),
        "weighted_surrogate": lambda be: be.weighted_surrogate(p, w, g, D, RC),
        "surrogate_vec": lambda be: be.surrogate_vec(p, g, D, RC),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 256, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = {"python": _pykernels}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the fallback only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'B':>6}" + "".join(f"{name + ' [us]':>16}" for name in backends) + f"{'speedup':>10}")
    for b in args.sizes:
        for name, fn in _cases(b, rng).items():
            times = {}
            for be_name, be in backends.items():
                timer = timeit.Timer(lambda: fn(be))
                n, _ = timer.autorange()
                times[be_name] = min(timer.repeat(args.repeat, n)) / n * 1e6
            speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<20}{b:>6}" + "".join(f"{t:>16.1f}" for t in times.values()) + f"{speedup:>9.1f}x")


if __name__ == "__main__":
    main()
