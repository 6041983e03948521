"""Compare the compiled and numpy Lipschitz-pruning kernels.

    python benchmarks/bench_kernels.py [--sizes 200 800 2000] [--repeat 3]

Both backends must return identical keep-masks and violation counts; the
script exits non-zero if they disagree.
"""
import argparse
import sys
import time

import numpy as np

from bigpieces.kernels import backends


def noisy_graph(m, rng):
    t = np.sort(rng.uniform(0, 1, size=m))
    h = 0.2 * np.sin(6 * t) + rng.normal(0, 0.02, size=m)
    return t.reshape(-1, 1), h.reshape(-1, 1)


def timed(fn, *args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 800, 2000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    impls = backends()
    if "cython" not in impls:
        print("compiled backend not built; only the numpy kernel is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'m':>6} {'kernel':<18} " + " ".join(f"{n:>10}" for n in impls) + "   speedup")
    ok = True
    for m in args.sizes:
        base, height = noisy_graph(m, rng)
        for kernel in ("lipschitz_prune", "count_violations"):
            times, outs = {}, {}
            for name, mod in impls.items():
                times[name], outs[name] = timed(getattr(mod, kernel), base, height, 1.0, repeat=args.repeat)
            ref = outs["python"]
            for name, out in outs.items():
                if not np.array_equal(np.asarray(out), np.asarray(ref)):
                    print(f"mismatch: {name} vs python on {kernel}, m={m}")
                    ok = False
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{m:>6} {kernel:<18} " + " ".join(f"{times[n] * 1e3:>8.2f}ms" for n in impls)
                  + f"   {speed:6.1f}x")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
