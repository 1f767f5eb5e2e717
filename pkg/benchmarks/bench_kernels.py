"""Timing of the demeaning kernels (numba vs numpy) and of the bootstrap solvers.

    python3 benchmarks/bench_kernels.py [--cities 100] [--days 1000] [--repeat 3]

Both backends run on the same synthetic panel; the script also checks that
they agree before reporting times.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from panelfx import _kernels, synth
from panelfx.binning import surface_design
from panelfx.fe import ModelSpec, fit_model
from panelfx.surface import cluster_bootstrap


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cities", type=int, default=100)
    ap.add_argument("--days", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--drop", type=float, default=0.1,
                    help="share of rows dropped at random (a balanced panel demeans in one sweep)")
    args = ap.parse_args(argv)

    cfg = replace(synth.preset("paper-fig2-facebook", 0), n_cities=args.cities, n_days=args.days)
    frame, _ = synth.simulate(cfg, validated=True)
    if args.drop > 0:
        keep = np.random.default_rng(0).random(frame.n) >= args.drop
        frame = frame.take(np.flatnonzero(keep))
    spec = ModelSpec(surface_design(frame), frame.fe_dims)
    X = np.column_stack([frame.column("outcome"), spec.design.columns])
    codes = frame.dim_codes(frame.fe_dims)
    counts = frame.dim_counts(frame.fe_dims)
    print(f"panel: {frame.n} rows, {X.shape[1]} columns, fe dims {list(frame.fe_dims)}")

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    results = {}
    for b in backends:
        # first call compiles under numba; keep it out of the timing
        _kernels.demean(X[:100], [c[:100] for c in codes], [np.bincount(c[:100]) for c in codes], 1e-8, 100, b)
        t, out = best_of(lambda: _kernels.demean(X, codes, counts, 1e-8, 10_000, b), args.repeat)
        results[b] = out[0]
        print(f"demean   {b:6s} {t * 1e3:9.1f} ms  ({out[1]} sweeps)")
        t, _ = best_of(lambda: _kernels.group_sums(codes[0], X, int(codes[0].max()) + 1, b), args.repeat)
        print(f"groupsum {b:6s} {t * 1e3:9.1f} ms")
    if len(results) == 2:
        print(f"backends agree to {np.abs(results['numpy'] - results['numba']).max():.2e}")

    t, _ = best_of(lambda: fit_model(frame, spec), args.repeat)
    print(f"surface fit        {t * 1e3:9.1f} ms")
    R = args.replicates
    for method in ("weighted", "refit"):
        n = R if method == "weighted" else max(2, R // 10)
        t0 = time.perf_counter()
        cluster_bootstrap(frame, spec, B=n, seed=0, method=method)
        per = (time.perf_counter() - t0) / n
        print(f"bootstrap {method:8s} {per * 1e3:9.1f} ms / replicate ({n} replicates, incl. setup)")


if __name__ == "__main__":
    main()
