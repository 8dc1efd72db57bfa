"""Timing comparison of the compiled and pure-Python kernel backends.

The backend is chosen once per process at import time, so this script
re-launches itself as a worker under each DRSHAPLEY_BACKEND setting,
collects per-workload timings as JSON, and prints a side-by-side table
with speedup factors.  The worker warms each code path first so numba
compilation time is not counted.

Run from the repository root:

    python3 benchmarks/backend_bench.py            # both backends
    python3 benchmarks/backend_bench.py --quick    # smaller workloads
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _workloads(quick: bool):
    # (name, setup-scale kwargs) chosen so the pure path finishes in
    # reasonable time while the compiled path still shows its advantage
    if quick:
        return {"reserve_estimate": dict(n=12, N=2000),
                "loadfollow_estimate": dict(n=10, N=300),
                "exact_subsets": dict(n=12),
                "permutation_sampler": dict(n=10, N=2000)}
    return {"reserve_estimate": dict(n=20, N=20000),
            "loadfollow_estimate": dict(n=20, N=1000),
            "exact_subsets": dict(n=16),
            "permutation_sampler": dict(n=12, N=20000)}


def _time(fn, repeat: int = 3) -> float:
    fn()                                   # warm: compile + caches
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(quick: bool) -> dict:
    from drshapley import (estimate_shapley, generate_reserve_game,
                           make_policy, shapley_exact_subsets,
                           uniform_permutation_estimate)
    from drshapley._backend import backend_name
    from drshapley.games import generate_load_follow_game

    w = _workloads(quick)
    rg = generate_reserve_game(w["reserve_estimate"]["n"], 101)
    lf = generate_load_follow_game(w["loadfollow_estimate"]["n"], 12)
    ex = generate_reserve_game(w["exact_subsets"]["n"], 101)
    pg = generate_reserve_game(w["permutation_sampler"]["n"], 101)

    timings = {
        "reserve_estimate": _time(lambda: estimate_shapley(
            rg, make_policy("sigmoid"), w["reserve_estimate"]["N"], 1)),
        "loadfollow_estimate": _time(lambda: estimate_shapley(
            lf, make_policy("equal"), w["loadfollow_estimate"]["N"], 1)),
        "exact_subsets": _time(lambda: shapley_exact_subsets(ex)),
        "permutation_sampler": _time(lambda: uniform_permutation_estimate(
            pg, w["permutation_sampler"]["N"], 1)),
    }
    return {"backend": backend_name(), "timings": timings}


def launch(backend: str, quick: bool) -> dict:
    env = dict(os.environ, DRSHAPLEY_BACKEND=backend)
    args = [sys.executable, os.path.abspath(__file__), "--worker"]
    if quick:
        args.append("--quick")
    out = subprocess.run(args, env=env, capture_output=True, text=True,
                         check=True)
    doc = json.loads(out.stdout)
    if doc["backend"] != backend:
        raise RuntimeError(f"asked for backend {backend!r} but the worker "
                           f"loaded {doc['backend']!r}")
    return doc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller workloads (seconds instead of minutes)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    opts = ap.parse_args(argv)

    if opts.worker:
        json.dump(run_worker(opts.quick), sys.stdout)
        return 0

    results = {b: launch(b, opts.quick)["timings"]
               for b in ("numpy", "numba")}
    scales = _workloads(opts.quick)
    name_w = max(len(k) for k in results["numba"])
    print(f"{'workload':<{name_w}}  {'scale':<14} {'numpy':>10} "
          f"{'numba':>10} {'speedup':>9}")
    for key in results["numba"]:
        pure, jit = results["numpy"][key], results["numba"][key]
        scale = ",".join(f"{k}={v}" for k, v in scales[key].items())
        print(f"{key:<{name_w}}  {scale:<14} {pure:>9.3f}s {jit:>9.3f}s "
              f"{pure / jit:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
