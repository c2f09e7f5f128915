"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py            # full sizes
    python benchmarks/bench_kernels.py --quick    # smoke run

Each kernel is run on identical inputs in both backends; the outputs are
compared for exact equality before anything is timed.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from trajbasket import kernels
from trajbasket.rng import child_keys, derive_key, sampler_generator
from trajbasket.scenarios import builtin_scenario


def _cases(quick: bool):
    tables = builtin_scenario(1).baskets[0].tables()
    n_pat = 20_000 if quick else 1_000_000
    keys = child_keys(derive_key(1), np.arange(n_pat, dtype=np.uint64))
    iters = 2_000 if quick else 12_000
    x, n = np.array([8.0, 10, 9, 14, 12]), np.full(5, 20.0)
    theta0 = np.log((x + 0.5) / (n - x + 0.5))
    step0 = 2.4 / np.sqrt(0.25 * n + 2.0)

    def mcmc(mod):
        return mod.logit_normal_mcmc(x, n, theta0, step0, 0.5, 1.0, 2.0, 1.0,
                                     iters, iters // 6, 1, 50, sampler_generator(0))

    return {
        f"simulate_patients (n={n_pat})": lambda mod: mod.simulate_patients(keys, *tables),
        f"count_responders (n={n_pat})": lambda mod: mod.count_responders(keys, *tables),
        f"logit_normal_mcmc (J=5, {iters} iterations)": mcmc,
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return bool(np.array_equal(a, b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    py = kernels.backend("python")
    try:
        cc = kernels.backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    rows = []
    for name, fn in _cases(args.quick).items():
        if not _same(fn(py), fn(cc)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        t_cc = min(timeit.repeat(lambda: fn(cc), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "python_s": t_py, "compiled_s": t_cc, "speedup": t_py / t_cc})

    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        w = max(len(r["kernel"]) for r in rows)
        print(f"{'kernel':<{w}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
        for r in rows:
            print(f"{r['kernel']:<{w}}  {r['python_s']:>9.4f}s  {r['compiled_s']:>9.4f}s  {r['speedup']:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
