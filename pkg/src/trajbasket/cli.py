"""Command-line entry point: ``trajbasket {simulate,analyze,cluster,derive-threshold}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

from . import __version__
from .bayes import HierarchicalPrior, McmcSettings, analyze_independent, analyze_trial
from .clustering import Partition, feature_vector, orr_feature, select_clustering
from .harness import MethodArm, config_hash, run_simulation, write_reports
from .kernels import BACKEND
from .markov import fit_basket
from .scenarios import builtin_scenario, load_scenario, true_orr
from .trajectory import IngestError, read_trial_csv

log = logging.getLogger("trajbasket")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "TRAJBASKET_OUTPUT_DIR"
DEFAULT_THRESHOLD = 0.467


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _scenario(value: str, n=None):
    if os.path.exists(value):
        try:
            return load_scenario(value, n)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad scenario file {value}: {exc}") from None
    try:
        sid = int(value)
    except ValueError:
        raise ConfigError(f"unknown scenario {value!r}: not a built-in id or a file") from None
    try:
        return builtin_scenario(sid, n if n is not None else 20)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _prior(args) -> HierarchicalPrior:
    try:
        return HierarchicalPrior(args.sigma, args.alpha, args.beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _settings(args) -> McmcSettings:
    try:
        return McmcSettings(args.iterations, args.burn_in, args.thin, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _threshold(value: str) -> float | str:
    if value == "derive":
        return value
    try:
        t = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threshold must be a number or 'derive', got {value!r}")
    if not 0 < t < 1:
        raise argparse.ArgumentTypeError("threshold must lie in (0, 1)")
    return t


def _outdir(args) -> str:
    return args.out or os.environ.get(OUTPUT_ENV) or "trajbasket_out"


def _write_manifest(outdir, command, config, extra=None):
    os.makedirs(outdir, exist_ok=True)
    doc = {"version": __version__, "backend": BACKEND, "command": command,
           "config": config, "config_hash": config_hash(config)}
    doc.update(extra or {})
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "threads", "verbose")}


def cmd_simulate(args) -> int:
    try:
        arms = [MethodArm.parse(a) for a in args.arms]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    prior, settings = _prior(args), _settings(args)
    base = _scenario(args.scenario)
    threshold = args.threshold
    if threshold == "derive":
        est = true_orr(base.baskets[0], args.derive_reps, args.seed, (base.key,))
        threshold = est.value
        log.info("derived threshold %.5f (MC SE %.5f)", est.value, est.se)
    outdir = _outdir(args)
    by_n = {}
    for n in args.n:
        spec = base.with_n(n)
        t0 = time.perf_counter()
        oc, _ = run_simulation(spec, args.reps, args.seed, arms, prior, settings, threshold,
                               analyze=not args.cluster_only, singletons=args.singletons,
                               workers=args.threads)
        log.info("n=%d: %d replications in %.1fs", n, args.reps, time.perf_counter() - t0)
        by_n[n] = oc
    config = _config(args)
    config["threshold_used"] = threshold
    paths = write_reports(outdir, base, by_n, config)
    for p in paths.values():
        print(p)
    return EXIT_OK


def _load(path):
    try:
        return read_trial_csv(path)
    except FileNotFoundError:
        raise IngestError(f"{path}: no such file") from None


def _partition(models, features: str, singletons: str) -> Partition:
    if len(models) < 2:
        return Partition.single(len(models))
    feat = feature_vector if features == "trajectory" else orr_feature
    return select_clustering([feat(m) for m in models], singletons)


def cmd_analyze(args) -> int:
    prior, settings = _prior(args), _settings(args)
    baskets = _load(args.data)
    models = [fit_basket(b) for b in baskets]
    part = _partition(models, args.features, args.singletons)
    x = [m.responders for m in models]
    n = [m.n for m in models]
    summaries = analyze_trial(x, n, part, prior, settings, args.threshold)
    rows = [s.row(m.basket_id) for s, m in zip(summaries, models)]
    if args.with_independent:
        rows += [s.row(m.basket_id) for s, m in zip(analyze_independent(x, n, args.threshold), models)]

    outdir = _outdir(args)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "summaries.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["basket_id", "method", "posterior_mean", "ci_low", "ci_high", "active"])
        w.writeheader()
        w.writerows(rows)
    doc = part.to_dict()
    doc["basket_ids"] = [m.basket_id for m in models]
    with open(os.path.join(outdir, "partition.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")
    with open(os.path.join(outdir, "baskets.json"), "w", encoding="utf-8") as fh:
        json.dump([m.to_dict() for m in models], fh, indent=2, default=str)
        fh.write("\n")
    _write_manifest(outdir, "analyze", _config(args))

    print(f"clusters: u={part.u} labels={list(part.labels)}")
    for r in rows:
        print(f"{r['basket_id']}\t{r['method']}\tmean={r['posterior_mean']:.4f}\t"
              f"90%CI=({r['ci_low']:.4f}, {r['ci_high']:.4f})\tactive={r['active']}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    models = [fit_basket(b) for b in _load(args.data)]
    part = _partition(models, args.features, args.singletons)
    doc = part.to_dict()
    doc["basket_ids"] = [m.basket_id for m in models]
    text = json.dumps(doc, indent=2, default=str)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "partition.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_derive_threshold(args) -> int:
    if args.reps < 1:
        raise ConfigError("reps must be >= 1")
    spec = _scenario(args.scenario)
    if not 1 <= args.basket <= spec.J:
        raise ConfigError(f"basket must be in 1..{spec.J}")
    t0 = time.perf_counter()
    est = true_orr(spec.baskets[args.basket - 1], args.reps, args.seed, (spec.key, args.basket - 1))
    elapsed = time.perf_counter() - t0
    if args.json:
        print(json.dumps({"threshold": est.value, "se": est.se, "reps": est.reps, "seconds": elapsed}))
    else:
        print(f"threshold {est.value:.5f}  (MC SE {est.se:.5f}, {est.reps} patients, {elapsed:.1f}s)")
    return EXIT_OK


def _add_bayes_flags(p):
    g = p.add_argument_group("prior and sampler")
    g.add_argument("--sigma", type=float, default=1.0, help="sd of the normal prior on mu")
    g.add_argument("--alpha", type=float, default=2.0, help="gamma shape for the precision")
    g.add_argument("--beta", type=float, default=1.0, help="gamma rate for the precision")
    g.add_argument("--iterations", type=int, default=12_000)
    g.add_argument("--burn-in", type=int, default=2_000)
    g.add_argument("--thin", type=int, default=1)


def _add_cluster_flags(p):
    p.add_argument("--singletons", choices=("zero", "exclude"), default="zero",
                   help="how singleton clusters enter the mean silhouette")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trajbasket", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="replicated scenario simulation")
    p.add_argument("--scenario", required=True, help="built-in id (1-3) or scenario JSON file")
    p.add_argument("--n", type=int, nargs="+", default=[20], help="patients per basket (one run per value)")
    p.add_argument("--reps", type=int, default=5_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD)
    p.add_argument("--derive-reps", type=int, default=2 * 10**7)
    p.add_argument("--arms", nargs="+", default=[a.value for a in MethodArm])
    p.add_argument("--cluster-only", action="store_true", help="skip posterior analysis")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out")
    _add_bayes_flags(p)
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="cluster and analyse observed trial data")
    p.add_argument("data", help="CSV with basket_id,patient_id,assessment_index,state")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", choices=("trajectory", "orr"), default="trajectory")
    p.add_argument("--with-independent", action="store_true", help="also report Beta(1,1) analyses")
    p.add_argument("--out")
    _add_bayes_flags(p)
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cluster", help="cluster baskets only")
    p.add_argument("data", help="CSV with basket_id,patient_id,assessment_index,state")
    p.add_argument("--features", choices=("trajectory", "orr"), default="trajectory")
    p.add_argument("--out")
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("derive-threshold", help="Monte Carlo true ORR of a reference basket")
    p.add_argument("--scenario", default="1")
    p.add_argument("--basket", type=int, default=1, help="1-based basket index")
    p.add_argument("--reps", type=int, default=2 * 10**7, help="simulated patients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_derive_threshold)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
