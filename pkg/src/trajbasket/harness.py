"""Replicated basket-trial simulations and their operating characteristics.

Each replication simulates every basket once and runs all requested
analysis arms on the same data:

* Proposed   -- cluster on (final-state distribution, ORR), then borrow within clusters
* OrrOnly    -- same machinery clustering on ORR alone
* OneCluster -- one hierarchical model over all baskets
* NoCluster  -- independent Beta(1, 1) per basket
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .bayes import (HierarchicalPrior, McmcSettings, PosteriorSummary, analyze_independent,
                    analyze_trial)
from .clustering import Partition, canonical_labels, feature_vector, orr_feature, select_clustering
from .kernels import BACKEND
from .markov import BasketModel, fit_basket_arrays
from .rng import derive_key
from .scenarios import ScenarioSpec, simulate_basket_arrays

log = logging.getLogger(__name__)

__all__ = [
    "MethodArm",
    "ArmResult",
    "ReplicationResult",
    "OperatingCharacteristics",
    "simulate_replication",
    "run_replication",
    "run_simulation",
    "correct_structure",
    "aggregate",
    "write_reports",
]


class MethodArm(str, enum.Enum):
    PROPOSED = "Proposed"
    ORR_ONLY = "OrrOnly"
    ONE_CLUSTER = "OneCluster"
    NO_CLUSTER = "NoCluster"

    @classmethod
    def parse(cls, value) -> "MethodArm":
        if isinstance(value, MethodArm):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for arm in cls:
            if arm.value.lower() == key:
                return arm
        raise ValueError(f"unknown arm {value!r}; choose from {', '.join(a.value for a in cls)}")


ALL_ARMS = tuple(MethodArm)
CLUSTERING_ARMS = (MethodArm.PROPOSED, MethodArm.ORR_ONLY)
# fixed stream index per arm; arms never share sampler streams
_ARM_STREAM = {arm: i for i, arm in enumerate(MethodArm)}


@dataclass(frozen=True)
class ArmResult:
    partition: Partition | None
    summaries: tuple[PosteriorSummary, ...] = ()

    @property
    def active(self) -> tuple[bool, ...]:
        return tuple(bool(s.active) for s in self.summaries)


@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    responders: tuple[int, ...]
    n: tuple[int, ...]
    orr_hat: tuple[float, ...]
    arms: dict = field(default_factory=dict)


def simulate_replication(spec: ScenarioSpec, rep: int, seed: int) -> list[BasketModel]:
    """Simulate and fit every basket of one replication."""
    return [
        fit_basket_arrays(j, *simulate_basket_arrays(truth, n, seed, (spec.key, rep, j)))
        for j, (truth, n) in enumerate(zip(spec.baskets, spec.n_per_basket))
    ]


def _arm_partition(arm: MethodArm, models: Sequence[BasketModel], singletons: str) -> Partition | None:
    J = len(models)
    if arm is MethodArm.NO_CLUSTER:
        return None
    if arm is MethodArm.ONE_CLUSTER or J < 2:
        return Partition.single(J)
    feats = [feature_vector(m) if arm is MethodArm.PROPOSED else orr_feature(m) for m in models]
    return select_clustering(np.array(feats), singletons)


def run_replication(spec: ScenarioSpec, rep: int, arms: Iterable = ALL_ARMS, seed: int = 0,
                    prior: HierarchicalPrior = HierarchicalPrior(),
                    settings: McmcSettings = McmcSettings(), threshold: float = 0.467,
                    arm_priors: Mapping | None = None, analyze: bool = True,
                    singletons: str = "zero") -> ReplicationResult:
    """One simulated trial analysed by every arm.

    ``settings.seed`` is ignored: each arm's sampler stream is derived from
    ``(seed, scenario key, rep, arm)``.  With ``analyze=False`` only the
    partitions are computed.
    """
    arms = [MethodArm.parse(a) for a in arms]
    arm_priors = {MethodArm.parse(k): v for k, v in (arm_priors or {}).items()}
    models = simulate_replication(spec, rep, seed)
    x = [m.responders for m in models]
    n = [m.n for m in models]
    out = {}
    for arm in arms:
        part = _arm_partition(arm, models, singletons)
        summaries: tuple = ()
        if analyze:
            if arm is MethodArm.NO_CLUSTER:
                summaries = tuple(analyze_independent(x, n, threshold))
            else:
                arm_settings = replace(settings, seed=derive_key(seed, spec.key, rep, _ARM_STREAM[arm]))
                try:
                    summaries = tuple(analyze_trial(x, n, part, arm_priors.get(arm, prior),
                                                    arm_settings, threshold))
                except FloatingPointError:
                    log.error("sampler failed: seed=%d scenario=%d rep=%d arm=%s",
                              seed, spec.key, rep, arm.value)
                    raise
        out[arm] = ArmResult(part, summaries)
    return ReplicationResult(rep, tuple(x), tuple(n), tuple(m.orr_hat for m in models), out)


def correct_structure(selected, truth) -> bool:
    """Whether two labelings induce the same set partition."""
    labels = selected.labels if isinstance(selected, Partition) else selected
    if len(labels) != len(truth):
        raise ValueError("partitions cover different numbers of baskets")
    return canonical_labels(labels) == canonical_labels(truth)


@dataclass
class OperatingCharacteristics:
    reps: int
    J: int
    threshold: float
    # percent of replications selecting u clusters, index u-1
    cluster_counts: dict = field(default_factory=dict)
    correct_structure: dict = field(default_factory=dict)
    rejection: dict = field(default_factory=dict)
    mean_posterior: dict = field(default_factory=dict)
    mean_ci_low: dict = field(default_factory=dict)
    mean_ci_high: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        conv = lambda d: {a.value: np.asarray(v).tolist() for a, v in d.items()}
        return {
            "reps": self.reps,
            "J": self.J,
            "threshold": self.threshold,
            "cluster_counts": conv(self.cluster_counts),
            "correct_structure": {a.value: v for a, v in self.correct_structure.items()},
            "rejection": conv(self.rejection),
            "mean_posterior": conv(self.mean_posterior),
            "mean_ci_low": conv(self.mean_ci_low),
            "mean_ci_high": conv(self.mean_ci_high),
        }


def aggregate(results: Sequence[ReplicationResult], truth=None, threshold: float = 0.467) -> OperatingCharacteristics:
    """Reduce replications (in the given order) to percentages and averages."""
    if not results:
        raise ValueError("need at least one replication")
    R = len(results)
    J = len(results[0].n)
    oc = OperatingCharacteristics(R, J, threshold)
    arms = list(results[0].arms)
    for arm in arms:
        parts = [r.arms[arm].partition for r in results]
        if arm in CLUSTERING_ARMS and all(p is not None for p in parts):
            counts = np.zeros(J)
            for p in parts:
                counts[p.u - 1] += 1
            oc.cluster_counts[arm] = 100.0 * counts / R
            if truth is not None:
                oc.correct_structure[arm] = 100.0 * sum(correct_structure(p, truth) for p in parts) / R
        if results[0].arms[arm].summaries:
            summ = [r.arms[arm].summaries for r in results]
            oc.rejection[arm] = 100.0 * np.array([[s.ci_low > threshold for s in row] for row in summ]).mean(axis=0)
            oc.mean_posterior[arm] = np.array([[s.posterior_mean for s in row] for row in summ]).mean(axis=0)
            oc.mean_ci_low[arm] = np.array([[s.ci_low for s in row] for row in summ]).mean(axis=0)
            oc.mean_ci_high[arm] = np.array([[s.ci_high for s in row] for row in summ]).mean(axis=0)
    return oc


def _run_chunk(args):
    spec, reps, kwargs = args
    return [run_replication(spec, r, **kwargs) for r in reps]


def run_simulation(spec: ScenarioSpec, reps: int, seed: int = 0, arms: Iterable = ALL_ARMS,
                   prior: HierarchicalPrior = HierarchicalPrior(),
                   settings: McmcSettings = McmcSettings(), threshold: float = 0.467,
                   arm_priors: Mapping | None = None, analyze: bool = True,
                   singletons: str = "zero", workers: int = 1,
                   chunk: int = 100) -> tuple[OperatingCharacteristics, list[ReplicationResult]]:
    """Run ``reps`` replications (optionally across processes) and aggregate them.

    Results are identical for any ``workers``: every replication owns its
    streams and the reduction runs in replication order.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    kwargs = dict(arms=[MethodArm.parse(a) for a in arms], seed=seed, prior=prior,
                  settings=settings, threshold=threshold, arm_priors=arm_priors,
                  analyze=analyze, singletons=singletons)
    if workers <= 1:
        results = [run_replication(spec, r, **kwargs) for r in range(reps)]
    else:
        jobs = [(spec, range(s, min(s + chunk, reps)), kwargs) for s in range(0, reps, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, jobs) for r in part]
    return aggregate(results, spec.true_partition, threshold), results


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()


def write_reports(outdir, scenario: ScenarioSpec, by_n: Mapping[int, OperatingCharacteristics],
                  config: Mapping) -> dict:
    """Write the CSV reports and run manifest; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    name = scenario.name or f"scenario{scenario.key}"
    paths = {}

    path = os.path.join(outdir, "clustering_results.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n", "n_clusters"] + [a.value for a in CLUSTERING_ARMS])
        for n, oc in sorted(by_n.items()):
            arms = [a for a in CLUSTERING_ARMS if a in oc.cluster_counts]
            if not arms:
                continue
            for u in range(1, oc.J + 1):
                w.writerow([name, n, u] + [_fmt(oc.cluster_counts[a][u - 1]) if a in arms else "" for a in CLUSTERING_ARMS])
            if oc.correct_structure:
                w.writerow([name, n, "correct_structure"] +
                           [_fmt(oc.correct_structure[a]) if a in oc.correct_structure else "" for a in CLUSTERING_ARMS])
    paths["clustering"] = path

    for n, oc in sorted(by_n.items()):
        if not oc.rejection:
            continue
        path = os.path.join(outdir, f"rejection_probs_n{n}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["arm", "basket", name])
            for arm, rej in oc.rejection.items():
                for j, v in enumerate(rej, start=1):
                    w.writerow([arm.value, j, _fmt(v)])
        paths[f"rejection_n{n}"] = path

    path = os.path.join(outdir, "posterior_summaries.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n", "arm", "basket", "mean", "ci_low", "ci_high"])
        for n, oc in sorted(by_n.items()):
            for arm in oc.mean_posterior:
                for j in range(oc.J):
                    w.writerow([name, n, arm.value, j + 1, _fmt(oc.mean_posterior[arm][j]),
                                _fmt(oc.mean_ci_low[arm][j]), _fmt(oc.mean_ci_high[arm][j])])
    paths["posterior"] = path

    manifest = {
        "version": __version__,
        "backend": BACKEND,
        "config": dict(config),
        "config_hash": config_hash(config),
        "scenario": scenario.to_dict(),
        "results": {str(n): oc.to_dict() for n, oc in sorted(by_n.items())},
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    paths["manifest"] = path
    return paths


def _fmt(v) -> str:
    return f"{float(v):.6f}"
