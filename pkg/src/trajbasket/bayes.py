"""Posterior inference for basket response rates.

Within a cluster, responders follow ``x_j ~ Bin(n_j, expit(theta_j))`` with
``theta_j ~ N(mu, 1/tau)``, ``mu ~ N(0, sigma^2)`` and
``tau ~ Gamma(shape, rate)``.  The no-borrowing comparator is an
independent conjugate Beta(1, 1) analysis per basket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import special, stats

from . import kernels
from .clustering import Partition
from .rng import sampler_generator

__all__ = [
    "HierarchicalPrior",
    "McmcSettings",
    "PosteriorSummary",
    "fit_hierarchical",
    "fit_beta_binomial",
    "decide_active",
    "analyze_trial",
    "analyze_independent",
    "CI_LEVEL",
]

CI_LEVEL = 0.90
_TAILS = ((1 - CI_LEVEL) / 2, 1 - (1 - CI_LEVEL) / 2)


@dataclass(frozen=True)
class HierarchicalPrior:
    mu_sd: float = 1.0
    tau_shape: float = 2.0
    tau_rate: float = 1.0

    def __post_init__(self):
        for name in ("mu_sd", "tau_shape", "tau_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class McmcSettings:
    iterations: int = 12_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0
    # step sizes are tuned every `adapt_every` burn-in iterations towards 30-45% acceptance
    adapt_every: int = 50

    def __post_init__(self):
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be >= 1")

    @property
    def kept(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass(frozen=True)
class PosteriorSummary:
    posterior_mean: float
    ci_low: float
    ci_high: float
    active: bool | None = None
    method: str = ""

    def row(self, basket_id) -> dict:
        return {
            "basket_id": basket_id,
            "method": self.method,
            "posterior_mean": self.posterior_mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "active": self.active,
        }


def decide_active(summary: PosteriorSummary, threshold: float) -> bool:
    """Active when the lower 90% credible bound is strictly above ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return bool(summary.ci_low > threshold)


def _check_counts(x, n) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_1d(np.asarray(x))
    n = np.atleast_1d(np.asarray(n))
    if x.shape != n.shape or x.ndim != 1 or x.size == 0:
        raise ValueError("x and n must be equal-length, non-empty sequences")
    if np.any(n < 1) or np.any(x < 0) or np.any(x > n):
        raise ValueError("need 0 <= x <= n and n >= 1 for every basket")
    if np.any(x != np.round(x)) or np.any(n != np.round(n)):
        raise ValueError("x and n must be integers")
    return x.astype(float), n.astype(float)


def fit_beta_binomial(x: int, n: int, threshold: float | None = None) -> PosteriorSummary:
    """Exact Beta(1 + x, 1 + n - x) posterior summary."""
    (xf,), (nf,) = _check_counts([x], [n])
    a, b = 1.0 + xf, 1.0 + nf - xf
    lo, hi = stats.beta.ppf(_TAILS, a, b)
    s = PosteriorSummary(a / (a + b), float(lo), float(hi), method="beta-binomial")
    if threshold is not None:
        s = replace(s, active=decide_active(s, threshold))
    return s


def sample_hierarchical(x, n, prior: HierarchicalPrior = HierarchicalPrior(),
                        settings: McmcSettings = McmcSettings(), generator=None):
    """Raw sampler output: ``(p_draws, acceptance_rates, step_sizes)``.

    ``p_draws`` has one column per basket.  Without an explicit generator
    the stream is seeded from ``settings.seed``.
    """
    xf, nf = _check_counts(x, n)
    if generator is None:
        generator = sampler_generator(settings.seed)
    tau0 = prior.tau_shape / prior.tau_rate
    theta0 = np.log((xf + 0.5) / (nf - xf + 0.5))
    step0 = 2.4 / np.sqrt(0.25 * nf + tau0)
    shift0 = 2.4 / math.sqrt(0.25 * nf.sum() + 1.0 / prior.mu_sd ** 2)
    theta, rates, steps = kernels.logit_normal_mcmc(
        xf, nf, theta0, step0, shift0,
        float(prior.mu_sd), float(prior.tau_shape), float(prior.tau_rate),
        int(settings.iterations), int(settings.burn_in), int(settings.thin),
        int(settings.adapt_every), generator,
    )
    return special.expit(theta), rates, steps


def _summaries(p_draws: np.ndarray, threshold, method: str) -> list[PosteriorSummary]:
    means = p_draws.mean(axis=0)
    lo, hi = np.quantile(p_draws, _TAILS, axis=0)
    out = []
    for m, l, h in zip(means, lo, hi):
        s = PosteriorSummary(float(m), float(l), float(h), method=method)
        if threshold is not None:
            s = replace(s, active=decide_active(s, threshold))
        out.append(s)
    return out


def fit_hierarchical(x, n, prior: HierarchicalPrior = HierarchicalPrior(),
                     settings: McmcSettings = McmcSettings(),
                     threshold: float | None = None, generator=None) -> list[PosteriorSummary]:
    """Posterior mean and 90% equal-tailed interval of each basket's response rate."""
    p, _, _ = sample_hierarchical(x, n, prior, settings, generator)
    return _summaries(p, threshold, "hierarchical")


def analyze_independent(x, n, threshold: float | None = None) -> list[PosteriorSummary]:
    return [fit_beta_binomial(int(a), int(b), threshold) for a, b in zip(x, n)]


def analyze_trial(x: Sequence[int], n: Sequence[int], partition: Partition,
                  prior: HierarchicalPrior = HierarchicalPrior(),
                  settings: McmcSettings = McmcSettings(),
                  threshold: float | None = None) -> list[PosteriorSummary]:
    """Hierarchical analysis run separately within each cluster of ``partition``.

    Singleton clusters get the same hierarchical model with one basket.
    Clusters are seeded by their rank when ordered by smallest member, so a
    cluster's draws do not depend on data in other clusters.
    """
    if partition.J != len(x):
        raise ValueError(f"partition covers {partition.J} baskets, data has {len(x)}")
    x = np.asarray(x)
    n = np.asarray(n)
    out: list[PosteriorSummary | None] = [None] * len(x)
    ordered = sorted(partition.clusters(), key=min)
    for rank, members in enumerate(ordered):
        gen = sampler_generator(settings.seed, rank)
        summaries = fit_hierarchical(x[members], n[members], prior, settings, threshold, gen)
        for j, s in zip(members, summaries):
            out[j] = s
    return out
