"""Independent reference computations used only by the tests.

Nothing here imports from trajbasket: each oracle recomputes its quantity
from first principles so that agreement is evidence, not tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


# ---------------------------------------------------------------- beta quantile

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise RuntimeError("continued fraction did not converge")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def beta_quantile(q: float, a: float, b: float) -> float:
    """Bisection on the regularized incomplete beta."""
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if incomplete_beta(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


# ----------------------------------------------------- hierarchical quadrature

def _log_binom_lik(theta, x, n):
    # x*theta - n*log(1+e^theta), computed stably
    return x * theta - n * np.logaddexp(0.0, theta)


def single_basket_posterior_mean(x: int, n: int, mu_sd=1.0, shape=2.0, rate=1.0,
                                 h_theta=0.01, h_logtau=0.02) -> float:
    """E[expit(theta) | x] for one basket under the logit-normal hierarchy.

    Integrates (theta, log tau) on a tensor grid with mu marginalised in
    closed form: theta | tau ~ N(0, sigma^2 + 1/tau).
    """
    theta = np.arange(-30.0, 30.0 + h_theta / 2, h_theta)
    logtau = np.arange(-14.0, 6.0 + h_logtau / 2, h_logtau)
    tau = np.exp(logtau)
    var = mu_sd ** 2 + 1.0 / tau
    # gamma density on log scale includes the Jacobian tau
    log_tau_w = shape * logtau - rate * tau
    lw = (_log_binom_lik(theta, x, n)[None, :]
          - 0.5 * theta[None, :] ** 2 / var[:, None]
          - 0.5 * np.log(var)[:, None]
          + log_tau_w[:, None])
    w = np.exp(lw - lw.max())
    p = 1.0 / (1.0 + np.exp(-theta))
    return float((w * p[None, :]).sum() / w.sum())


def pooled_posterior_mean(x, n, mu_sd=1.0, h=0.001) -> float:
    """E[expit(mu) | data] when every basket shares theta = mu ~ N(0, sigma^2)."""
    mu = np.arange(-20.0, 20.0 + h / 2, h)
    lw = _log_binom_lik(mu, float(np.sum(x)), float(np.sum(n))) - 0.5 * mu ** 2 / mu_sd ** 2
    w = np.exp(lw - lw.max())
    return float((w / (1.0 + np.exp(-mu))).sum() / w.sum())


# ---------------------------------------------------------------- clustering

def set_partitions(items):
    """All set partitions of ``items`` as lists of blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def labels_of(blocks, J):
    lab = [0] * J
    for k, block in enumerate(sorted(blocks, key=min)):
        for j in block:
            lab[j] = k
    return tuple(lab)


def brute_silhouette(points, labels):
    """Textbook silhouette with L1 distance; singletons score 0, mean over all."""
    pts = [np.asarray(p, dtype=float) for p in points]
    J = len(pts)
    dist = lambda i, j: float(np.abs(pts[i] - pts[j]).sum())
    s = []
    for i in range(J):
        own = [j for j in range(J) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = min(
            sum(dist(i, j) for j in members) / len(members)
            for members in ([j for j in range(J) if labels[j] == k] for k in set(labels) - {labels[i]})
        )
        m = max(a, b)
        s.append(0.0 if m == 0 else (b - a) / m)
    return s, sum(s) / J


def same_partition(a, b) -> bool:
    fa = {frozenset(j for j in range(len(a)) if a[j] == k) for k in set(a)}
    fb = {frozenset(j for j in range(len(b)) if b[j] == k) for k in set(b)}
    return fa == fb


def beta_binomial_rejection(n: int, p: float, threshold: float) -> float:
    """P(Beta(1+x, 1+n-x) 5% quantile > threshold) for x ~ Bin(n, p)."""
    from scipy import stats

    xs = np.arange(n + 1)
    rej = np.array([beta_quantile(0.05, 1 + x, 1 + n - x) > threshold for x in xs])
    return float(stats.binom.pmf(xs, n, p)[rej].sum())


def all_count_pairs(xs=range(11), ns=(5, 10, 20)):
    return [(x, n) for n, x in itertools.product(ns, xs) if x <= n]
