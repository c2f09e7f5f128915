"""Pure-Python/numpy versions of the routines in ``_kernels.pyx``.

Used when the compiled extension is missing or ``TRAJBASKET_PURE=1``.
Results match the compiled kernel bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .rng import uniforms


def _draw_cat(u: np.ndarray, cum: np.ndarray) -> np.ndarray:
    # first index with u < cum[k], clipped to the last category
    return np.minimum((u[..., None] >= cum).sum(axis=-1), cum.shape[-1] - 1)


def simulate_patients(keys, len_cum, pi_cum, p_cum):
    keys = np.asarray(keys, dtype=np.uint64)
    n = keys.shape[0]
    max_len = len(len_cum)
    u = uniforms(keys, np.arange(max_len + 1))
    lengths = _draw_cat(u[:, 0], np.asarray(len_cum)).astype(np.int64) + 1
    states = np.full((n, max_len), -1, dtype=np.int8)
    s = _draw_cat(u[:, 1], np.asarray(pi_cum))
    states[:, 0] = s
    p_cum = np.asarray(p_cum)
    for l in range(1, max_len):
        s = _draw_cat(u[:, l + 1], p_cum[s])
        live = lengths > l
        states[live, l] = s[live]
    return states, lengths


def count_responders(keys, len_cum, pi_cum, p_cum) -> int:
    states, _ = simulate_patients(keys, len_cum, pi_cum, p_cum)
    return int(((states >= 0) & (states <= 1)).any(axis=1).sum())


def _softplus(th: float) -> float:
    if th > 0:
        return th + math.log1p(math.exp(-th))
    return math.log1p(math.exp(th))


def _loglik(th: float, x: float, n: float) -> float:
    return x * th - n * _softplus(th)


def logit_normal_mcmc(x, n, theta0, step0, shift_step0, mu_sd, shape, rate,
                      iterations, burn_in, thin, adapt_every, generator):
    x = [float(v) for v in x]
    n = [float(v) for v in n]
    J = len(x)
    kept = (iterations - burn_in + thin - 1) // thin
    draws = np.empty((kept, J))
    theta = [float(v) for v in theta0]
    step = [float(v) for v in step0] + [float(shift_step0)]
    win = [0] * (J + 1)
    acc = [0] * (J + 1)
    normal = generator.standard_normal
    uniform = generator.random
    gamma = generator.standard_gamma

    mu = 0.0
    tau = shape / rate
    prec0 = 1.0 / (mu_sd * mu_sd)
    row = 0
    it = 0
    for it in range(iterations):
        for j in range(J):
            z = normal()
            prop = theta[j] + step[j] * z
            d1 = prop - mu
            d0 = theta[j] - mu
            logr = (_loglik(prop, x[j], n[j]) - _loglik(theta[j], x[j], n[j])) - 0.5 * tau * (d1 * d1 - d0 * d0)
            u = uniform()
            if logr >= 0 or u < math.exp(logr):
                theta[j] = prop
                win[j] += 1
                if it >= burn_in:
                    acc[j] += 1

        z = normal()
        delta = step[J] * z
        logr = 0.0
        for j in range(J):
            logr = logr + (_loglik(theta[j] + delta, x[j], n[j]) - _loglik(theta[j], x[j], n[j]))
        d1 = mu + delta
        logr = logr - 0.5 * prec0 * (d1 * d1 - mu * mu)
        u = uniform()
        if logr >= 0 or u < math.exp(logr):
            mu = mu + delta
            for j in range(J):
                theta[j] = theta[j] + delta
            win[J] += 1
            if it >= burn_in:
                acc[J] += 1

        prec = prec0 + J * tau
        ssum = 0.0
        for j in range(J):
            ssum = ssum + theta[j]
        mean = tau * ssum / prec
        mu = mean + normal() / math.sqrt(prec)

        ss = 0.0
        for j in range(J):
            d0 = theta[j] - mu
            ss = ss + d0 * d0
        tau = gamma(shape + 0.5 * J) / (rate + 0.5 * ss)

        if not (math.isfinite(mu) and math.isfinite(tau) and all(map(math.isfinite, theta))):
            raise FloatingPointError(
                f"non-finite sampler state at iteration {it}: mu={mu!r}, tau={tau!r}, theta={theta!r}")

        if it < burn_in and (it + 1) % adapt_every == 0:
            for j in range(J + 1):
                ratio = win[j] / adapt_every
                if ratio < 0.30:
                    step[j] = step[j] * 0.8
                elif ratio > 0.45:
                    step[j] = step[j] * 1.25
                win[j] = 0

        if it >= burn_in and (it - burn_in) % thin == 0:
            draws[row] = theta
            row += 1

    rates = np.array(acc, dtype=np.int64) / max(iterations - burn_in, 1)
    return draws, rates, np.array(step)
