# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: trajectory generation and the logit-normal sampler.

Every routine here has a line-for-line twin in ``_fallback.py``; the two
must consume random numbers in the same order and do the same floating
point operations so results are bitwise identical.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_IsValid, PyCapsule_GetPointer
from libc.math cimport exp, log, log1p, sqrt, isfinite
from libc.stdint cimport uint64_t, int64_t, int8_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal, random_standard_gamma, random_standard_uniform)

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TO_UNIT = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double ctr_uniform(uint64_t key, uint64_t counter) nogil:
    return <double>(mix64(key + (counter + 1) * GOLDEN) >> 11) * TO_UNIT


cdef inline int draw_cat(double u, const double *cum, int k) nogil:
    cdef int i = 0
    while i < k - 1 and u >= cum[i]:
        i += 1
    return i


def simulate_patients(const uint64_t[::1] keys, const double[::1] len_cum,
                      const double[::1] pi_cum, const double[:, ::1] p_cum):
    """Trajectories for each patient key; returns (states padded with -1, lengths)."""
    cdef Py_ssize_t n = keys.shape[0], i
    cdef int max_len = len_cum.shape[0], t, l, s
    states_arr = np.full((n, max_len), -1, dtype=np.int8)
    lengths_arr = np.empty(n, dtype=np.int64)
    cdef int8_t[:, ::1] states = states_arr
    cdef int64_t[::1] lengths = lengths_arr
    with nogil:
        for i in range(n):
            t = draw_cat(ctr_uniform(keys[i], 0), &len_cum[0], max_len) + 1
            lengths[i] = t
            s = draw_cat(ctr_uniform(keys[i], 1), &pi_cum[0], 4)
            states[i, 0] = s
            for l in range(1, t):
                s = draw_cat(ctr_uniform(keys[i], l + 1), &p_cum[s, 0], 4)
                states[i, l] = s
    return states_arr, lengths_arr


def count_responders(const uint64_t[::1] keys, const double[::1] len_cum,
                     const double[::1] pi_cum, const double[:, ::1] p_cum):
    """Number of patients who visit CR or PR at any assessment."""
    cdef Py_ssize_t n = keys.shape[0], i
    cdef int max_len = len_cum.shape[0], t, l, s
    cdef long long hits = 0
    with nogil:
        for i in range(n):
            t = draw_cat(ctr_uniform(keys[i], 0), &len_cum[0], max_len) + 1
            s = draw_cat(ctr_uniform(keys[i], 1), &pi_cum[0], 4)
            l = 1
            while s > 1 and l < t:
                s = draw_cat(ctr_uniform(keys[i], l + 1), &p_cum[s, 0], 4)
                l += 1
            if s <= 1:
                hits += 1
    return hits


cdef inline double softplus(double th) nogil:
    if th > 0:
        return th + log1p(exp(-th))
    return log1p(exp(th))


cdef inline double loglik(double th, double x, double n) nogil:
    return x * th - n * softplus(th)


def logit_normal_mcmc(const double[::1] x, const double[::1] n, const double[::1] theta0,
                      const double[::1] step0, double shift_step0,
                      double mu_sd, double shape, double rate,
                      Py_ssize_t iterations, Py_ssize_t burn_in, Py_ssize_t thin,
                      int adapt_every, generator):
    """Metropolis-within-Gibbs for x ~ Bin(n, expit(theta)), theta ~ N(mu, 1/tau).

    Returns (kept theta draws, post-burn-in acceptance rates, final step sizes).
    The last entry of the rate and step arrays is the joint shift move.
    """
    cdef Py_ssize_t J = x.shape[0], j, it, row = 0
    cdef Py_ssize_t kept = (iterations - burn_in + thin - 1) // thin
    cdef const char *capsule_name = "BitGenerator"
    cdef bitgen_t *rng
    capsule = generator.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, capsule_name):
        raise ValueError("invalid bit generator")
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, capsule_name)

    draws_arr = np.empty((kept, J), dtype=np.float64)
    theta_arr = np.array(theta0, dtype=np.float64)
    step_arr = np.empty(J + 1, dtype=np.float64)
    step_arr[:J] = step0
    step_arr[J] = shift_step0
    win_arr = np.zeros(J + 1, dtype=np.int64)
    acc_arr = np.zeros(J + 1, dtype=np.int64)
    cdef double[:, ::1] draws = draws_arr
    cdef double[::1] theta = theta_arr
    cdef double[::1] step = step_arr
    cdef int64_t[::1] win = win_arr
    cdef int64_t[::1] acc = acc_arr

    cdef double mu = 0.0
    cdef double tau = shape / rate
    cdef double prec0 = 1.0 / (mu_sd * mu_sd)
    cdef double z, prop, logr, u, d0, d1, delta, prec, ssum, mean, ss, ratio
    cdef int bad = 0

    with generator.bit_generator.lock, nogil:
        for it in range(iterations):
            for j in range(J):
                z = random_standard_normal(rng)
                prop = theta[j] + step[j] * z
                d1 = prop - mu
                d0 = theta[j] - mu
                logr = (loglik(prop, x[j], n[j]) - loglik(theta[j], x[j], n[j])) - 0.5 * tau * (d1 * d1 - d0 * d0)
                u = random_standard_uniform(rng)
                if logr >= 0 or u < exp(logr):
                    theta[j] = prop
                    win[j] += 1
                    if it >= burn_in:
                        acc[j] += 1

            z = random_standard_normal(rng)
            delta = step[J] * z
            logr = 0.0
            for j in range(J):
                logr = logr + (loglik(theta[j] + delta, x[j], n[j]) - loglik(theta[j], x[j], n[j]))
            d1 = mu + delta
            logr = logr - 0.5 * prec0 * (d1 * d1 - mu * mu)
            u = random_standard_uniform(rng)
            if logr >= 0 or u < exp(logr):
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
            mu = mean + random_standard_normal(rng) / sqrt(prec)

            ss = 0.0
            for j in range(J):
                d0 = theta[j] - mu
                ss = ss + d0 * d0
            tau = random_standard_gamma(rng, shape + 0.5 * J) / (rate + 0.5 * ss)

            if not (isfinite(mu) and isfinite(tau)):
                bad = 1
            for j in range(J):
                if not isfinite(theta[j]):
                    bad = 1
            if bad:
                break

            if it < burn_in and (it + 1) % adapt_every == 0:
                for j in range(J + 1):
                    ratio = <double>win[j] / adapt_every
                    if ratio < 0.30:
                        step[j] = step[j] * 0.8
                    elif ratio > 0.45:
                        step[j] = step[j] * 1.25
                    win[j] = 0

            if it >= burn_in and (it - burn_in) % thin == 0:
                for j in range(J):
                    draws[row, j] = theta[j]
                row += 1

    if bad:
        raise FloatingPointError(
            f"non-finite sampler state at iteration {it}: mu={mu!r}, tau={tau!r}, "
            f"theta={theta_arr.tolist()!r}")
    rates = acc_arr / max(iterations - burn_in, 1)
    return draws_arr, rates, step_arr
