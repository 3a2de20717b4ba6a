# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Langevin / stochastic-approximation chain.

Mirrors ``_fallback.run_chain`` line for line; see that module for the
argument contract.
"""
import numpy as np

from libc.math cimport exp, fabs, isfinite, log, sqrt, M_PI

cdef enum:
    STATUS_OK = 0
    STATUS_NONFINITE = 1
    STATUS_DIVERGED = 2


cdef inline double _logistic(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _sign(double x) nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def run_chain(
    double[::1] theta,
    double[::1] nu,
    const double[:, ::1] xtx,
    const double[::1] xty,
    double yty,
    double sigma2,
    double lambda0,
    double lambda1,
    double beta,
    const double[::1] etas,
    const double[::1] omegas,
    const double[:, ::1] noise,
    Py_ssize_t burn_in,
    Py_ssize_t thinning,
    double[:, ::1] samples,
    double[:, ::1] diag,
    double max_norm,
):
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t n_iter = etas.shape[0]
    cdef Py_ssize_t n_samples = samples.shape[0]
    cdef bint record_diag = diag.shape[0] > 0
    cdef double[::1] grad = np.empty(d, dtype=np.float64)

    cdef double sigma = sqrt(sigma2)
    cdef double inv_s2 = 1.0 / sigma2
    cdef double lap_coef = 1.0 / (lambda0 * sigma)
    cdef double ridge_coef = 1.0 / (lambda1 * sigma2)
    # log(slab(0) * beta) - log(spike(0) * (1 - beta)); only used for 0 < beta < 1
    cdef double log_odds0 = 0.0
    cdef int beta_mode = 0  # -1: beta == 0, +1: beta == 1
    if beta <= 0.0:
        beta_mode = -1
    elif beta >= 1.0:
        beta_mode = 1
    else:
        log_odds0 = (-0.5 * log(2.0 * M_PI * sigma2 * lambda1) + log(beta)
                     + log(2.0 * sigma * lambda0) - log(1.0 - beta))

    cdef Py_ssize_t it, j, l, out_row
    cdef double eta, omega, noise_scale, acc, norm2, th, fresh, z
    cdef double quad, lin, penalty, nu_sum
    cdef int status = STATUS_OK
    cdef Py_ssize_t bad_it = -1, bad_coord = -1

    with nogil:
        for it in range(n_iter):
            eta = etas[it]
            omega = omegas[it]
            noise_scale = sqrt(2.0 * eta)

            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc = acc + xtx[j, l] * theta[l]
                grad[j] = ((acc - xty[j]) * inv_s2
                           + (1.0 - nu[j]) * lap_coef * _sign(theta[j])
                           + nu[j] * ridge_coef * theta[j])
                if not isfinite(grad[j]):
                    status = STATUS_NONFINITE
                    bad_it = it + 1
                    bad_coord = j
                    break
            if status != STATUS_OK:
                break

            norm2 = 0.0
            for j in range(d):
                th = theta[j] - eta * grad[j] + noise_scale * noise[it, j]
                theta[j] = th
                norm2 = norm2 + th * th

            for j in range(d):
                if beta_mode == 1:
                    fresh = 1.0
                elif beta_mode == -1:
                    fresh = 0.0
                else:
                    th = theta[j]
                    z = (log_odds0 - th * th * 0.5 * ridge_coef
                         + fabs(th) * lap_coef)
                    fresh = _logistic(z)
                nu[j] = (1.0 - omega) * nu[j] + omega * fresh
                if nu[j] < 0.0:
                    nu[j] = 0.0
                elif nu[j] > 1.0:
                    nu[j] = 1.0

            if not (norm2 <= max_norm * max_norm):
                status = STATUS_DIVERGED
                bad_it = it + 1
                break

            if record_diag:
                quad = 0.0
                lin = 0.0
                penalty = 0.0
                nu_sum = 0.0
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc = acc + xtx[j, l] * theta[l]
                    quad = quad + theta[j] * acc
                    lin = lin + theta[j] * xty[j]
                    penalty = (penalty + (1.0 - nu[j]) * lap_coef * fabs(theta[j])
                               + nu[j] * 0.5 * ridge_coef * theta[j] * theta[j])
                    nu_sum = nu_sum + nu[j]
                diag[it, 0] = sqrt(norm2)
                diag[it, 1] = nu_sum / d
                diag[it, 2] = 0.5 * inv_s2 * (yty - 2.0 * lin + quad) + penalty

            if it + 1 > burn_in and (it + 1 - burn_in) % thinning == 0:
                out_row = (it + 1 - burn_in) // thinning - 1
                if out_row < n_samples:
                    for j in range(d):
                        samples[out_row, j] = theta[j]

    return status, bad_it, bad_coord
