"""Pure-Python (numpy) implementation of the sampler's inner loop.

This is the reference the compiled ``_chain`` extension is checked against,
and the code path used when the extension is not built.
"""
import math

import numpy as np

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_DIVERGED = 2


def run_chain(theta, nu, xtx, xty, yty, sigma2, lambda0, lambda1, beta,
              etas, omegas, noise, burn_in, thinning, samples, diag, max_norm):
    """Run the adaptive-prior Langevin chain in place.

    Parameters
    ----------
    theta, nu : ndarray, shape (d,)
        Chain state. Both are overwritten with the final state.
    xtx, xty, yty
        Sufficient statistics ``X^T X``, ``X^T y`` and ``y^T y`` of the data.
    sigma2, lambda0, lambda1, beta : float
        Spike-and-slab hyperparameters.
    etas, omegas : ndarray, shape (n_iter,)
        Langevin learning rates and stochastic-approximation weights.
    noise : ndarray, shape (n_iter, d)
        Pre-drawn standard normal innovations.
    burn_in, thinning : int
        Iterate ``burn_in + j * thinning`` (1-based) is stored as sample ``j``.
    samples : ndarray, shape (M, d)
        Output buffer.
    diag : ndarray, shape (n_iter, 3) or (0, 3)
        Per-iteration ``(|theta|, mean(nu), Q)``; skipped when empty.
    max_norm : float
        Divergence threshold on ``|theta|_2``.

    Returns
    -------
    status, iteration, coordinate : int
        ``status`` is 0 on success, 1 for a non-finite gradient (with the
        offending coordinate), 2 when the iterate norm exceeds ``max_norm``.
    """
    d = theta.shape[0]
    n_samples = samples.shape[0]
    record_diag = diag.shape[0] > 0
    sigma = math.sqrt(sigma2)
    lap_coef = 1.0 / (lambda0 * sigma)
    ridge_coef = 1.0 / (lambda1 * sigma2)
    if 0.0 < beta < 1.0:
        log_odds0 = (-0.5 * math.log(2.0 * math.pi * sigma2 * lambda1) + math.log(beta)
                     + math.log(2.0 * sigma * lambda0) - math.log(1.0 - beta))

    for it in range(etas.shape[0]):
        eta = etas[it]
        omega = omegas[it]
        grad = ((xtx @ theta - xty) / sigma2
                + (1.0 - nu) * lap_coef * np.sign(theta)
                + nu * ridge_coef * theta)
        bad = ~np.isfinite(grad)
        if bad.any():
            return STATUS_NONFINITE, it + 1, int(np.argmax(bad))

        theta[:] = theta - eta * grad + math.sqrt(2.0 * eta) * noise[it]

        if beta >= 1.0:
            fresh = np.ones(d)
        elif beta <= 0.0:
            fresh = np.zeros(d)
        else:
            z = log_odds0 - 0.5 * ridge_coef * theta * theta + lap_coef * np.abs(theta)
            fresh = _logistic(z)
        nu[:] = np.clip((1.0 - omega) * nu + omega * fresh, 0.0, 1.0)

        norm2 = float(theta @ theta)
        if not norm2 <= max_norm * max_norm:
            return STATUS_DIVERGED, it + 1, -1

        if record_diag:
            penalty = np.sum((1.0 - nu) * lap_coef * np.abs(theta)
                             + nu * 0.5 * ridge_coef * theta * theta)
            fit = yty - 2.0 * theta @ xty + theta @ xtx @ theta
            diag[it] = (math.sqrt(norm2), nu.mean(), 0.5 * fit / sigma2 + penalty)

        k = it + 1 - burn_in
        if k > 0 and k % thinning == 0 and k // thinning <= n_samples:
            samples[k // thinning - 1] = theta
    return STATUS_OK, -1, -1


def _logistic(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out
