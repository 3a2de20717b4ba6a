"""Empirical-Bayes sparse posterior sampling.

The prior on each coordinate mixes a Laplace spike of scale
``sigma * lambda0`` with a Gaussian slab of variance ``sigma^2 * lambda1``.
Rather than sampling the binary inclusion vector, the chain carries
inclusion probabilities ``nu`` that are updated by stochastic approximation
while ``theta`` follows Langevin dynamics on the adaptive-prior objective

    Q(theta) = |y - X theta|^2 / (2 sigma^2)
               + sum_i (1 - nu_i) |theta_i| / (lambda0 sigma)
               + sum_i nu_i theta_i^2 / (2 sigma^2 lambda1).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .errors import NumericalError, SamplerDivergenceError

Rate = Union[float, Callable[[np.ndarray], np.ndarray]]

INIT_VARIANCE = 0.1
DIVERGENCE_NORM = 1e3


@dataclass(frozen=True)
class SpikeSlabPrior:
    lambda0: float = 0.05
    lambda1: float = 1.0
    beta: float = 0.5
    sigma2: float = 2.0

    def __post_init__(self):
        if not self.lambda0 > 0 or not self.lambda1 > 0:
            raise ValueError("lambda0 and lambda1 must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @classmethod
    def for_problem(cls, d: int, s: int, noise_variance: float, **overrides) -> "SpikeSlabPrior":
        """Defaults tied to the problem: beta = min(1/2, 2s/d), sigma^2 = noise variance."""
        params = {"beta": min(0.5, 2.0 * s / d), "sigma2": noise_variance}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def sufficient_statistics(self):
        X, y = self.X, self.y
        return X.T @ X, X.T @ y, float(y @ y)


@dataclass
class SamplerState:
    theta: np.ndarray
    nu: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64)
        self.nu = np.array(self.nu, dtype=np.float64)
        if self.theta.shape != self.nu.shape or self.theta.ndim != 1:
            raise ValueError("theta and nu must be vectors of equal length")
        if np.any(self.nu < 0) or np.any(self.nu > 1):
            raise ValueError("inclusion probabilities must lie in [0, 1]")

    def copy(self) -> "SamplerState":
        return SamplerState(self.theta.copy(), self.nu.copy(), self.iteration)


def constant_rate(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda k: np.full(np.shape(k), float(value))


def polynomial_decay(base: float, power: float) -> Callable[[np.ndarray], np.ndarray]:
    """``k -> base / (1 + k) ** power``."""
    return lambda k: base / np.power(1.0 + np.asarray(k, dtype=np.float64), power)


def _as_rate(rate: Rate) -> Callable[[np.ndarray], np.ndarray]:
    return rate if callable(rate) else constant_rate(rate)


@dataclass(frozen=True)
class SamplerSchedule:
    """Learning rates ``eta(k)``, averaging weights ``omega(k)`` and output thinning.

    ``eta`` and ``omega`` are either constants or vectorized callables of
    the (0-based) iteration index.
    """

    eta: Rate
    omega: Rate = field(default_factory=lambda: polynomial_decay(1.0, 0.75))
    thinning: int = 10
    num_samples: int = 1000
    burn_in: int = 500

    def __post_init__(self):
        if self.thinning < 1 or self.num_samples < 1 or self.burn_in < 0:
            raise ValueError("need thinning >= 1, num_samples >= 1, burn_in >= 0")

    @property
    def num_iterations(self) -> int:
        return self.burn_in + self.num_samples * self.thinning

    def rates(self, start: int, count: int):
        k = np.arange(start, start + count, dtype=np.float64)
        etas = np.ascontiguousarray(_as_rate(self.eta)(k), dtype=np.float64)
        omegas = np.ascontiguousarray(_as_rate(self.omega)(k), dtype=np.float64)
        if np.any(~(etas > 0)):
            raise ValueError("learning rates must be positive")
        if np.any(~(omegas > 0)) or np.any(omegas > 1):
            raise ValueError("stochastic-approximation weights must lie in (0, 1]")
        return etas, omegas


def smoothness_bound(data: Dataset, prior: SpikeSlabPrior) -> float:
    """Curvature scale of Q: data Hessian + slab curvature + spike width^-2.

    The Laplace spike is not smooth; its inverse squared scale stands in so
    that the step size resolves the spike.
    """
    xtx = data.X.T @ data.X
    top = float(np.linalg.eigvalsh(xtx)[-1]) if data.n else 0.0
    bound = top / prior.sigma2 + 1.0 / (prior.lambda1 * prior.sigma2)
    if prior.beta < 1.0:
        bound += 1.0 / (prior.lambda0 * prior.sigma) ** 2
    return bound


def default_schedule(
    data: Dataset,
    prior: SpikeSlabPrior,
    *,
    num_samples: int = 1000,
    thinning: int = 10,
    burn_in: int = 500,
    step_scale: float = 0.1,
) -> SamplerSchedule:
    """Constant Langevin step ``step_scale / L`` and ``omega_k = (1 + k)^-0.75``."""
    eta = step_scale / smoothness_bound(data, prior)
    return SamplerSchedule(
        eta=eta,
        omega=polynomial_decay(1.0, 0.75),
        thinning=thinning,
        num_samples=num_samples,
        burn_in=burn_in,
    )


def spike_density(theta_i, prior: SpikeSlabPrior):
    scale = prior.sigma * prior.lambda0
    return np.exp(-np.abs(theta_i) / scale) / (2.0 * scale)


def slab_density(theta_i, prior: SpikeSlabPrior):
    var = prior.sigma2 * prior.lambda1
    return np.exp(-0.5 * np.square(theta_i) / var) / np.sqrt(2.0 * np.pi * var)


def inclusion_log_odds(theta_i, prior: SpikeSlabPrior):
    """log(slab * beta) - log(spike * (1 - beta)) for 0 < beta < 1."""
    theta_i = np.asarray(theta_i, dtype=np.float64)
    scale = prior.sigma * prior.lambda0
    var = prior.sigma2 * prior.lambda1
    log_slab = -0.5 * np.log(2.0 * np.pi * var) - 0.5 * theta_i**2 / var
    log_spike = -np.log(2.0 * scale) - np.abs(theta_i) / scale
    return log_slab + np.log(prior.beta) - log_spike - np.log1p(-prior.beta)


def inclusion_probability(theta_i, prior: SpikeSlabPrior):
    """Posterior probability that a coordinate is drawn from the slab.

    Evaluated as a logistic of the log-odds so that neither density has to
    be formed explicitly; far in the tails the Gaussian slab loses to the
    Laplace spike and the probability tends to 0.
    """
    scalar = np.ndim(theta_i) == 0
    theta_i = np.asarray(theta_i, dtype=np.float64)
    if prior.beta >= 1.0:
        out = np.ones_like(theta_i)
    elif prior.beta <= 0.0:
        out = np.zeros_like(theta_i)
    else:
        # logistic(z) without overflow
        z = inclusion_log_odds(theta_i, prior)
        e = np.exp(-np.abs(z))
        out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        out = np.clip(out, 0.0, 1.0)
    return float(out) if scalar else out


def neg_log_posterior(theta, nu, data: Dataset, prior: SpikeSlabPrior) -> float:
    """The adaptive-prior objective Q at ``theta`` (additive constants dropped)."""
    theta = np.asarray(theta, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    resid = data.y - data.X @ theta
    fit = 0.5 * float(resid @ resid) / prior.sigma2
    spike = np.sum((1.0 - nu) * np.abs(theta)) / (prior.lambda0 * prior.sigma)
    slab = np.sum(nu * theta**2) / (2.0 * prior.sigma2 * prior.lambda1)
    return fit + float(spike) + float(slab)


def neg_log_posterior_grad(theta, nu, data: Dataset, prior: SpikeSlabPrior) -> np.ndarray:
    """Gradient of Q; the |theta_i| term uses the subgradient 0 at theta_i = 0."""
    theta = np.asarray(theta, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if theta.shape != (data.d,) or nu.shape != (data.d,):
        raise ValueError("theta, nu and data dimensions disagree")
    grad = data.X.T @ (data.X @ theta - data.y) / prior.sigma2
    grad = grad + (1.0 - nu) * np.sign(theta) / (prior.lambda0 * prior.sigma)
    return grad + nu * theta / (prior.lambda1 * prior.sigma2)


def langevin_step(
    state: SamplerState,
    data: Dataset,
    prior: SpikeSlabPrior,
    eta_k: float,
    rng: np.random.Generator,
) -> SamplerState:
    """theta <- theta - eta * grad Q + sqrt(2 eta) * xi, with nu held fixed."""
    if not eta_k > 0:
        raise ValueError("eta_k must be positive")
    grad = neg_log_posterior_grad(state.theta, state.nu, data, prior)
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericalError(f"non-finite gradient at coordinate {int(bad[0])}")
    xi = rng.standard_normal(state.theta.shape[0])
    theta = state.theta - eta_k * grad + math.sqrt(2.0 * eta_k) * xi
    return SamplerState(theta, state.nu.copy(), state.iteration + 1)


def sa_step(state: SamplerState, prior: SpikeSlabPrior, omega_k: float) -> SamplerState:
    """nu <- (1 - omega) nu + omega * inclusion_probability(theta)."""
    if not 0.0 < omega_k <= 1.0:
        raise ValueError("omega_k must lie in (0, 1]")
    fresh = inclusion_probability(state.theta, prior)
    nu = np.clip((1.0 - omega_k) * state.nu + omega_k * fresh, 0.0, 1.0)
    return SamplerState(state.theta.copy(), nu, state.iteration)


def initial_state(d: int, rng: np.random.Generator) -> SamplerState:
    theta = math.sqrt(INIT_VARIANCE) * rng.standard_normal(d)
    return SamplerState(theta, np.full(d, 0.5), 0)


@dataclass
class SamplerRun:
    samples: np.ndarray
    state: SamplerState
    diagnostics: Optional[np.ndarray] = None


def run_sampler(
    data: Dataset,
    prior: SpikeSlabPrior,
    schedule: Optional[SamplerSchedule],
    rng: np.random.Generator,
    *,
    init: Optional[SamplerState] = None,
    record_diagnostics: bool = False,
) -> SamplerRun:
    """Run the chain and keep every ``thinning``-th iterate after burn-in.

    Random draws, in order: the initial ``theta`` (only when ``init`` is
    None), then one standard normal d-vector per iteration.
    """
    if schedule is None:
        schedule = default_schedule(data, prior)
    d = data.d
    state = initial_state(d, rng) if init is None else init.copy()
    if state.theta.shape[0] != d:
        raise ValueError("initial state dimension does not match the data")

    n_iter = schedule.num_iterations
    etas, omegas = schedule.rates(state.iteration, n_iter)
    noise = rng.standard_normal((n_iter, d))
    xtx, xty, yty = data.sufficient_statistics()
    samples = np.zeros((schedule.num_samples, d))
    diag = np.zeros((n_iter if record_diagnostics else 0, 3))

    status, where, coord = _kernels.run_chain(
        state.theta, state.nu,
        np.ascontiguousarray(xtx), np.ascontiguousarray(xty), yty,
        prior.sigma2, prior.lambda0, prior.lambda1, prior.beta,
        etas, omegas, noise,
        schedule.burn_in, schedule.thinning,
        samples, diag, DIVERGENCE_NORM,
    )
    if status == _kernels.STATUS_NONFINITE:
        raise NumericalError(
            f"non-finite gradient at coordinate {coord} in iteration {state.iteration + where}"
        )
    if status == _kernels.STATUS_DIVERGED:
        it = state.iteration + where
        raise SamplerDivergenceError(
            f"Langevin chain diverged (|theta| > {DIVERGENCE_NORM:g}) at iteration {it}", it
        )
    state.iteration += n_iter
    return SamplerRun(samples, state, diag if record_diagnostics else None)


def sample_posterior(
    data: Dataset,
    prior: SpikeSlabPrior,
    schedule: Optional[SamplerSchedule],
    rng: np.random.Generator,
    *,
    init: Optional[SamplerState] = None,
) -> np.ndarray:
    """M x d matrix of approximate posterior draws."""
    return run_sampler(data, prior, schedule, rng, init=init).samples


def write_diagnostics_csv(path, diagnostics: np.ndarray, start_iteration: int = 0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "theta_norm", "nu_mean", "Q_value"])
        for i, (norm, nu_mean, q) in enumerate(diagnostics):
            writer.writerow([start_iteration + i + 1, repr(float(norm)), repr(float(nu_mean)), repr(float(q))])
