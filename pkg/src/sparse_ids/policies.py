"""Bandit policies sharing the ``reset / select / update`` interface.

Sparse IDS and sparse TS draw their posterior samples from the
spike-and-slab Langevin sampler; vanilla IDS, LinTS and LinUCB use the
conjugate ridge posterior; ESTC explores uniformly then commits to a Lasso
estimate.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .env import ActionSet, History, HistoryRecord
from .errors import NumericalError
from .sampler import (
    Dataset,
    SamplerState,
    SpikeSlabPrior,
    default_schedule,
    run_sampler,
)

V_FLOOR = 1e-12

POLICY_KINDS = ("sparse_ids", "sparse_ts", "vanilla_ids", "lin_ts", "lin_ucb", "estc", "uniform")
UCB_ALPHA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class PosteriorSummary:
    delta_hat: np.ndarray
    v_hat: np.ndarray
    p_star: np.ndarray
    mu_hat: np.ndarray
    mu_conditional: np.ndarray


def estimate_delta_v(samples, actions) -> PosteriorSummary:
    """Monte Carlo estimates of expected regret and information variance.

    Samples are grouped by the action they make optimal (lowest index on
    ties). With group frequencies ``p_a`` and group means ``mu_a``:

        v(a) = a^T [sum_a' p_a' (mu_a' - mu)(mu_a' - mu)^T] a
        delta(a) = sum_a' p_a' <a', mu_a'> - <a, mu>,  clamped at 0.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    phi = actions.features if isinstance(actions, ActionSet) else np.asarray(actions, dtype=np.float64)
    M = samples.shape[0]
    if M == 0:
        raise ValueError("need at least one posterior sample")
    K, d = phi.shape

    best = np.argmax(samples @ phi.T, axis=1)
    counts = np.bincount(best, minlength=K)
    p_star = counts / M
    mu = samples.mean(axis=0)

    sums = np.zeros((K, d))
    np.add.at(sums, best, samples)
    occupied = counts > 0
    mu_cond = np.tile(mu, (K, 1))
    mu_cond[occupied] = sums[occupied] / counts[occupied, None]

    dev = mu_cond[occupied] - mu
    spread = (dev * p_star[occupied, None]).T @ dev
    v_hat = np.einsum("kd,de,ke->k", phi, spread, phi)
    v_hat = np.maximum(v_hat, 0.0)

    optimal_value = float(np.sum(p_star[occupied] * np.einsum("kd,kd->k", phi[occupied], mu_cond[occupied])))
    delta_hat = np.maximum(optimal_value - phi @ mu, 0.0)
    return PosteriorSummary(delta_hat, v_hat, p_star, mu, mu_cond)


def information_ratios(delta_hat, v_hat, v_floor: float = V_FLOOR) -> np.ndarray:
    """Per-action delta^2 / v, with 0 for zero-regret actions and inf for uninformative ones."""
    delta_hat = np.asarray(delta_hat, dtype=np.float64)
    v_hat = np.asarray(v_hat, dtype=np.float64)
    ratio = np.full(delta_hat.shape, np.inf)
    zero = delta_hat <= 0.0
    informative = ~zero & (v_hat > v_floor)
    ratio[zero] = 0.0
    ratio[informative] = delta_hat[informative] ** 2 / v_hat[informative]
    return ratio


def ids_select(summary: PosteriorSummary, rng: np.random.Generator, v_floor: float = V_FLOOR) -> int:
    ratio = information_ratios(summary.delta_hat, summary.v_hat, v_floor)
    if np.all(np.isinf(ratio)):
        return int(np.argmin(summary.delta_hat))
    ties = np.flatnonzero(ratio == ratio.min())
    if ties.size == 1:
        return int(ties[0])
    return int(ties[rng.integers(ties.size)])


def greedy_action(theta, actions) -> int:
    phi = actions.features if isinstance(actions, ActionSet) else np.asarray(actions)
    return int(np.argmax(phi @ theta))


def sparse_ts_select(samples, actions, rng: np.random.Generator) -> int:
    samples = np.atleast_2d(samples)
    m = int(rng.integers(samples.shape[0]))
    return greedy_action(samples[m], actions)


@dataclass
class RidgeState:
    """Regularized Gram matrix ``V = ridge I + sum a a^T`` and ``b = sum a y``."""

    V: np.ndarray
    b: np.ndarray
    ridge: float = 1.0

    @classmethod
    def initial(cls, d: int, ridge: float = 1.0) -> "RidgeState":
        if not ridge > 0:
            raise ValueError("ridge must be positive")
        return cls(ridge * np.eye(d), np.zeros(d), ridge)

    def update(self, action, reward: float) -> None:
        action = np.asarray(action, dtype=np.float64)
        self.V += np.outer(action, action)
        self.b += reward * action

    def cholesky(self) -> np.ndarray:
        try:
            return linalg.cholesky(self.V, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"Gram matrix is not positive definite: {exc}") from exc

    def estimate(self) -> np.ndarray:
        return linalg.cho_solve((self.cholesky(), True), self.b)

    def sample(self, noise_variance: float, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from N(V^-1 b, noise_variance V^-1), one per row."""
        chol = self.cholesky()
        mean = linalg.cho_solve((chol, True), self.b)
        z = rng.standard_normal((size, self.b.shape[0]))
        # V = L L^T  =>  L^-T z has covariance V^-1
        return mean + math.sqrt(noise_variance) * linalg.solve_triangular(chol, z.T, lower=True, trans="T").T


def lin_ts_select(state: RidgeState, actions, noise_variance: float, rng: np.random.Generator) -> int:
    theta = state.sample(noise_variance, 1, rng)[0]
    return greedy_action(theta, actions)


def lin_ucb_select(state: RidgeState, actions, alpha: float) -> int:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    phi = actions.features if isinstance(actions, ActionSet) else np.asarray(actions)
    chol = state.cholesky()
    theta = linalg.cho_solve((chol, True), state.b)
    w = linalg.solve_triangular(chol, phi.T, lower=True)
    width = np.sqrt(np.einsum("ij,ij->j", w, w))
    return int(np.argmax(phi @ theta + alpha * width))


def vanilla_ids_select(state: RidgeState, actions, M: int, noise_variance: float, rng: np.random.Generator) -> int:
    if M < 1:
        raise ValueError("M must be >= 1")
    samples = state.sample(noise_variance, M, rng)
    return ids_select(estimate_delta_v(samples, actions), rng)


@dataclass
class LassoResult:
    theta: np.ndarray
    iterations: int
    converged: bool


def lasso_proximal_gradient(X, y, penalty: float, *, tol: float = 1e-8, max_iter: int = 5000) -> LassoResult:
    """ISTA for ``|y - X theta|^2 / (2n) + penalty * |theta|_1``.

    Stops once both the objective change and the largest coordinate change
    fall below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    theta = np.zeros(d)
    if n == 0:
        return LassoResult(theta, 0, True)
    gram = X.T @ X / n
    xty = X.T @ y / n
    lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    if lipschitz <= 0:
        return LassoResult(theta, 0, True)
    step = 1.0 / lipschitz

    def objective(t):
        r = y - X @ t
        l1 = float(np.abs(t).sum())
        return 0.5 * float(r @ r) / n + (penalty * l1 if l1 else 0.0)

    value = objective(theta)
    for it in range(1, max_iter + 1):
        z = theta - step * (gram @ theta - xty)
        new = np.sign(z) * np.maximum(np.abs(z) - step * penalty, 0.0)
        new_value = objective(new)
        moved = float(np.max(np.abs(new - theta)))
        theta, change, value = new, abs(value - new_value), new_value
        if change < tol and moved < tol:
            return LassoResult(theta, it, True)
    return LassoResult(theta, max_iter, False)


@dataclass
class PolicyConfig:
    """Which policy to run and its tuning knobs.

    ``num_posterior_samples`` and ``ucb_alpha`` may be left as None; they
    then resolve to 1000 and 1.0 here, and an experiment substitutes its own
    sample budget and the LinUCB candidate grid.
    """

    kind: str
    num_posterior_samples: Optional[int] = None
    ucb_alpha: Optional[float] = None
    estc_explore_rounds: Optional[int] = None
    estc_lasso_penalty: Optional[float] = None
    prior: Optional[SpikeSlabPrior] = None
    ridge: float = 1.0
    thinning: int = 10
    burn_in: int = 500
    step_scale: float = 0.1
    warm_start: bool = False
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.num_posterior_samples is not None and self.num_posterior_samples < 1:
            raise ValueError("num_posterior_samples must be >= 1")
        if self.estc_explore_rounds is not None and self.estc_explore_rounds < 1:
            raise ValueError("estc_explore_rounds must be >= 1")
        if self.ucb_alpha is not None and self.ucb_alpha < 0:
            raise ValueError("ucb_alpha must be non-negative")
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")

    @property
    def M(self) -> int:
        return 1000 if self.num_posterior_samples is None else self.num_posterior_samples

    @property
    def alpha(self) -> float:
        return 1.0 if self.ucb_alpha is None else self.ucb_alpha

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "lin_ucb":
            return f"lin_ucb(alpha={self.alpha:g})"
        return self.kind


class Policy:
    """Base class: ``reset`` once per trial, then ``select`` / ``update`` each round."""

    def __init__(self, config: PolicyConfig):
        self.config = config
        self.trace = []

    @property
    def name(self) -> str:
        return self.config.label

    def reset(self, actions: ActionSet, horizon: int, noise_variance: float, sparsity: int,
              rng: np.random.Generator) -> None:
        self.actions = actions
        self.horizon = horizon
        self.noise_variance = noise_variance
        self.sparsity = sparsity
        self.rng = rng
        self.trace = []

    def select(self, history: History) -> int:
        raise NotImplementedError

    def update(self, record: HistoryRecord) -> None:
        pass


class UniformPolicy(Policy):
    def select(self, history):
        return int(self.rng.integers(self.actions.K))


class _SparsePosteriorPolicy(Policy):
    def reset(self, actions, horizon, noise_variance, sparsity, rng):
        super().reset(actions, horizon, noise_variance, sparsity, rng)
        cfg = self.config
        self.prior = cfg.prior or SpikeSlabPrior.for_problem(actions.d, sparsity, noise_variance)
        self._state: Optional[SamplerState] = None

    def posterior_samples(self, history: History) -> np.ndarray:
        cfg = self.config
        data = Dataset(history.X, history.y)
        schedule = default_schedule(
            data, self.prior,
            num_samples=cfg.M,
            thinning=cfg.thinning,
            burn_in=cfg.burn_in,
            step_scale=cfg.step_scale,
        )
        init = self._state if cfg.warm_start else None
        run = run_sampler(data, self.prior, schedule, self.rng, init=init)
        self._state = run.state
        return run.samples


class SparseIDS(_SparsePosteriorPolicy):
    def select(self, history):
        summary = estimate_delta_v(self.posterior_samples(history), self.actions)
        choice = ids_select(summary, self.rng)
        _record_choice(self.trace, len(history) + 1, choice, summary)
        return choice


class SparseTS(_SparsePosteriorPolicy):
    def select(self, history):
        return sparse_ts_select(self.posterior_samples(history), self.actions, self.rng)


class _RidgePolicy(Policy):
    def reset(self, actions, horizon, noise_variance, sparsity, rng):
        super().reset(actions, horizon, noise_variance, sparsity, rng)
        self.state = RidgeState.initial(actions.d, self.config.ridge)

    def update(self, record):
        self.state.update(record.action, record.reward)


class LinTS(_RidgePolicy):
    def select(self, history):
        return lin_ts_select(self.state, self.actions, self.noise_variance, self.rng)


class LinUCB(_RidgePolicy):
    def select(self, history):
        return lin_ucb_select(self.state, self.actions, self.config.alpha)


class VanillaIDS(_RidgePolicy):
    def select(self, history):
        samples = self.state.sample(self.noise_variance, self.config.M, self.rng)
        summary = estimate_delta_v(samples, self.actions)
        choice = ids_select(summary, self.rng)
        _record_choice(self.trace, len(history) + 1, choice, summary)
        return choice


def estc_defaults(horizon: int, d: int, noise_variance: float):
    """Exploration length ceil(n^(2/3)) and Lasso penalty 2 sigma sqrt(log d / n1)."""
    n1 = max(1, math.ceil(horizon ** (2.0 / 3.0) - 1e-9))
    penalty = 2.0 * math.sqrt(noise_variance) * math.sqrt(math.log(d) / n1)
    return n1, penalty


class ESTC(Policy):
    """Explore uniformly for n1 rounds, fit a Lasso once, then play greedily."""

    def reset(self, actions, horizon, noise_variance, sparsity, rng):
        super().reset(actions, horizon, noise_variance, sparsity, rng)
        n1, _ = estc_defaults(horizon, actions.d, noise_variance)
        self.explore_rounds = self.config.estc_explore_rounds or n1
        self.penalty = self.config.estc_lasso_penalty
        if self.penalty is None:
            self.penalty = 2.0 * math.sqrt(noise_variance * math.log(actions.d) / self.explore_rounds)
        self.committed: Optional[int] = None
        self.lasso: Optional[LassoResult] = None
        self.warnings = []

    def select(self, history):
        return estc_policy(len(history) + 1, history, self)


def estc_policy(round_index: int, history: History, policy: ESTC) -> int:
    if round_index <= policy.explore_rounds:
        return int(policy.rng.integers(policy.actions.K))
    if policy.committed is None:
        fit = lasso_proximal_gradient(history.X, history.y, policy.penalty)
        if not fit.converged:
            msg = f"Lasso hit the iteration cap ({fit.iterations}); using the last iterate"
            policy.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        policy.lasso = fit
        policy.committed = greedy_action(fit.theta, policy.actions)
    return policy.committed


_POLICY_CLASSES = {
    "sparse_ids": SparseIDS,
    "sparse_ts": SparseTS,
    "vanilla_ids": VanillaIDS,
    "lin_ts": LinTS,
    "lin_ucb": LinUCB,
    "estc": ESTC,
    "uniform": UniformPolicy,
}


def make_policy(config: PolicyConfig) -> Policy:
    return _POLICY_CLASSES[config.kind](config)


def _record_choice(trace, t, choice, summary):
    delta = float(summary.delta_hat[choice])
    v = float(summary.v_hat[choice])
    ratio = float(information_ratios(summary.delta_hat[choice:choice + 1], summary.v_hat[choice:choice + 1])[0])
    trace.append((t, choice, delta, v, ratio))


def write_selection_trace(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "action_index", "delta_hat", "v_hat", "ratio"])
        for t, a, delta, v, ratio in trace:
            writer.writerow([t, a, repr(delta), repr(v), repr(ratio)])
