"""Regret bookkeeping, the exploratory constant and regret-bound reference curves."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .env import INFORMATIVE, LABELS, UNINFORMATIVE, ActionSet, BanditInstance


@dataclass
class RegretTrace:
    policy_name: str
    trial_seed: int
    instant: np.ndarray
    cumulative: np.ndarray = None

    def __post_init__(self):
        self.instant = np.asarray(self.instant, dtype=np.float64)
        if np.any(self.instant < 0):
            raise ValueError("instantaneous regret must be non-negative")
        prefix = np.cumsum(self.instant)
        if self.cumulative is None:
            self.cumulative = prefix
        else:
            self.cumulative = np.asarray(self.cumulative, dtype=np.float64)
            if self.cumulative.shape != prefix.shape or not np.allclose(self.cumulative, prefix):
                raise ValueError("cumulative must be the prefix sum of instant")

    def __len__(self):
        return self.instant.shape[0]


def instantaneous_regret(instance: BanditInstance, action_index: int) -> float:
    """Pseudo-regret <x*, theta*> - <a, theta*> of one action."""
    means = instance.mean_rewards
    return float(means[instance.optimal_action_index] - means[action_index])


def aggregate(traces: Sequence[RegretTrace]):
    """Pointwise mean and standard error of cumulative regret across trials."""
    if len(traces) == 0:
        raise ValueError("need at least one trace")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have different lengths: {sorted(lengths)}")
    stacked = np.vstack([t.cumulative for t in traces])
    mean = stacked.mean(axis=0)
    if stacked.shape[0] == 1:
        return mean, np.zeros_like(mean)
    return mean, stacked.std(axis=0, ddof=1) / math.sqrt(stacked.shape[0])


@dataclass(frozen=True)
class BoundInputs:
    n: int
    d: int
    s: int
    K: int
    c_min: float = 1.0
    metric_constant: float = 1.0

    def __post_init__(self):
        if min(self.n, self.d, self.s, self.K) < 1:
            raise ValueError("n, d, s and K must be positive")
        if self.s > self.d:
            raise ValueError("s must not exceed d")
        if not self.c_min > 0 or not self.metric_constant > 0:
            raise ValueError("c_min and metric_constant must be positive")


def _sparse_entropy_term(inputs: BoundInputs) -> float:
    scale = inputs.metric_constant * inputs.d * math.sqrt(inputs.n) / inputs.s
    return 2.0 * inputs.s * math.log(scale)


def delta_cap(inputs: BoundInputs) -> float:
    """min(log K, 2 s log(C d sqrt(n) / s))."""
    return min(math.log(inputs.K), _sparse_entropy_term(inputs))


def delta_branch(inputs: BoundInputs) -> str:
    """``"log_k"`` when log K attains the minimum, else ``"sparse"``."""
    return "log_k" if math.log(inputs.K) <= _sparse_entropy_term(inputs) else "sparse"


def _bound_branches(inputs: BoundInputs):
    delta = max(delta_cap(inputs), 0.0)
    worst_case = math.sqrt(0.5 * inputs.n * inputs.d * delta)
    poor = (inputs.s ** (2 / 3) * inputs.n ** (2 / 3) * delta ** (1 / 3)
            / (2.0 * inputs.c_min) ** (1 / 3))
    return worst_case, poor


def regret_bound(inputs: BoundInputs, regime: str = "arbitrary") -> float:
    """Bayesian regret bound of sparse IDS.

    ``arbitrary``: sqrt(n d Delta / 2). ``exploratory``: the smaller of that
    and s^(2/3) n^(2/3) Delta^(1/3) / (2 C_min)^(1/3).
    """
    worst_case, poor = _bound_branches(inputs)
    if regime == "arbitrary":
        return worst_case
    if regime == "exploratory":
        return min(worst_case, poor)
    raise ValueError(f"unknown regime {regime!r}")


def exploratory_branch(inputs: BoundInputs) -> str:
    """``"n_two_thirds"`` when the data-poor term is strictly smaller, else ``"sqrt"``."""
    worst_case, poor = _bound_branches(inputs)
    return "n_two_thirds" if poor < worst_case else "sqrt"


def c_min_estimate(actions, iterations: int = 200) -> float:
    """Lower bound on max over designs mu of lambda_min(E_mu[A A^T]).

    Frank-Wolfe ascent from the uniform design: each step shifts mass
    towards the action best aligned with the current bottom eigenvector,
    with step size 2 / (k + 2). The best eigenvalue seen is returned, so
    the estimate never decreases with more iterations.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    phi = actions.features if isinstance(actions, ActionSet) else np.asarray(actions, dtype=np.float64)
    K, d = phi.shape
    if np.linalg.matrix_rank(phi) < d:
        warnings.warn(f"actions span fewer than d={d} dimensions; C_min is 0", RuntimeWarning, stacklevel=2)
        return 0.0

    mu = np.full(K, 1.0 / K)
    best = -math.inf
    for k in range(iterations):
        design = phi.T @ (mu[:, None] * phi)
        vals, vecs = np.linalg.eigh(design)
        best = max(best, float(vals[0]))
        target = int(np.argmax((phi @ vecs[:, 0]) ** 2))
        gamma = 2.0 / (k + 2.0)
        mu *= 1.0 - gamma
        mu[target] += gamma
    design = phi.T @ (mu[:, None] * phi)
    return max(best, float(np.linalg.eigvalsh(design)[0]))


def informative_pull_histogram(action_log: Iterable[int], instance: BanditInstance) -> dict:
    """Number of pulls per action label over one episode."""
    labels = instance.actions.labels
    if labels is None:
        raise ValueError("instance actions carry no informative/uninformative labels")
    counts = dict.fromkeys(LABELS, 0)
    for i in action_log:
        counts[labels[i]] += 1
    return counts


def write_aggregate_csv(path, rows) -> None:
    """Rows of ``(t, policy, mean_cum_regret, stderr, n_trials)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "policy", "mean_cum_regret", "stderr", "n_trials"])
        for t, policy, mean, se, n_trials in rows:
            writer.writerow([t, policy, repr(float(mean)), repr(float(se)), n_trials])


def bound_curves(n: int, d: int, s: int, K: int, c_min: float, metric_constant: float = 1.0):
    out = []
    for t in range(1, n + 1):
        inputs = BoundInputs(t, d, s, K, c_min, metric_constant)
        out.append((t, regret_bound(inputs, "arbitrary"), regret_bound(inputs, "exploratory")))
    return out


def write_bound_csv(path, curves) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "bound_arbitrary", "bound_exploratory"])
        for t, arb, expl in curves:
            writer.writerow([t, repr(float(arb)), repr(float(expl))])


__all__ = [
    "INFORMATIVE",
    "UNINFORMATIVE",
    "RegretTrace",
    "BoundInputs",
    "instantaneous_regret",
    "aggregate",
    "delta_cap",
    "delta_branch",
    "regret_bound",
    "exploratory_branch",
    "c_min_estimate",
    "informative_pull_histogram",
    "write_aggregate_csv",
    "bound_curves",
    "write_bound_csv",
]
