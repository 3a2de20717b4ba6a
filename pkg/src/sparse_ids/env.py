"""Action sets, sparse bandit instances and the reward channel."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConstructionError, NumericalError

INFORMATIVE = "informative"
UNINFORMATIVE = "uninformative"
PLAIN = "plain"
LABELS = (INFORMATIVE, UNINFORMATIVE, PLAIN)

DEFAULT_NOISE_VARIANCE = 2.0
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class ActionSet:
    """K actions in R^d stored as the rows of ``features``."""

    features: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a K x d matrix")
        K, d = features.shape
        if K < 2 or d < 2:
            raise ValueError(f"need K >= 2 and d >= 2, got K={K}, d={d}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if np.max(np.abs(features)) > 1.0 + _BOUND_SLACK:
            raise ValueError("every feature entry must satisfy |a_j| <= 1")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)
        if self.labels is not None:
            labels = tuple(str(lab) for lab in self.labels)
            if len(labels) != K:
                raise ValueError(f"got {len(labels)} labels for {K} actions")
            unknown = set(labels) - set(LABELS)
            if unknown:
                raise ValueError(f"unknown action labels: {sorted(unknown)}")
            object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.K

    def indices_with_label(self, label: str) -> np.ndarray:
        if self.labels is None:
            raise ValueError("action set carries no labels")
        return np.flatnonzero(np.asarray(self.labels) == label)


@dataclass(frozen=True)
class SparseParameter:
    theta: np.ndarray
    sparsity: int

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        nnz = int(np.count_nonzero(theta))
        if nnz > self.sparsity:
            raise ValueError(f"theta has {nnz} nonzeros, more than sparsity {self.sparsity}")

    @property
    def d(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class BanditInstance:
    """An action set, a hidden sparse parameter and the Gaussian noise level."""

    actions: ActionSet
    theta_star: SparseParameter
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    seed: Optional[int] = None
    optimal_action_index: int = field(init=False)
    optimal_value: float = field(init=False)

    def __post_init__(self):
        if self.actions.d != self.theta_star.d:
            raise ValueError("action and parameter dimensions differ")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be non-negative")
        means = self.mean_rewards
        best = int(np.argmax(means))
        object.__setattr__(self, "optimal_action_index", best)
        object.__setattr__(self, "optimal_value", float(means[best]))

    @property
    def mean_rewards(self) -> np.ndarray:
        return self.actions.features @ self.theta_star.theta

    @property
    def d(self) -> int:
        return self.actions.d

    @property
    def K(self) -> int:
        return self.actions.K

    def to_dict(self) -> dict:
        labels = self.actions.labels or (PLAIN,) * self.K
        return {
            "d": self.d,
            "s": self.theta_star.sparsity,
            "noise_variance": self.noise_variance,
            "theta_star": self.theta_star.theta.tolist(),
            "actions": self.actions.features.tolist(),
            "labels": list(labels),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BanditInstance":
        expected = {"d", "s", "noise_variance", "theta_star", "actions", "labels", "seed"}
        missing = expected - set(doc)
        if missing:
            raise ValueError(f"instance document lacks fields {sorted(missing)}")
        actions = ActionSet(np.asarray(doc["actions"], dtype=np.float64), tuple(doc["labels"]))
        if actions.d != doc["d"]:
            raise ValueError("field d disagrees with the action matrix")
        theta = SparseParameter(np.asarray(doc["theta_star"], dtype=np.float64), int(doc["s"]))
        return cls(actions, theta, float(doc["noise_variance"]), doc["seed"])

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "BanditInstance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class HistoryRecord:
    action_index: int
    action: np.ndarray
    reward: float


class History:
    """Append-only record of (action, reward) pairs with array views."""

    def __init__(self, d: int, capacity: int = 64):
        self.d = d
        self._X = np.zeros((max(capacity, 1), d))
        self._y = np.zeros(max(capacity, 1))
        self._idx = []
        self._n = 0

    def __len__(self):
        return self._n

    def append(self, record: HistoryRecord) -> None:
        if self._n == self._X.shape[0]:
            self._X = np.vstack([self._X, np.zeros_like(self._X)])
            self._y = np.concatenate([self._y, np.zeros_like(self._y)])
        self._X[self._n] = record.action
        self._y[self._n] = record.reward
        self._idx.append(int(record.action_index))
        self._n += 1

    @property
    def X(self) -> np.ndarray:
        return self._X[: self._n]

    @property
    def y(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def action_indices(self) -> list:
        return list(self._idx)

    def __getitem__(self, i) -> HistoryRecord:
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        return HistoryRecord(self._idx[i], self._X[i].copy(), float(self._y[i]))


def step(instance: BanditInstance, action_index: int, rng: np.random.Generator) -> float:
    """Play one action; returns the mean reward plus Gaussian noise.

    Exactly one standard normal is drawn from ``rng`` per call, whatever
    the noise level, so that reward streams stay aligned across policies.
    """
    if not 0 <= action_index < instance.K:
        raise ValueError(f"action index {action_index} outside [0, {instance.K})")
    mean = float(instance.actions.features[action_index] @ instance.theta_star.theta)
    return mean + math.sqrt(instance.noise_variance) * float(rng.standard_normal())


def sample_prior_parameter(d: int, s: int, rng: np.random.Generator) -> SparseParameter:
    """Standard normal vector restricted to ``s`` random coordinates, normalized."""
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    while True:
        theta = rng.standard_normal(d)
        keep = rng.choice(d, size=s, replace=False)
        mask = np.zeros(d, dtype=bool)
        mask[keep] = True
        theta[~mask] = 0.0
        norm = np.linalg.norm(theta)
        if norm > 0:
            return SparseParameter(theta / norm, s)


def restricted_eigenvalue_check(H, threshold: float = 0.25):
    """Certify a restricted-eigenvalue lower bound through the smallest eigenvalue.

    The cone-restricted Rayleigh quotient is never below the unrestricted
    one, so ``lambda_min(H) >= threshold`` certifies the restricted
    condition for every sparsity level and cone constant.

    Returns
    -------
    (passed, value) : (bool, float)
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-9:
        raise ValueError("H must be symmetric")
    value = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
    return value >= threshold, value


def informative_set_size(d: int, s: int, c1: float = 8.0) -> int:
    return int(math.ceil(c1 * s * math.log(math.e * d / s)))


def uninformative_set_size(d: int, s: int) -> int:
    return math.comb(d - 1, s - 1) * 2 ** (s - 1)


def _uninformative_actions(d, s, cap, rng):
    total = uninformative_set_size(d, s)
    if total <= cap:
        rows = []
        for support in itertools.combinations(range(d - 1), s - 1):
            for signs in itertools.product((1.0, -1.0), repeat=s - 1):
                row = np.zeros(d)
                row[list(support)] = signs
                rows.append(row)
        return np.array(rows)

    # Too many to enumerate: the optimal member first, then distinct random ones.
    best = np.zeros(d)
    best[: s - 1] = 1.0
    seen = {best.tobytes()}
    rows = [best]
    while len(rows) < cap:
        row = np.zeros(d)
        support = rng.choice(d - 1, size=s - 1, replace=False)
        row[support] = rng.choice((-1.0, 1.0), size=s - 1)
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(row)
    return np.array(rows)


def build_hard_instance(
    d: int,
    s: int,
    epsilon: float,
    rng: np.random.Generator,
    *,
    c1: float = 8.0,
    max_retries: int = 50,
    enumeration_cap: int = 10_000,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    seed: Optional[int] = None,
) -> BanditInstance:
    """Informative/uninformative instance where information costs regret.

    The informative block holds ``ceil(c1 * s * log(e d / s))`` random sign
    vectors whose last coordinate is -1, redrawn until their second-moment
    matrix has smallest eigenvalue at least 1/4. The uninformative block
    holds every {-1, 0, 1} vector with s-1 nonzeros among the first d-1
    coordinates and a zero last coordinate. The parameter puts ``epsilon``
    on the first s-1 coordinates and +1 on the last, so informative actions
    lose at least 1 per pull while the uninformative ``(1, .., 1, 0, .., 0)``
    is optimal.
    """
    if d < 3 or not 2 <= s <= d - 1:
        raise ValueError(f"need d >= 3 and 2 <= s <= d - 1, got d={d}, s={s}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    k = informative_set_size(d, s, c1)
    best_value = -math.inf
    for _ in range(max_retries):
        informative = np.empty((k, d))
        informative[:, : d - 1] = rng.choice((-1.0, 1.0), size=(k, d - 1))
        informative[:, d - 1] = -1.0
        passed, value = restricted_eigenvalue_check(informative.T @ informative / k, 0.25)
        best_value = max(best_value, value)
        if passed:
            break
    else:
        raise ConstructionError(
            f"no informative set of size {k} passed the eigenvalue check in "
            f"{max_retries} draws; best smallest eigenvalue {best_value:.4f}"
        )

    uninformative = _uninformative_actions(d, s, enumeration_cap, rng)
    theta = np.zeros(d)
    theta[: s - 1] = epsilon
    theta[d - 1] = 1.0

    features = np.vstack([informative, uninformative])
    labels = (INFORMATIVE,) * len(informative) + (UNINFORMATIVE,) * len(uninformative)
    instance = BanditInstance(
        ActionSet(features, labels), SparseParameter(theta, s), noise_variance, seed
    )
    if instance.actions.labels[instance.optimal_action_index] != UNINFORMATIVE:
        raise ConstructionError("optimal action is not uninformative")
    return instance


def correlated_gaussian(K: int, d: int, corr_base: float, rng: np.random.Generator) -> np.ndarray:
    """K draws from N(0, Sigma) with Sigma_ij = corr_base ** |i - j| (unclipped)."""
    if K < 1 or d < 1:
        raise ValueError("K and d must be positive")
    if not 0 <= corr_base < 1:
        raise ValueError("corr_base must lie in [0, 1)")
    lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    cov = np.power(corr_base, lags, dtype=np.float64)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    return rng.standard_normal((K, d)) @ chol.T


def build_gaussian_action_set(
    K: int, d: int, corr_base: float, rng: np.random.Generator
) -> ActionSet:
    if K < 2:
        raise ValueError("need K >= 2")
    draws = correlated_gaussian(K, d, corr_base, rng)
    return ActionSet(np.clip(draws, -1.0, 1.0))


def build_gaussian_instance(
    K: int,
    d: int,
    s: int,
    rng: np.random.Generator,
    *,
    corr_base: float = 0.6,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    seed: Optional[int] = None,
) -> BanditInstance:
    actions = build_gaussian_action_set(K, d, corr_base, rng)
    return BanditInstance(actions, sample_prior_parameter(d, s, rng), noise_variance, seed)

