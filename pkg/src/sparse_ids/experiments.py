"""Seeded experiment runner: hard instance, Gaussian action sets, offline regression."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _kernels
from .analysis import (
    RegretTrace,
    aggregate,
    bound_curves,
    c_min_estimate,
    informative_pull_histogram,
    write_aggregate_csv,
    write_bound_csv,
)
from .env import (
    DEFAULT_NOISE_VARIANCE,
    INFORMATIVE,
    UNINFORMATIVE,
    BanditInstance,
    History,
    HistoryRecord,
    build_gaussian_instance,
    build_hard_instance,
    correlated_gaussian,
    step,
)
from .errors import SamplerDivergenceError
from .policies import UCB_ALPHA_GRID, PolicyConfig, lasso_proximal_gradient, make_policy
from .sampler import (
    Dataset,
    SpikeSlabPrior,
    default_schedule,
    run_sampler,
    write_diagnostics_csv,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("offline_regression", "hard_instance", "gaussian_actions")
OFFLINE_THETA_HEAD = (3.0, 2.0)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 10
    s: int = 2
    K: int = 200
    n: int = 500
    n_trials: int = 50
    policies: list = field(default_factory=list)
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    M: int = 1000
    epsilon: float = 0.2
    base_seed: int = 0
    output_dir: str = "results"
    corr_base: float = 0.6
    thinning: int = 10
    burn_in: int = 500
    step_scale: float = 0.1
    warm_start: bool = False
    c1: float = 8.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("d", "s", "K", "n", "n_trials", "M", "thinning"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.s > self.d:
            raise ConfigError("s must not exceed d")
        if not self.noise_variance > 0:
            raise ConfigError("noise_variance must be positive")
        if self.experiment == "hard_instance" and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.experiment != "offline_regression" and not self.policies:
            raise ConfigError("at least one policy is required")
        try:
            self.policies = [_coerce_policy(p) for p in self.policies]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad policy entry: {exc}") from exc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if "config" in doc and "trial_seeds" in doc:  # a manifest from an earlier run
            doc = doc["config"]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        if "experiment" not in doc:
            raise ConfigError("configuration must name an experiment")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"badly typed configuration value: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["policies"] = [_policy_to_dict(p) for p in self.policies]
        return doc

    def expanded_policies(self) -> list:
        """Policy configs with experiment-wide sampler settings filled in.

        A LinUCB entry without an explicit ``ucb_alpha`` expands into the
        whole candidate grid.
        """
        out = []
        for p in self.policies:
            base = dataclasses.replace(
                p,
                num_posterior_samples=p.num_posterior_samples or self.M,
                thinning=self.thinning,
                burn_in=self.burn_in,
                step_scale=self.step_scale,
                warm_start=self.warm_start or p.warm_start,
            )
            if p.kind == "lin_ucb" and p.ucb_alpha is None:
                out.extend(dataclasses.replace(base, ucb_alpha=a) for a in UCB_ALPHA_GRID)
            else:
                out.append(base)
        labels = [p.label for p in out]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate policy labels: {labels}")
        return out


_POLICY_KEYS = {"kind", "num_posterior_samples", "ucb_alpha", "estc_explore_rounds",
                "estc_lasso_penalty", "ridge", "warm_start", "name"}


def _coerce_policy(entry) -> PolicyConfig:
    if isinstance(entry, PolicyConfig):
        return entry
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, dict):
        raise TypeError(f"policy must be a string or object, got {type(entry).__name__}")
    entry = dict(entry)
    prior = entry.pop("prior", None)
    unknown = set(entry) - _POLICY_KEYS
    if unknown:
        raise ValueError(f"unknown policy keys {sorted(unknown)}")
    return PolicyConfig(**entry, prior=SpikeSlabPrior(**prior) if prior else None)


def _policy_to_dict(p: PolicyConfig) -> dict:
    defaults = PolicyConfig(kind=p.kind)
    doc = {"kind": p.kind}
    for name in sorted(_POLICY_KEYS - {"kind"}):
        if getattr(p, name) != getattr(defaults, name):
            doc[name] = getattr(p, name)
    if p.prior is not None:
        doc["prior"] = dataclasses.asdict(p.prior)
    return doc


def trial_seed_sequence(base_seed: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(trial_index)])


def trial_seed(base_seed: int, trial_index: int) -> int:
    return int(trial_seed_sequence(base_seed, trial_index).generate_state(1, np.uint64)[0] >> np.uint64(1))


def trial_streams(config: ExperimentConfig, trial_index: int):
    """Independent (instance, reward noise, policy) generators for one trial."""
    children = trial_seed_sequence(config.base_seed, trial_index).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def trial_instance(config: ExperimentConfig, trial_index: int) -> BanditInstance:
    instance_rng, _, _ = trial_streams(config, trial_index)
    seed = trial_seed(config.base_seed, trial_index)
    if config.experiment == "hard_instance":
        return build_hard_instance(
            config.d, config.s, config.epsilon, instance_rng,
            c1=config.c1, noise_variance=config.noise_variance, seed=seed,
        )
    if config.experiment == "gaussian_actions":
        return build_gaussian_instance(
            config.K, config.d, config.s, instance_rng,
            corr_base=config.corr_base, noise_variance=config.noise_variance, seed=seed,
        )
    raise ConfigError(f"experiment {config.experiment!r} has no bandit instance")


def run_trial(config: ExperimentConfig, trial_index: int, policy: PolicyConfig) -> RegretTrace:
    """One n-round episode; the trace also carries the played action indices."""
    instance = trial_instance(config, trial_index)
    _, noise_rng, policy_rng = trial_streams(config, trial_index)
    agent = make_policy(policy)
    agent.reset(instance.actions, config.n, instance.noise_variance, config.s, policy_rng)

    history = History(instance.d, capacity=config.n)
    means = instance.mean_rewards
    best = means[instance.optimal_action_index]
    instant = np.empty(config.n)
    for t in range(config.n):
        try:
            a = agent.select(history)
        except SamplerDivergenceError as exc:
            raise SamplerDivergenceError(
                f"trial {trial_index}, policy {policy.label}, round {t + 1}: {exc}", exc.iteration
            ) from exc
        reward = step(instance, a, noise_rng)
        record = HistoryRecord(a, instance.actions.features[a], reward)
        history.append(record)
        agent.update(record)
        instant[t] = best - means[a]

    trace = RegretTrace(policy.label, instance.seed, instant)
    trace.action_log = history.action_indices
    return trace


def _run_task(args):
    config, trial_index, policy = args
    return run_trial(config, trial_index, policy)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: dict
    histograms: Optional[dict]
    files: dict
    best_ucb_alpha: Optional[float] = None

    def final_regrets(self, policy: str) -> np.ndarray:
        return np.array([t.cumulative[-1] for t in self.traces[policy]])

    def regret_at(self, policy: str, t: int) -> np.ndarray:
        return np.array([tr.cumulative[t - 1] for tr in self.traces[policy]])

    def informative_pulls(self, policy: str) -> np.ndarray:
        return np.array([h[INFORMATIVE] for h in self.histograms[policy]])


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(config: ExperimentConfig, threads: int = 1, output_dir=None) -> ExperimentResult:
    """Run every (trial, policy) pair and write aggregate CSVs plus a manifest.

    Seeds depend only on ``(base_seed, trial_index)``, so the worker count
    does not affect any output.
    """
    if config.experiment == "offline_regression":
        raise ConfigError("use run_offline_check for the offline regression experiment")
    out = Path(output_dir or config.output_dir)
    _check_writable(out)

    policies = config.expanded_policies()
    tasks = [(config, i, p) for p in policies for i in range(config.n_trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]

    traces = {p.label: [] for p in policies}
    for (_, _, p), trace in zip(tasks, results):
        traces[p.label].append(trace)

    best_alpha = None
    ucb = [p for p in policies if p.kind == "lin_ucb"]
    if len(ucb) > 1:
        finals = {p.label: np.mean([t.cumulative[-1] for t in traces[p.label]]) for p in ucb}
        best = min(ucb, key=lambda p: (finals[p.label], p.ucb_alpha))
        best_alpha = best.ucb_alpha
        traces["lin_ucb"] = traces[best.label]

    files = {}
    rows = []
    for name, group in traces.items():
        mean, se = aggregate(group)
        rows.extend((t + 1, name, mean[t], se[t], len(group)) for t in range(config.n))
    files["regret"] = out / "regret.csv"
    write_aggregate_csv(files["regret"], rows)

    files["final"] = out / "final_regret.csv"
    with open(files["final"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "policy", "trial_seed", "final_cum_regret"])
        for name, group in traces.items():
            for i, tr in enumerate(group):
                writer.writerow([i, name, tr.trial_seed, repr(float(tr.cumulative[-1]))])

    histograms = None
    if config.experiment == "hard_instance":
        instances = [trial_instance(config, i) for i in range(config.n_trials)]
        histograms = {
            name: [informative_pull_histogram(tr.action_log, instances[i]) for i, tr in enumerate(group)]
            for name, group in traces.items()
        }
        files["histogram"] = out / "histogram.csv"
        with open(files["histogram"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "policy", "informative_pulls", "uninformative_pulls"])
            for name, group in histograms.items():
                for i, h in enumerate(group):
                    writer.writerow([i, name, h[INFORMATIVE], h[UNINFORMATIVE]])

    reference = trial_instance(config, 0)
    c_min = c_min_estimate(reference.actions, iterations=200)
    curves = bound_curves(config.n, config.d, config.s, reference.K, c_min) if c_min > 0 else [
        (t, arb, arb) for t, arb, _ in bound_curves(config.n, config.d, config.s, reference.K, 1.0)
    ]
    files["bounds"] = out / "bounds.csv"
    write_bound_csv(files["bounds"], curves)

    manifest = {
        "config": config.to_dict(),
        "trial_seeds": [trial_seed(config.base_seed, i) for i in range(config.n_trials)],
        "seed_derivation": "numpy SeedSequence([base_seed, trial_index]).spawn(3) -> instance, noise, policy",
        "policies": [p.label for p in policies],
        "best_lin_ucb_alpha": best_alpha,
        "c_min_reference": c_min,
        "horizon_note": "horizon n and trial count are desk-scale choices",
        "kernel_backend": _kernels.BACKEND,
        "version": __version__,
    }
    files["manifest"] = out / "manifest.json"
    _write_json(files["manifest"], manifest)
    return ExperimentResult(config, traces, histograms, files, best_alpha)


def offline_problem(config: ExperimentConfig):
    """Correlated Gaussian design with theta* = (3, 2, 0, ..., 0) and its responses."""
    rng = np.random.default_rng(trial_seed_sequence(config.base_seed, 0))
    X = correlated_gaussian(config.n, config.d, config.corr_base, rng)
    theta = np.zeros(config.d)
    head = min(len(OFFLINE_THETA_HEAD), config.d)
    theta[:head] = OFFLINE_THETA_HEAD[:head]
    y = X @ theta + np.sqrt(config.noise_variance) * rng.standard_normal(config.n)
    return Dataset(X, y), theta, rng


def run_offline_check(config: ExperimentConfig, output_dir=None) -> dict:
    """Sample the sparse posterior on a fixed regression problem and summarize it."""
    if config.experiment != "offline_regression":
        raise ConfigError("run_offline_check needs experiment = offline_regression")
    out = Path(output_dir or config.output_dir)
    _check_writable(out)

    data, theta_star, rng = offline_problem(config)
    prior = SpikeSlabPrior.for_problem(config.d, config.s, config.noise_variance)
    schedule = default_schedule(
        data, prior, num_samples=config.M, thinning=config.thinning,
        burn_in=config.burn_in, step_scale=config.step_scale,
    )
    try:
        run = run_sampler(data, prior, schedule, rng, record_diagnostics=True)
    except SamplerDivergenceError as exc:
        with open(out / "offline_error.txt", "w", encoding="utf-8") as fh:
            fh.write(f"{exc}\niteration: {exc.iteration}\nprior: {prior}\nschedule eta: {schedule.eta!r}\n")
        raise

    files = {}
    files["diagnostics"] = out / "sampler_diagnostics.csv"
    write_diagnostics_csv(files["diagnostics"], run.diagnostics)

    for j in range(config.d):
        path = out / f"samples_theta_{j + 1}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"theta_{j + 1}"])
            writer.writerows([repr(float(v))] for v in run.samples[:, j])
        files[f"samples_{j + 1}"] = path

    penalty = 2.0 * np.sqrt(config.noise_variance * np.log(config.d) / config.n)
    lasso = lasso_proximal_gradient(data.X, data.y, penalty).theta
    mean = run.samples.mean(axis=0)
    std = run.samples.std(axis=0, ddof=1) if config.M > 1 else np.zeros(config.d)
    files["summary"] = out / "offline_summary.csv"
    with open(files["summary"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "true_value", "posterior_mean", "posterior_std", "nu_bar", "lasso"])
        for j in range(config.d):
            writer.writerow([j + 1, repr(float(theta_star[j])), repr(float(mean[j])), repr(float(std[j])),
                             repr(float(run.state.nu[j])), repr(float(lasso[j]))])

    files["manifest"] = out / "manifest.json"
    _write_json(files["manifest"], {
        "config": config.to_dict(),
        "trial_seeds": [trial_seed(config.base_seed, 0)],
        "prior": dataclasses.asdict(prior),
        "learning_rate": schedule.eta,
        "kernel_backend": _kernels.BACKEND,
        "version": __version__,
    })
    log.info("offline check written to %s", out)
    return files


def default_worker_count() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
