"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The two bandit-ordering experiments take several minutes each at the
stated scale (50 trials, n = 500, M = 1000 posterior samples per round).
"""
import csv
import itertools
import math

import numpy as np
import pytest
from scipy import stats
from sklearn.linear_model import Lasso

from oracles import brute_force_c_min, naive_delta_v
from sparse_ids.analysis import BoundInputs, c_min_estimate, delta_branch, delta_cap, exploratory_branch, regret_bound
from sparse_ids.env import ActionSet, build_hard_instance
from sparse_ids.errors import ConstructionError
from sparse_ids.experiments import (
    ExperimentConfig,
    offline_problem,
    run_experiment,
    run_offline_check,
    run_trial,
)
from sparse_ids.policies import estimate_delta_v
from sparse_ids.sampler import (
    Dataset,
    SpikeSlabPrior,
    default_schedule,
    neg_log_posterior,
    neg_log_posterior_grad,
    sample_posterior,
)

ALPHA = 0.05


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def test_criterion_01_conjugate_oracle(criterion_report):
    rng = np.random.default_rng(2024)
    n, d = 50, 5
    X = rng.uniform(-1, 1, (n, d))
    y = X @ np.array([1.0, -0.5, 0.0, 0.0, 0.3]) + math.sqrt(2.0) * rng.standard_normal(n)
    data = Dataset(X, y)
    prior = SpikeSlabPrior(lambda0=0.05, lambda1=1.0, beta=1.0, sigma2=2.0)
    schedule = default_schedule(data, prior, num_samples=5000, thinning=10, burn_in=500)
    samples = sample_posterior(data, prior, schedule, np.random.default_rng(7))

    precision = X.T @ X / prior.sigma2 + np.eye(d) / (prior.sigma2 * prior.lambda1)
    cov = np.linalg.inv(precision)
    mean = cov @ X.T @ y / prior.sigma2
    mean_err = np.max(np.abs(samples.mean(axis=0) - mean))
    cov_err = np.max(np.abs(np.cov(samples.T) - cov))
    ok = mean_err < 0.05 and cov_err < 0.05
    criterion_report("1 (conjugate oracle)", ok, f"max mean error {mean_err:.4f}, max covariance error {cov_err:.4f} (tol 0.05)")
    assert ok


def test_criterion_02_gradient_check(criterion_report):
    rng = np.random.default_rng(11)
    worst = 0.0
    h = 1e-5
    for _ in range(100):
        d = int(rng.integers(2, 12))
        data = Dataset(rng.uniform(-1, 1, (30, d)), rng.normal(size=30))
        prior = SpikeSlabPrior(lambda0=rng.uniform(0.05, 1.0), lambda1=rng.uniform(0.5, 5.0),
                               beta=rng.uniform(0.1, 0.9), sigma2=rng.uniform(0.5, 3.0))
        # smooth points: every coordinate at least 0.05 away from the kink at 0
        theta = rng.choice((-1.0, 1.0), d) * rng.uniform(0.05, 2.0, d)
        nu = rng.uniform(0, 1, d)
        grad = neg_log_posterior_grad(theta, nu, data, prior)
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            fd = (neg_log_posterior(theta + e, nu, data, prior) - neg_log_posterior(theta - e, nu, data, prior)) / (2 * h)
            worst = max(worst, abs(grad[j] - fd) / max(abs(grad[j]), abs(fd)))
    ok = worst < 1e-5
    criterion_report("2 (gradient check)", ok, f"max relative error {worst:.2e} over 100 points (tol 1e-5)")
    assert ok


def test_criterion_03_offline_concentration(tmp_path, criterion_report):
    config = ExperimentConfig("offline_regression", d=10, s=3, n=100, noise_variance=2.0, M=1000)
    files = run_offline_check(config, output_dir=tmp_path)
    rows = read_rows(files["summary"])
    mean = np.array([float(r["posterior_mean"]) for r in rows])

    data, _, _ = offline_problem(config)
    penalty = 2.0 * math.sqrt(config.noise_variance * math.log(config.d) / config.n)
    lasso = Lasso(alpha=penalty, fit_intercept=False, tol=1e-10, max_iter=100_000).fit(data.X, data.y).coef_

    ok_head = abs(mean[0] - 3) < 0.5 and abs(mean[1] - 2) < 0.5
    ok_null = bool(np.all(np.abs(mean[2:]) < 0.25))
    lasso_support = set(np.flatnonzero(np.abs(lasso) > 1e-8))
    posterior_support = set(np.flatnonzero(np.abs(mean) >= 0.25))
    ok_lasso = lasso_support == posterior_support and bool(np.all(np.abs(mean[:2] - lasso[:2]) < 0.5))
    ok = ok_head and ok_null and ok_lasso
    criterion_report(
        "3 (offline posterior concentration)", ok,
        f"means ({mean[0]:.3f}, {mean[1]:.3f}), max |null mean| {np.max(np.abs(mean[2:])):.3f}; "
        f"Lasso ({lasso[0]:.3f}, {lasso[1]:.3f}) support {sorted(int(i) + 1 for i in lasso_support)}",
    )
    assert ok


def test_criterion_04_algorithm_oracle(criterion_report):
    rng = np.random.default_rng(4)
    worst = 0.0
    p_equal = True
    for _ in range(1000):
        M, K, d = int(rng.integers(1, 21)), int(rng.integers(2, 11)), int(rng.integers(2, 7))
        samples = rng.normal(size=(M, d))
        features = rng.uniform(-1, 1, (K, d))
        got = estimate_delta_v(samples, ActionSet(features))
        delta, v, p = naive_delta_v(samples, features)
        worst = max(worst, np.max(np.abs(got.delta_hat - delta)), np.max(np.abs(got.v_hat - v)))
        p_equal &= np.array_equal(got.p_star, p)
    ok = worst <= 1e-12 and p_equal
    criterion_report("4 (regret/variance estimates vs naive oracle)", ok, f"max deviation {worst:.2e} over 1000 cases (tol 1e-12)")
    assert ok


@pytest.fixture(scope="module")
def hard_instance_run(tmp_path_factory):
    config = ExperimentConfig("hard_instance", d=10, s=2, n=500, n_trials=50, M=1000,
                              policies=["sparse_ids", "sparse_ts"])
    return run_experiment(config, output_dir=tmp_path_factory.mktemp("hard_instance"))


@pytest.mark.slow
def test_criterion_05a_hard_instance_regret(hard_instance_run, criterion_report):
    ids = hard_instance_run.final_regrets("sparse_ids")
    ts = hard_instance_run.final_regrets("sparse_ts")
    p = stats.ttest_rel(ids, ts, alternative="less").pvalue
    ok = ids.mean() < ts.mean() and p < ALPHA
    criterion_report("5a (hard instance: IDS regret < TS regret)", ok,
                     f"mean final regret IDS {ids.mean():.2f} vs TS {ts.mean():.2f}, one-sided paired p = {p:.3g}")
    assert ok


@pytest.mark.slow
def test_criterion_05b_hard_instance_informative_pulls(hard_instance_run, criterion_report):
    ids = hard_instance_run.informative_pulls("sparse_ids")
    ts = hard_instance_run.informative_pulls("sparse_ts")
    if np.array_equal(ids, ts):
        p = 1.0
    else:
        p = stats.ttest_rel(ids, ts, alternative="greater").pvalue
    ok = ids.mean() > ts.mean() and p < ALPHA
    criterion_report("5b (hard instance: IDS informative pulls > TS)", ok,
                     f"mean informative pulls IDS {ids.mean():.2f} vs TS {ts.mean():.2f}, one-sided paired p = {p:.3g}")
    assert ok


@pytest.fixture(scope="module")
def gaussian_run(tmp_path_factory):
    config = ExperimentConfig("gaussian_actions", d=20, s=2, K=200, n=500, n_trials=50, M=1000,
                              policies=["sparse_ids", "lin_ts", "lin_ucb", "estc"])
    return run_experiment(config, output_dir=tmp_path_factory.mktemp("gaussian_actions"))


@pytest.mark.slow
@pytest.mark.parametrize("baseline", ["lin_ucb", "lin_ts"])
def test_criterion_06a_sparse_ids_beats_baselines(gaussian_run, baseline, criterion_report):
    ids = gaussian_run.final_regrets("sparse_ids")
    other = gaussian_run.final_regrets(baseline)
    p = stats.ttest_rel(ids, other, alternative="less").pvalue
    ok = ids.mean() < other.mean() and p < ALPHA
    extra = f" (best alpha {gaussian_run.best_ucb_alpha:g})" if baseline == "lin_ucb" else ""
    criterion_report(f"6a (Gaussian actions: IDS < {baseline})", ok,
                     f"mean final regret IDS {ids.mean():.2f} vs {baseline}{extra} {other.mean():.2f}, "
                     f"one-sided paired p = {p:.3g}")
    assert ok


@pytest.mark.slow
def test_criterion_06b_estc_early_vs_late(gaussian_run, criterion_report):
    n = gaussian_run.config.n
    early_t = int(math.floor(n ** (2 / 3) + 1e-9))
    estc_early = gaussian_run.regret_at("estc", early_t)
    ucb_early = gaussian_run.regret_at("lin_ucb", early_t)
    estc_late = gaussian_run.final_regrets("estc")
    ucb_late = gaussian_run.final_regrets("lin_ucb")
    p_early = stats.ttest_rel(estc_early, ucb_early, alternative="less").pvalue
    p_late = stats.ttest_rel(estc_late, ucb_late, alternative="greater").pvalue
    ok = estc_early.mean() < ucb_early.mean() and estc_late.mean() > ucb_late.mean()
    criterion_report(
        "6b (Gaussian actions: ESTC beats LinUCB early, loses at n)", ok,
        f"t={early_t}: ESTC {estc_early.mean():.2f} vs LinUCB {ucb_early.mean():.2f} (p = {p_early:.3g}); "
        f"t={n}: ESTC {estc_late.mean():.2f} vs LinUCB {ucb_late.mean():.2f} (p = {p_late:.3g})",
    )
    assert ok


def test_criterion_07_informative_set_construction(criterion_report):
    rates = {}
    for d in (8, 16):
        passed = 0
        for seed in range(100):
            try:
                build_hard_instance(d, 2, 0.2, np.random.default_rng(seed), max_retries=50)
                passed += 1
            except ConstructionError:
                pass
        rates[d] = passed / 100
    ok = all(r >= 0.95 for r in rates.values())
    criterion_report("7 (informative-set construction)", ok,
                     ", ".join(f"d={d}: {r:.0%} of seeds" for d, r in rates.items()) + " (need >= 95%)")
    assert ok


# 20 grid points: a spread of horizons, dimensions, sparsities, action counts and C_min
BOUND_GRID = [
    BoundInputs(n, d, s, K, c)
    for n, d, s, K, c in [
        (100, 20, 2, 200, 0.1), (500, 20, 2, 200, 0.5), (10_000, 20, 2, 200, 1.0), (10**6, 20, 2, 200, 1.0),
        (500, 40, 4, 200, 0.5), (500, 100, 10, 200, 0.2), (10**5, 100, 10, 200, 2.0), (50, 10, 1, 10**4, 1.0),
        (500, 10, 2, 10**6, 1.0), (10**4, 50, 5, 10**5, 0.05), (200, 200, 3, 5000, 1.0), (10**7, 200, 3, 5000, 1.0),
        (1000, 30, 3, 30 * 21, 0.3), (1000, 8, 2, 60, 1.0), (25, 5, 1, 14, 1.0), (10**5, 1000, 20, 10**9, 1.0),
        (400, 16, 4, 16 * 55, 4.0), (10**6, 16, 4, 10**4, 0.01), (3000, 64, 2, 500, 1.0), (3000, 64, 2, 10**12, 10.0),
    ]
]


def test_criterion_08a_exploratory_branch_structure(criterion_report):
    mismatches = 0
    for inp in BOUND_GRID:
        delta = min(math.log(inp.K), 2 * inp.s * math.log(inp.metric_constant * inp.d * math.sqrt(inp.n) / inp.s))
        sqrt_term = math.sqrt(inp.n * inp.d * delta / 2)
        poor_term = inp.s ** (2 / 3) * inp.n ** (2 / 3) * delta ** (1 / 3) / (2 * inp.c_min) ** (1 / 3)
        expect = "n_two_thirds" if poor_term < sqrt_term else "sqrt"
        mismatches += exploratory_branch(inp) != expect
        mismatches += not math.isclose(delta_cap(inp), delta, rel_tol=1e-12)
        mismatches += not math.isclose(regret_bound(inp, "exploratory"), min(sqrt_term, poor_term), rel_tol=1e-12)
        mismatches += not math.isclose(regret_bound(inp, "arbitrary"), sqrt_term, rel_tol=1e-12)
    selected = sum(exploratory_branch(inp) == "n_two_thirds" for inp in BOUND_GRID)
    ok = mismatches == 0 and 0 < selected < len(BOUND_GRID)
    criterion_report("8a (bound calculators vs direct inequality)", ok,
                     f"{mismatches} mismatches on {len(BOUND_GRID)} grid points; n^(2/3) branch selected at {selected}")
    assert ok


def test_criterion_08b_sparse_delta_branch_for_large_k(criterion_report):
    # literal claim: K >= d e^s implies the 2 s log(C d sqrt(n) / s) branch of Delta is active
    covered = [inp for inp in BOUND_GRID if inp.K >= inp.d * math.exp(inp.s)]
    sparse = [inp for inp in covered if delta_branch(inp) == "sparse"]
    ok = len(covered) > 0 and len(sparse) == len(covered)
    criterion_report("8b (K >= d e^s => sparse branch of Delta)", ok,
                     f"sparse branch active at {len(sparse)} of {len(covered)} grid points with K >= d e^s (C = 1)")
    assert ok


def test_criterion_09_c_min_sanity(criterion_report):
    cube = np.array(list(itertools.product((-1.0, 1.0), repeat=4)))
    cube_value = c_min_estimate(ActionSet(cube))
    pair = np.eye(2)
    pair_value = c_min_estimate(ActionSet(pair))
    grid_value = brute_force_c_min(pair)
    ok = cube_value >= 1 - 1e-6 and abs(pair_value - 0.5) <= 1e-3 and abs(pair_value - grid_value) <= 1e-3
    criterion_report("9 (C_min sanity)", ok,
                     f"hypercube d=4: {cube_value:.8f}; orthonormal pair: {pair_value:.6f} vs grid {grid_value:.6f}")
    assert ok


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.suffix in (".csv", ".json")}


def test_criterion_10_determinism(tmp_path, hard_instance_run, gaussian_run, criterion_report):
    failures = []
    configs = [
        ExperimentConfig("hard_instance", d=8, s=2, n=40, n_trials=3, M=100, burn_in=100,
                         policies=["sparse_ids", "sparse_ts", "uniform"]),
        ExperimentConfig("gaussian_actions", d=10, s=2, K=50, n=40, n_trials=3, M=100, burn_in=100,
                         policies=["sparse_ids", "vanilla_ids", "lin_ts", "lin_ucb", "estc"]),
    ]
    for i, config in enumerate(configs):
        first = run_experiment(config, output_dir=tmp_path / f"run{i}")
        manifest = ExperimentConfig.load(first.files["manifest"])
        run_experiment(manifest, threads=2, output_dir=tmp_path / f"rerun{i}")
        a, b = _outputs(tmp_path / f"run{i}"), _outputs(tmp_path / f"rerun{i}")
        failures += [f"{config.experiment}/{name}" for name in a if a[name] != b.get(name)]

    offline = ExperimentConfig("offline_regression", d=10, s=3, n=100, M=300)
    run_offline_check(offline, output_dir=tmp_path / "off")
    run_offline_check(ExperimentConfig.load(tmp_path / "off" / "manifest.json"), output_dir=tmp_path / "off2")
    a, b = _outputs(tmp_path / "off"), _outputs(tmp_path / "off2")
    failures += [f"offline/{name}" for name in a if a[name] != b.get(name)]

    # spot-check the full-scale runs: replay trial 0 of every policy from the manifest
    for result in (hard_instance_run, gaussian_run):
        manifest = ExperimentConfig.load(result.files["manifest"])
        for policy in manifest.expanded_policies():
            replay = run_trial(manifest, 0, policy)
            if replay.instant.tobytes() != result.traces[policy.label][0].instant.tobytes():
                failures.append(f"{manifest.experiment}/{policy.label}/trial0")

    ok = not failures
    criterion_report("10 (determinism)", ok,
                     "all reruns byte-identical" if ok else f"differences in {failures}")
    assert ok
