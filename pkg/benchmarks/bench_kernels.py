"""Time the compiled Langevin chain against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--iterations 2000] [--repeats 5]

Both backends consume identical inputs; the script also reports the
largest absolute difference between their sample matrices.
"""
import argparse
import timeit

import numpy as np

from sparse_ids import _kernels
from sparse_ids.sampler import Dataset, SpikeSlabPrior, default_schedule


def make_inputs(d, n, iterations, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    theta = np.zeros(d)
    theta[:2] = (1.0, -0.5)
    y = X @ theta + rng.standard_normal(n)
    data = Dataset(X, y)
    prior = SpikeSlabPrior.for_problem(d, 2, 2.0)
    thinning = 10
    burn_in = iterations - thinning * (iterations // (2 * thinning))
    schedule = default_schedule(data, prior, num_samples=(iterations - burn_in) // thinning,
                                thinning=thinning, burn_in=burn_in)
    etas, omegas = schedule.rates(0, schedule.num_iterations)
    xtx, xty, yty = data.sufficient_statistics()
    return dict(
        theta0=0.3 * rng.standard_normal(d),
        xtx=np.ascontiguousarray(xtx), xty=xty, yty=yty, prior=prior,
        etas=etas, omegas=omegas,
        noise=rng.standard_normal((schedule.num_iterations, d)),
        burn_in=schedule.burn_in, thinning=schedule.thinning, M=schedule.num_samples,
    )


def call(kernel, inp):
    d = inp["theta0"].shape[0]
    theta = inp["theta0"].copy()
    nu = np.full(d, 0.5)
    samples = np.zeros((inp["M"], d))
    p = inp["prior"]
    kernel(theta, nu, inp["xtx"], inp["xty"], inp["yty"], p.sigma2, p.lambda0, p.lambda1, p.beta,
           inp["etas"], inp["omegas"], inp["noise"], inp["burn_in"], inp["thinning"],
           samples, np.zeros((0, 3)), 1e3)
    return samples


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--dims", type=int, nargs="+", default=[10, 20, 100])
    args = parser.parse_args()

    if _kernels._compiled is None:
        print("compiled extension not available; only the fallback can be timed")
    print(f"{'d':>5} {'fallback ms':>12} {'compiled ms':>12} {'speedup':>8} {'max |diff|':>11}")
    for d in args.dims:
        inp = make_inputs(d, 100, args.iterations)
        slow = min(timeit.repeat(lambda: call(_kernels._fallback.run_chain, inp),
                                 number=1, repeat=args.repeats))
        if _kernels._compiled is None:
            print(f"{d:>5} {1e3 * slow:>12.2f} {'-':>12} {'-':>8} {'-':>11}")
            continue
        fast = min(timeit.repeat(lambda: call(_kernels._compiled.run_chain, inp),
                                 number=1, repeat=args.repeats))
        diff = np.max(np.abs(call(_kernels._fallback.run_chain, inp) - call(_kernels._compiled.run_chain, inp)))
        print(f"{d:>5} {1e3 * slow:>12.2f} {1e3 * fast:>12.2f} {slow / fast:>8.1f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
