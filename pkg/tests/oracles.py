"""Independent, loop-based reference implementations used as test oracles."""
import numpy as np


def naive_delta_v(samples, features):
    """Direct evaluation of the grouped-sample regret and variance estimates.

    Pure Python loops over samples and actions; no vectorized reductions
    shared with the library code.
    """
    samples = [list(map(float, row)) for row in samples]
    features = [list(map(float, row)) for row in features]
    M, K, d = len(samples), len(features), len(features[0])

    def dot(u, v):
        total = 0.0
        for a, b in zip(u, v):
            total += a * b
        return total

    groups = [[] for _ in range(K)]
    for theta in samples:
        best, best_val = 0, dot(features[0], theta)
        for k in range(1, K):
            val = dot(features[k], theta)
            if val > best_val:
                best, best_val = k, val
        groups[best].append(theta)

    mu = [sum(th[j] for th in samples) / M for j in range(d)]
    p = [len(g) / M for g in groups]
    cond = []
    for g in groups:
        cond.append([sum(th[j] for th in g) / len(g) for j in range(d)] if g else list(mu))

    v = []
    for a in features:
        total = 0.0
        for k in range(K):
            if p[k] > 0:
                diff = dot(a, cond[k]) - dot(a, mu)
                total += p[k] * diff * diff
        v.append(total)

    optimal = sum(p[k] * dot(features[k], cond[k]) for k in range(K) if p[k] > 0)
    delta = [max(optimal - dot(a, mu), 0.0) for a in features]
    return np.array(delta), np.array(v), np.array(p)


def brute_force_c_min(features, grid=2001):
    """Best smallest eigenvalue over a grid of mixtures of two or three actions."""
    phi = np.asarray(features, dtype=float)
    K = phi.shape[0]
    best = -np.inf
    ws = np.linspace(0.0, 1.0, grid)
    if K == 2:
        for w in ws:
            mu = np.array([w, 1 - w])
            best = max(best, np.linalg.eigvalsh(phi.T @ (mu[:, None] * phi))[0])
    elif K == 3:
        coarse = ws[:: max(1, grid // 200)]
        for w1 in coarse:
            for w2 in coarse[coarse <= 1 - w1 + 1e-15]:
                mu = np.array([w1, w2, max(0.0, 1 - w1 - w2)])
                best = max(best, np.linalg.eigvalsh(phi.T @ (mu[:, None] * phi))[0])
    else:
        raise ValueError("only K <= 3 is supported")
    return float(best)
