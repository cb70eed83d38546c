"""Reference implementations written independently of the package code."""

from __future__ import annotations

import math

import numpy as np


def dense_hits(n_users: int, n_repos: int, edges) -> tuple[np.ndarray, np.ndarray]:
    """Limit of HITS from all-ones start, via an eigendecomposition of A^T A.

    Power iteration started from auth = A^T 1 converges to the projection of
    that vector onto the top eigenspace, which is what this returns.
    """
    a = np.zeros((n_users, n_repos))
    for u, r in edges:
        a[u, r] = 1.0
    m = a.T @ a
    vals, vecs = np.linalg.eigh(m)
    top = vals[-1]
    keep = vecs[:, vals >= top - 1e-9 * max(top, 1.0)]
    start = a.T @ np.ones(n_users)
    auth = keep @ (keep.T @ start)
    auth /= np.linalg.norm(auth)
    hub = a @ auth
    hub /= np.linalg.norm(hub)
    return auth, hub


def brute_concordance(risk, time, event) -> tuple[float, int]:
    num, pairs = 0.0, 0
    n = len(risk)
    for i in range(n):
        if not event[i]:
            continue
        for j in range(n):
            if time[i] < time[j]:
                pairs += 1
                if risk[i] > risk[j]:
                    num += 1.0
                elif risk[i] == risk[j]:
                    num += 0.5
    return (num / pairs if pairs else float("nan")), pairs


def spearman_d2(x, y) -> float:
    """Textbook 1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties."""
    n = len(x)
    rx = np.argsort(np.argsort(x)) + 1
    ry = np.argsort(np.argsort(y)) + 1
    d2 = float(np.sum((rx - ry) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def central_diff(f, theta: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        h = rel * max(1.0, abs(theta.flat[i]))
        up = theta.copy()
        dn = theta.copy()
        up.flat[i] += h
        dn.flat[i] -= h
        grad.flat[i] = (f(up) - f(dn)) / (2 * h)
    return grad


def normal_aft_loglik(theta, x, log_t, event) -> float:
    """Censored lognormal log-likelihood written from the textbook formulas."""
    k = x.shape[1]
    w, b, sigma = theta[:k], theta[k], math.exp(theta[k + 1])
    total = 0.0
    for i in range(len(log_t)):
        z = (log_t[i] - x[i] @ w - b) / sigma
        if event[i]:
            total += -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(sigma)
        else:
            total += math.log(0.5 * math.erfc(z / math.sqrt(2)))
    return total


def logistic_aft_loglik(theta, x, log_t, event) -> float:
    k = x.shape[1]
    w, b, sigma = theta[:k], theta[k], math.exp(theta[k + 1])
    total = 0.0
    for i in range(len(log_t)):
        z = (log_t[i] - x[i] @ w - b) / sigma
        if event[i]:
            total += -z - 2 * math.log1p(math.exp(-z)) - math.log(sigma)
        else:
            total += -math.log1p(math.exp(z))
    return total


def masked_bce(weights, biases, x, target, mask) -> float:
    logits = x @ weights.T + biases
    p = 1 / (1 + np.exp(-logits))
    ll = target * np.log(p) + (1 - target) * np.log(1 - p)
    return float(-(ll * mask).sum() / max(mask.sum(), 1))
