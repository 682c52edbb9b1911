"""Exact t-SNE for projecting embeddings to the plane.

O(n^2) in memory and time, which is fine for a few hundred entities.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import KGError

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MIN_GAIN = 0.01
_EPS = 1e-12


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_entropy(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # shift by the row minimum so exp() never underflows to an all-zero row
    shifted = d - d.min()
    p = np.exp(-shifted * beta)
    total = p.sum()
    p /= total
    H = np.log(total) + beta * np.sum(shifted * p)
    return H, p


def conditional_affinities(
    X: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 200
) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic P(j|i) with a per-point Gaussian precision found by bisection.

    The bisection stops once the row entropy is within ``tol`` nats of
    ``log(perplexity)``.  Returns the matrix and the precisions.
    """
    D = squared_distances(np.asarray(X, dtype=float))
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        # scale the starting precision to the row so bisection starts nearby
        spread = np.median(d - d.min())
        if spread > 0:
            beta = 1.0 / spread
        H, p = _row_entropy(d, beta)
        for _ in range(max_steps):
            diff = H - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            H, p = _row_entropy(d, beta)
        P[i, np.arange(n) != i] = p
        betas[i] = beta
    return P, betas


def joint_affinities(P_cond: np.ndarray) -> np.ndarray:
    P = P_cond + P_cond.T
    return np.maximum(P / P.sum(), _EPS)


def _student_kernel(Y: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    num = _student_kernel(Y)
    Q = np.maximum(num / num.sum(), _EPS)
    mask = ~np.eye(len(P), dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def default_perplexity(n: int, preferred: float = 30.0) -> float:
    return min(preferred, (n - 1) / 3.0)


def tsne_project(
    vectors,
    perplexity: Optional[float] = None,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    record_every: int = 10,
) -> tuple[np.ndarray, list[tuple[int, float]]]:
    """Embed ``vectors`` in 2D.

    Early exaggeration (x12) runs for the first 250 iterations with momentum
    0.5, then momentum 0.8.  Returns the points (input order) and
    ``(iteration, KL)`` pairs recorded every ``record_every`` iterations, at
    the end of the exaggeration phase and at the last iteration.

    Exact duplicate inputs get a deterministic 1e-10 jitter so every point
    has a well-defined neighbourhood.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise KGError("t-SNE needs at least 3 input vectors")
    n = X.shape[0]
    if perplexity is None:
        perplexity = default_perplexity(n)
    if not 1.0 <= perplexity < n - 1:
        raise KGError(f"perplexity {perplexity} infeasible for {n} points")
    rng = np.random.default_rng(seed)
    if len(np.unique(X, axis=0)) < n:
        X = X + 1e-10 * rng.standard_normal(X.shape)

    P = joint_affinities(conditional_affinities(X, perplexity)[0])
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    for it in range(iterations):
        early = it < EXAGGERATION_ITERS
        momentum = 0.5 if early else 0.8
        P_eff = P * EXAGGERATION if early else P
        num = _student_kernel(Y)
        Q = np.maximum(num / num.sum(), _EPS)
        W = (P_eff - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)

        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, MIN_GAIN)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)

        done = it + 1
        if done % record_every == 0 or done == EXAGGERATION_ITERS or done == iterations:
            history.append((done, kl_divergence(P, Y)))
    return Y, history
