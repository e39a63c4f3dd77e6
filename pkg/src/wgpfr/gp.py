"""Scalar Gaussian process core.

Kernel: squared exponential plus a linear term plus i.i.d. noise,

    k(x, x') = v0 exp(-|x - x'|^2 / (2 w0)) + a0 + a1 x.x' + sigma^2 delta,

with the delta contribution only between identical training indices.
Hyperparameters are optimized in log space (multi-restart L-BFGS with
analytic gradients); a batched path fits many independent target vectors
sharing one input set in a single optimizer run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, get_lapack_funcs, solve_triangular
from scipy.optimize import minimize

_trtri = get_lapack_funcs("trtri", (np.empty(0, dtype=np.float64),))

from .errors import AllRestartsFailed, DimensionMismatch, NotPositiveDefinite

JITTERS = (0.0, 1e-10, 1e-8, 1e-6)
LOG_LOWER, LOG_UPPER = -18.0, 10.0
N_PARAMS = 5


@dataclass(frozen=True)
class KernelHyperparams:
    """Natural-scale kernel parameters; all nonnegative, ``w0`` positive."""

    v0: float
    w0: float
    a0: float
    a1: float
    sigma: float

    def __post_init__(self):
        vals = (self.v0, self.w0, self.a0, self.a1, self.sigma)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite hyperparameters: {vals}")
        if self.w0 <= 0:
            raise ValueError("w0 must be positive")
        if min(self.v0, self.a0, self.a1, self.sigma) < 0:
            raise ValueError("v0, a0, a1, sigma must be nonnegative")

    def to_log(self) -> np.ndarray:
        return np.log(
            np.clip(
                [self.v0, self.w0, self.a0, self.a1, self.sigma],
                np.exp(LOG_LOWER),
                np.exp(LOG_UPPER),
            )
        )

    @staticmethod
    def from_log(log_params) -> "KernelHyperparams":
        v0, w0, a0, a1, sigma = np.exp(np.asarray(log_params, dtype=float))
        return KernelHyperparams(v0, w0, a0, a1, sigma)


def _as_2d(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _sq_dists(X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X2[None, :, :]
    return np.einsum("ijq,ijq->ij", diff, diff)


def _inner(X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    return X @ X2.T


def kernel_eval(theta: KernelHyperparams, x, xp, same_index: bool = False) -> float:
    """Kernel value between two (possibly multi-dimensional) inputs."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    xb = np.atleast_1d(np.asarray(xp, dtype=float))
    if xa.shape != xb.shape:
        raise DimensionMismatch(f"input shapes {xa.shape} vs {xb.shape}")
    r2 = float(np.sum((xa - xb) ** 2))
    val = theta.v0 * math.exp(-r2 / (2.0 * theta.w0)) + theta.a0 + theta.a1 * float(xa @ xb)
    if same_index:
        val += theta.sigma**2
    return val


def gram(theta: KernelHyperparams, X, X2=None, noise: bool = False) -> np.ndarray:
    """Gram matrix; ``noise`` adds sigma^2 on the diagonal (X2 must be X)."""
    Xa = _as_2d(X)
    Xb = Xa if X2 is None else _as_2d(X2)
    K = theta.v0 * np.exp(-_sq_dists(Xa, Xb) / (2.0 * theta.w0))
    K += theta.a0 + theta.a1 * _inner(Xa, Xb)
    if noise:
        K = K + theta.sigma**2 * np.eye(Xa.shape[0])
    return K


# Reject factorizations whose pivot ratio signals a numerically singular
# matrix: solves through them produce garbage rather than raising.
MIN_PIVOT_RATIO = 1e-6


def _pivots_ok(L: np.ndarray) -> bool:
    d = np.diag(L)
    return bool(d.min() > 0 and d.min() / d.max() > MIN_PIVOT_RATIO)


def _chol_jittered(K: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for j in JITTERS:
        try:
            L = np.linalg.cholesky(K + j * scale * np.eye(n) if j else K)
        except np.linalg.LinAlgError:
            continue
        if _pivots_ok(L) or j == JITTERS[-1]:
            return L
    raise NotPositiveDefinite("gram matrix not positive definite after jitter escalation")


def log_marginal_likelihood(theta: KernelHyperparams, X, z) -> float:
    """Gaussian log evidence of targets z under the noisy kernel gram."""
    Xa = _as_2d(X)
    za = np.asarray(z, dtype=float)
    n = Xa.shape[0]
    if n < 1:
        raise DimensionMismatch("need at least one observation")
    if za.shape[0] != n:
        raise DimensionMismatch("inputs and targets disagree in length")
    L = _chol_jittered(gram(theta, Xa, noise=True))
    alpha = cho_solve((L, True), za)
    return float(
        -0.5 * za @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    )


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Immutable fitted posterior: training set, hyperparameters, cached factors."""

    X: np.ndarray
    z: np.ndarray
    theta: KernelHyperparams
    chol: np.ndarray
    alpha: np.ndarray

    @staticmethod
    def fit(X, z, theta: KernelHyperparams) -> "GPPosterior":
        Xa = _as_2d(X)
        za = np.asarray(z, dtype=float)
        if Xa.shape[0] != za.shape[0]:
            raise DimensionMismatch("inputs and targets disagree in length")
        if Xa.shape[0] == 0:
            empty = np.zeros((0, 0))
            return GPPosterior(Xa, za, theta, empty, np.zeros(0))
        L = _chol_jittered(gram(theta, Xa, noise=True))
        return GPPosterior(Xa, za, theta, L, cho_solve((L, True), za))


def gp_predict(post: GPPosterior, Xstar):
    """Posterior mean vector and full covariance at the test inputs."""
    Xs = _as_2d(Xstar)
    Kss = gram(post.theta, Xs)
    if post.X.shape[0] == 0:
        return np.zeros(Xs.shape[0]), Kss
    if Xs.shape[1] != post.X.shape[1]:
        raise DimensionMismatch(
            f"test input dim {Xs.shape[1]} != training dim {post.X.shape[1]}"
        )
    Ks = gram(post.theta, post.X, Xs)
    mean = Ks.T @ post.alpha
    V = solve_triangular(post.chol, Ks, lower=True)
    cov = Kss - V.T @ V
    return mean, 0.5 * (cov + cov.T)


def log_pointwise_predictive_density(
    post: GPPosterior, Xstar, zstar, var_floor: float = 0.0
) -> float:
    """Sum of log N(z*_i ; mean_i, var_i + sigma^2) over test points."""
    zs = np.asarray(zstar, dtype=float)
    mean, cov = gp_predict(post, Xstar)
    if mean.shape[0] != zs.shape[0]:
        raise DimensionMismatch("test inputs and targets disagree in length")
    var = np.maximum(np.diag(cov), 0.0) + post.theta.sigma**2
    var = np.maximum(var, var_floor)
    return float(
        np.sum(-0.5 * np.log(2 * np.pi * var) - 0.5 * (zs - mean) ** 2 / var)
    )


# ---------------------------------------------------------------------------
# hyperparameter optimization (batched over independent target vectors)
# ---------------------------------------------------------------------------


def _chol_batch(K: np.ndarray):
    """Per-problem jittered Cholesky of a (B, n, n) stack.

    Returns the factors and a boolean mask of problems whose factorization
    passed the pivot-ratio quality check at some jitter level.
    """
    B, n, _ = K.shape
    eye = np.eye(n)
    scale = np.maximum(np.einsum("bii->bi", K).mean(axis=1), 1e-300)
    L = np.zeros_like(K)
    solved = np.zeros(B, dtype=bool)
    for j in JITTERS:
        idx = np.flatnonzero(~solved)
        if idx.size == 0:
            break
        Ksub = K[idx] + (j * scale[idx])[:, None, None] * eye
        try:
            Ls = np.linalg.cholesky(Ksub)
            d = np.einsum("bii->bi", Ls)
            good = (d.min(axis=1) > 0) & (d.min(axis=1) / d.max(axis=1) > MIN_PIVOT_RATIO)
        except np.linalg.LinAlgError:
            Ls = np.zeros_like(Ksub)
            good = np.zeros(idx.size, dtype=bool)
            for t in range(idx.size):
                try:
                    Lt = np.linalg.cholesky(Ksub[t])
                except np.linalg.LinAlgError:
                    continue
                Ls[t] = Lt
                good[t] = _pivots_ok(Lt)
        sel = good.nonzero()[0]
        L[idx[sel]] = Ls[sel]
        solved[idx[sel]] = True
    return L, solved


def _scatter_nll_grad(log_flat: np.ndarray, r2, ip, S: np.ndarray, count: int):
    """Negative log evidence of ``count`` iid target realizations per problem.

    ``S`` holds per-problem scatter matrices sum_m z_m z_m^T, the sufficient
    statistic for any number of realizations sharing one input set.
    Problems whose gram matrix is numerically singular at every jitter
    level contribute +inf (scipy's line search then backtracks).
    """
    B, n, _ = S.shape
    lp = log_flat.reshape(B, N_PARAMS)
    v0, w0, a0, a1, sig = (np.exp(lp[:, i])[:, None, None] for i in range(N_PARAMS))
    E = np.exp(-r2[None, :, :] / (2.0 * w0))
    K = v0 * E + a0 + a1 * ip[None, :, :] + (sig**2) * np.eye(n)[None, :, :]

    nll = np.full(B, np.inf)
    grads = np.zeros((B, N_PARAMS))
    L, solved = _chol_batch(K)
    if not np.any(solved):
        return np.inf, grads, nll

    inverses, kept = [], []
    for b in np.flatnonzero(solved):
        inv_b, info = _trtri(L[b], lower=1)
        if info == 0:
            inverses.append(inv_b)
            kept.append(b)
    if not kept:
        return np.inf, grads, nll
    solved = np.zeros(B, dtype=bool)
    solved[kept] = True
    s = solved
    Linv = np.asarray(inverses)
    Kinv = np.einsum("bki,bkj->bij", Linv, Linv)
    KiS = np.einsum("bij,bjk->bik", Kinv, S[s])
    logdet = 2.0 * np.sum(np.log(np.einsum("bii->bi", L[s])), axis=1)
    nll[s] = (
        0.5 * np.einsum("bii->b", KiS)
        + 0.5 * count * logdet
        + 0.5 * count * n * np.log(2 * np.pi)
    )

    # d nll / d theta = 0.5 tr((count*Kinv - Kinv S Kinv) dK)
    W = count * Kinv - np.einsum("bik,bkj->bij", KiS, Kinv)
    dv0 = (v0 * E)[s]
    dw0 = dv0 * (r2[None] / (2.0 * w0[s]))
    grads[s, 0] = 0.5 * np.einsum("bij,bij->b", W, dv0)
    grads[s, 1] = 0.5 * np.einsum("bij,bij->b", W, dw0)
    grads[s, 2] = 0.5 * a0[s, 0, 0] * np.einsum("bij->b", W)
    grads[s, 3] = 0.5 * a1[s, 0, 0] * np.einsum("bij,ij->b", W, ip)
    grads[s, 4] = 0.5 * 2.0 * sig[s, 0, 0] ** 2 * np.einsum("bii->b", W)
    return float(np.sum(nll)), grads, nll


def _batch_nll_grad(log_flat: np.ndarray, r2, ip, Z: np.ndarray):
    """Summed negative log evidence and gradient, batched over rows of Z."""
    S = np.einsum("bi,bj->bij", Z, Z)
    total, grads, nll = _scatter_nll_grad(log_flat, r2, ip, S, count=1)
    return total, grads.reshape(-1), nll


def _default_init(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Data-driven starting point, one log 5-vector per target row.

    Lengthscale from the median-squared-distance heuristic; small constant
    and linear weights so the stationary part explains the signal first.
    """
    B = Z.shape[0]
    var = np.maximum(Z.var(axis=1), 1e-8)
    if X.shape[0] > 1:
        r2 = _sq_dists(X, X)
        w0 = max(float(np.median(r2[np.triu_indices_from(r2, k=1)])), 1e-4)
    else:
        w0 = 1.0
    msq = max(float(np.mean(np.einsum("ij,ij->i", X, X))), 1e-8)
    init = np.empty((B, N_PARAMS))
    init[:, 0] = np.log(var)
    init[:, 1] = np.log(w0)
    init[:, 2] = np.log(0.01 * var)
    init[:, 3] = np.log(0.01 * var / msq)
    init[:, 4] = 0.5 * np.log(0.1 * var)
    return np.clip(init, LOG_LOWER, LOG_UPPER)


def _run_multistart(eval_fn, starts: list, B: int, maxiter: int) -> list[KernelHyperparams]:
    """L-BFGS from every start; keep the best parameters per problem.

    Every start's initializer is itself a candidate, so the selected
    parameters are never worse than any initializer at its own problem.
    """
    best_nll = np.full(B, np.inf)
    best_lp = starts[0].copy()
    bounds = [(LOG_LOWER, LOG_UPPER)] * (B * N_PARAMS)

    def objective(flat):
        total, grad, _ = eval_fn(flat)
        return total, grad

    for s in starts:
        total0, _, nll0 = eval_fn(s.reshape(-1))
        improved = nll0 < best_nll
        best_lp[improved] = s[improved]
        best_nll = np.minimum(best_nll, nll0)
        if not np.isfinite(total0):
            # optimizer needs a finite start; the initializer stays a candidate
            continue
        res = minimize(
            objective,
            s.reshape(-1),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": maxiter},
        )
        lp = res.x.reshape(B, N_PARAMS)
        _, _, nll1 = eval_fn(res.x)
        improved = nll1 < best_nll
        best_lp[improved] = lp[improved]
        best_nll = np.minimum(best_nll, nll1)

    if not np.all(np.isfinite(best_nll)):
        raise AllRestartsFailed("no start produced a positive-definite gram matrix")
    return [KernelHyperparams.from_log(best_lp[b]) for b in range(B)]


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


def optimize_hyperparams_batch(
    X,
    Z,
    inits: Optional[Sequence[KernelHyperparams]] = None,
    restarts: int = 5,
    rng=None,
    maxiter: int = 150,
) -> list[KernelHyperparams]:
    """Maximize the log evidence independently for every row of Z.

    All rows share the input set X, so the whole batch is optimized in one
    L-BFGS run per start; the best parameters per row are then selected
    across starts.  Deterministic for a given ``rng`` seed.
    """
    Xa = _as_2d(X)
    Za = np.atleast_2d(np.asarray(Z, dtype=float))
    B, n = Za.shape
    if Xa.shape[0] != n:
        raise DimensionMismatch("inputs and targets disagree in length")
    if n < 2:
        raise DimensionMismatch("hyperparameter fitting needs n >= 2")
    rng = _as_rng(rng)
    r2 = _sq_dists(Xa, Xa)
    ip = _inner(Xa, Xa)

    starts = [
        np.vstack([t.to_log() for t in inits]) if inits is not None else _default_init(Xa, Za)
    ]
    for _ in range(restarts):
        starts.append(np.clip(rng.standard_normal((B, N_PARAMS)), LOG_LOWER, LOG_UPPER))

    def eval_fn(flat):
        return _batch_nll_grad(flat, r2, ip, Za)

    return _run_multistart(eval_fn, starts, B, maxiter)


def optimize_hyperparams_shared(
    groups,
    inits: Optional[Sequence[KernelHyperparams]] = None,
    restarts: int = 5,
    rng=None,
    maxiter: int = 150,
) -> list[KernelHyperparams]:
    """Tie one hyperparameter set per problem across several input groups.

    ``groups`` is a sequence of (X, Z) pairs with Z of shape (B, M_g, n_g):
    M_g independent target realizations per problem observed on the shared
    inputs X.  The objective is the summed log evidence over groups and
    realizations, the reading in which hyperparameters are common to all
    curves of a batch dimension.
    """
    pre = []
    B = None
    pooled = []
    for X, Z in groups:
        Xa = _as_2d(X)
        Za = np.asarray(Z, dtype=float)
        if Za.ndim != 3 or Xa.shape[0] != Za.shape[2]:
            raise DimensionMismatch("each group needs Z of shape (B, M, n) matching X")
        if Za.shape[2] < 2:
            raise DimensionMismatch("hyperparameter fitting needs n >= 2")
        if B is None:
            B = Za.shape[0]
        elif Za.shape[0] != B:
            raise DimensionMismatch("groups disagree on the number of problems")
        S = np.einsum("bmi,bmj->bij", Za, Za)
        pre.append((_sq_dists(Xa, Xa), _inner(Xa, Xa), S, Za.shape[1]))
        pooled.append(Za.reshape(B, -1))
    rng = _as_rng(rng)
    pooled = np.concatenate(pooled, axis=1)

    def eval_fn(flat):
        total = 0.0
        grads = np.zeros((B, N_PARAMS))
        nll = np.zeros(B)
        for r2, ip, S, count in pre:
            t, g, nb = _scatter_nll_grad(flat, r2, ip, S, count)
            total = total + t
            grads += g
            nll = nll + nb
        return total, grads.reshape(-1), nll

    X0 = _as_2d(groups[0][0])
    starts = [
        np.vstack([t.to_log() for t in inits]) if inits is not None else _default_init(X0, pooled)
    ]
    for _ in range(restarts):
        starts.append(np.clip(rng.standard_normal((B, N_PARAMS)), LOG_LOWER, LOG_UPPER))
    return _run_multistart(eval_fn, starts, B, maxiter)


def optimize_hyperparams(
    X,
    z,
    init: Optional[KernelHyperparams] = None,
    restarts: int = 5,
    rng=None,
    maxiter: int = 200,
) -> KernelHyperparams:
    """Single-target convenience wrapper around the batched optimizer."""
    return optimize_hyperparams_batch(
        X,
        np.asarray(z, dtype=float)[None, :],
        inits=None if init is None else [init],
        restarts=restarts,
        rng=rng,
        maxiter=maxiter,
    )[0]
