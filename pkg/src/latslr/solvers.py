"""Sparse linear regression solvers and diagnostics.

Lasso is solved by cyclic coordinate descent with exact soft-threshold
updates on the objective (1/2m)||y - X theta||^2 + lambda ||theta||_1.
The l0 oracles enumerate supports exhaustively and serve as the
information-theoretic baseline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np
import scipy.linalg

from .errors import BadShape, LemmaViolated, PreconditionViolated, SearchSpaceTooLarge, ZeroMatrix
from .gadgets import GadgetShape

L0_PARTITE_LIMIT = 10**7
L0_GENERAL_LIMIT = 10**5
LASSO_GRID_SIZE = 25
LASSO_GRID_SPAN = (1e-4, 1.0)
RE_BUDGET = 10**4
RE_REFINE_STARTS = 32
RE_REFINE_ITERS = 2000
# Elements per (left, right, m) residual block in the partite search.
_PARTITE_CHUNK = 1 << 22
# Below this n the partite search forms X^T X once instead of per block pair.
_FULL_GRAM_MAX_N = 2048


@dataclass(frozen=True)
class LassoConfig:
    lambda_reg: float
    max_sweeps: int = 10_000
    tol: float = 1e-8
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lambda_reg >= 0:
            raise ValueError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")


@dataclass
class SolveResult:
    theta_hat: np.ndarray
    objective: float
    sweeps_used: int
    converged: bool
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_reg: float = 0.0
    candidates: int = 0


def lasso_objective(X: np.ndarray, y: np.ndarray, theta: np.ndarray, lam: float) -> float:
    r = y - X @ theta
    return float(r @ r) / (2 * X.shape[0]) + lam * float(np.abs(theta).sum())


@numba.njit(cache=True)
def _cd_sweeps(X, y, lam, theta, max_sweeps, tol, history):
    m, n = X.shape
    colsq = np.zeros(n)
    for j in range(n):
        s = 0.0
        for i in range(m):
            s += X[i, j] * X[i, j]
        colsq[j] = s
    r = y - X @ theta
    thresh = lam * m
    l1 = 0.0
    for j in range(n):
        l1 += abs(theta[j])
    for sweep in range(max_sweeps):
        biggest = 0.0
        for j in range(n):
            if colsq[j] == 0.0:
                continue
            old = theta[j]
            rho = colsq[j] * old
            for i in range(m):
                rho += X[i, j] * r[i]
            if rho > thresh:
                new = (rho - thresh) / colsq[j]
            elif rho < -thresh:
                new = (rho + thresh) / colsq[j]
            else:
                new = 0.0
            step = new - old
            if step != 0.0:
                for i in range(m):
                    r[i] -= step * X[i, j]
                theta[j] = new
                l1 += abs(new) - abs(old)
                if abs(step) > biggest:
                    biggest = abs(step)
        rr = 0.0
        for i in range(m):
            rr += r[i] * r[i]
        history[sweep] = rr / (2.0 * m) + lam * l1
        if biggest < tol:
            return sweep + 1, True
    return max_sweeps, False


def lasso_coordinate_descent(X: np.ndarray, y: np.ndarray, cfg: LassoConfig) -> SolveResult:
    X = np.asfortranarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    m, n = X.shape
    if y.shape != (m,):
        raise BadShape(f"y has shape {y.shape}, expected ({m},)")
    if not np.any(X):
        raise ZeroMatrix("every column of X is zero")
    theta = np.zeros(n) if cfg.warm_start is None else np.array(cfg.warm_start, dtype=float)
    history = np.empty(cfg.max_sweeps)
    sweeps, converged = _cd_sweeps(X, y, float(cfg.lambda_reg), theta, cfg.max_sweeps, cfg.tol, history)
    history = history[:sweeps].copy()
    return SolveResult(theta, float(history[-1]), int(sweeps), bool(converged), history, cfg.lambda_reg)


def threshold_topk(theta: np.ndarray, k: int) -> np.ndarray:
    """Keep the k entries of largest magnitude; ties go to the lower index."""
    theta = np.asarray(theta, dtype=float)
    if not 0 <= k <= theta.size:
        raise ValueError(f"k={k} outside [0, {theta.size}]")
    keep = np.argsort(-np.abs(theta), kind="stable")[:k]
    out = np.zeros_like(theta)
    out[keep] = theta[keep]
    return out


def lasso_lambda_floor(X_tilde: np.ndarray, w_tilde: np.ndarray, epsilon: float) -> float:
    if not 0 < epsilon <= 2:
        raise ValueError(f"epsilon must lie in (0, 2], got {epsilon}")
    X_tilde = np.asarray(X_tilde, dtype=float)
    corr = np.abs(X_tilde.T @ np.asarray(w_tilde, dtype=float)).max() / X_tilde.shape[0]
    return (2 + epsilon) / epsilon * float(corr)


def thresholded_lasso(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    epsilon_cone: float = 1.0,
    w_bound: Optional[float] = None,
    max_sweeps: int = 10_000,
    tol: float = 1e-8,
) -> SolveResult:
    """Lasso followed by top-k truncation.

    With a noise bound ||w|| the regularization is the floor
    ((2+eps)/eps) ||w|| / sqrt(m), which dominates ((2+eps)/eps) ||X^T w / m||_inf
    for column-normalized X. Without it, a geometric grid from the largest
    useful lambda downwards is run with warm starts and the truncation with
    the smallest residual wins (earliest grid point on ties).
    """
    if not 0 < epsilon_cone <= 2:
        raise ValueError(f"epsilon_cone must lie in (0, 2], got {epsilon_cone}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    lam_max = float(np.abs(X.T @ y).max()) / m
    if lam_max == 0.0:
        return SolveResult(np.zeros(n), lasso_objective(X, y, np.zeros(n), 0.0), 0, True)
    if w_bound is not None:
        lam = (2 + epsilon_cone) / epsilon_cone * float(w_bound) / math.sqrt(m)
        if lam <= 0:
            lam = lam_max * LASSO_GRID_SPAN[0]
        return _lasso_at(X, y, k, lam, lam_max, max_sweeps, tol)
    lo, hi = LASSO_GRID_SPAN
    best, best_res = None, np.inf
    warm = None
    for lam in lam_max * np.geomspace(hi, lo, LASSO_GRID_SIZE):
        fit = lasso_coordinate_descent(X, y, LassoConfig(lam, max_sweeps, tol, warm))
        warm = fit.theta_hat
        cut = threshold_topk(fit.theta_hat, k)
        r = X @ cut - y
        res = float(r @ r)
        if res < best_res:
            best_res = res
            best = SolveResult(cut, fit.objective, fit.sweeps_used, fit.converged, fit.history, lam)
    return best


def _lasso_at(X, y, k, lam, lam_max, max_sweeps, tol) -> SolveResult:
    """Truncated Lasso at one lambda, reached by warm starts down a geometric path from lam_max.

    Cold starts at tiny lambda converge very slowly when n > m; the path keeps
    every intermediate solve close to its optimum.
    """
    steps = max(0, math.ceil(4 * math.log10(lam_max / lam))) if lam < lam_max else 0
    warm = None
    for mid in lam_max * np.geomspace(1.0, lam / lam_max, steps + 1)[1:-1] if steps else []:
        warm = lasso_coordinate_descent(X, y, LassoConfig(mid, max_sweeps, tol, warm)).theta_hat
    fit = lasso_coordinate_descent(X, y, LassoConfig(lam, max_sweeps, tol, warm))
    return SolveResult(threshold_topk(fit.theta_hat, k), fit.objective, fit.sweeps_used, fit.converged, fit.history, lam)


def _block_sums(Xb: Sequence[np.ndarray], m: int) -> np.ndarray:
    """All sums picking one column per block, lexicographic in the block choices."""
    sums = np.zeros((1, m))
    for cols in Xb:
        sums = (sums[:, None, :] + cols.T[None, :, :]).reshape(-1, m)
    return sums


def _partite_dims(n: int, k: int, shape) -> int:
    if isinstance(shape, GadgetShape):
        if shape.n != n or shape.k != k:
            raise BadShape(f"shape (n={shape.n}, k={shape.k}) does not match X with n={n}, k={k}")
    if n % k:
        raise BadShape(f"k={k} does not divide n={n}")
    return n // k


def l0_partite_residuals(X: np.ndarray, y: np.ndarray, k: int, shape=None) -> np.ndarray:
    """Squared residual ||X theta - y||^2 for every theta in S_{n,k}, lexicographic order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    w = _partite_dims(n, k, shape)
    if w**k > L0_PARTITE_LIMIT:
        raise SearchSpaceTooLarge(f"(n/k)^k = {w}^{k} exceeds {L0_PARTITE_LIMIT}")
    return _choice_residuals([X[:, b * w:(b + 1) * w] for b in range(k)], y, m)


def l0_tuple_residuals(X: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Squared residual of theta = e_{j_1} + ... + e_{j_k} for every tuple in [n]^k, lexicographic order.

    A superset of S_{n,k}: it also contains vectors with two ones in a block
    and entries equal to 2 from repeated indices.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    if n**k > L0_PARTITE_LIMIT:
        raise SearchSpaceTooLarge(f"n^k = {n}^{k} exceeds {L0_PARTITE_LIMIT}")
    return _choice_residuals([X] * k, y, m)


def _choice_residuals(blocks: Sequence[np.ndarray], y: np.ndarray, m: int) -> np.ndarray:
    half = (len(blocks) + 1) // 2
    left = _block_sums(blocks[:half], m) - y
    right = _block_sums(blocks[half:], m)
    rows = max(1, _PARTITE_CHUNK // max(1, right.shape[0] * m))
    out = np.empty(left.shape[0] * right.shape[0])
    for s in range(0, left.shape[0], rows):
        diff = left[s:s + rows, None, :] + right[None, :, :]
        out[s * right.shape[0]:(s + rows) * right.shape[0]] = np.einsum("ijk,ijk->ij", diff, diff).ravel()
    return out


def partite_index_to_theta(flat: int, n: int, k: int) -> np.ndarray:
    w = n // k
    theta = np.zeros(n)
    for b in reversed(range(k)):
        flat, j = divmod(flat, w)
        theta[b * w + j] = 1.0
    return theta


def tuple_index_to_theta(flat: int, n: int, k: int) -> np.ndarray:
    theta = np.zeros(n)
    for _ in range(k):
        flat, j = divmod(flat, n)
        theta[j] += 1.0
    return theta


def _partite_scores(X: np.ndarray, y: np.ndarray, k: int, w: int) -> tuple[np.ndarray, float]:
    """||X theta - y||^2 - ||y||^2 for all theta in S_{n,k} via block Gram matrices.

    Uses ||sum_b x_{j_b} - y||^2 = ||y||^2 + sum_b (||x_{j_b}||^2 - 2 y.x_{j_b})
    + 2 sum_{a<b} x_{j_a}.x_{j_b}, so the enumeration costs O(2^d k) after
    O(m n^2 / k) of Gram products. Also returns a magnitude scale for the
    rounding error of the expansion.
    """
    unary = (np.einsum("ij,ij->j", X, X) - 2.0 * (y @ X)).reshape(k, w)
    full = X.T @ X if 1 < k and X.shape[1] <= _FULL_GRAM_MAX_N else None
    scale = float(y @ y) + float(np.abs(unary).max(axis=1).sum())
    acc = unary[0].copy()
    idx = [np.arange(w)]
    for b in range(1, k):
        acc = acc[:, None] + unary[b][None, :]
        for a in range(b):
            if full is not None:
                gram = full[a * w:(a + 1) * w, b * w:(b + 1) * w]
            else:
                gram = X[:, a * w:(a + 1) * w].T @ X[:, b * w:(b + 1) * w]
            scale += 2.0 * float(np.abs(gram).max())
            acc += 2.0 * gram[idx[a]]
        acc = acc.ravel()
        idx = [np.repeat(i, w) for i in idx] + [np.tile(np.arange(w), w**b)]
    return acc, scale


def l0_bruteforce_partite(X: np.ndarray, y: np.ndarray, k: int, shape=None) -> SolveResult:
    """Exact least-squares minimizer over S_{n,k}; ties go to the lexicographically first support.

    Candidates are screened with the Gram expansion, then every candidate
    within its rounding-error band of the screened minimum is rescored
    directly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    w = _partite_dims(n, k, shape)
    if w**k > L0_PARTITE_LIMIT:
        raise SearchSpaceTooLarge(f"(n/k)^k = {w}^{k} exceeds {L0_PARTITE_LIMIT}")
    scores, scale = _partite_scores(X, y, k, w)
    band = scores.min() + 1e-10 * scale
    close = np.flatnonzero(scores <= band)
    best_res, best_theta = np.inf, None
    for flat in close:
        theta = partite_index_to_theta(int(flat), n, k)
        r = X @ theta - y
        res = float(r @ r)
        if res < best_res:
            best_res, best_theta = res, theta
    return SolveResult(best_theta, best_res / (2 * m), 1, True, candidates=scores.size)


def l0_bruteforce_general(X: np.ndarray, y: np.ndarray, k: int) -> SolveResult:
    """Least squares over every size-k support with column-pivoted QR."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    if k > m:
        raise SearchSpaceTooLarge(f"k={k} exceeds m={m}")
    total = math.comb(n, k)
    if total > L0_GENERAL_LIMIT:
        raise SearchSpaceTooLarge(f"C({n}, {k}) = {total} exceeds {L0_GENERAL_LIMIT}")
    best_res, best_theta = np.inf, np.zeros(n)
    for support in itertools.combinations(range(n), k):
        cols = list(support)
        coef = scipy.linalg.lstsq(X[:, cols], y, lapack_driver="gelsy")[0]
        r = X[:, cols] @ coef - y
        res = float(r @ r)
        if res < best_res:
            best_res = res
            best_theta = np.zeros(n)
            best_theta[cols] = coef
    return SolveResult(best_theta, best_res / (2 * m), 1, True, candidates=total)


def prediction_error(X: np.ndarray, theta_hat: np.ndarray, theta_star: np.ndarray) -> float:
    diff = np.asarray(X, dtype=float) @ (np.asarray(theta_hat, dtype=float) - np.asarray(theta_star, dtype=float))
    return float(diff @ diff) / np.shape(X)[0]


def residual_mse(X: np.ndarray, theta_hat: np.ndarray, y: np.ndarray) -> float:
    r = np.asarray(X, dtype=float) @ np.asarray(theta_hat, dtype=float) - np.asarray(y, dtype=float)
    return float(r @ r) / np.shape(X)[0]


@dataclass(frozen=True)
class REEstimate:
    """Sampled upper estimate of the restricted eigenvalue, with its witness."""

    value: float
    witness: np.ndarray
    support: tuple
    epsilon: float
    label: str = "upper estimate"


def in_cone(theta: np.ndarray, S: Sequence[int], epsilon: float, slack: float = 1e-12) -> bool:
    theta = np.asarray(theta, dtype=float)
    mask = np.zeros(theta.size, dtype=bool)
    mask[list(S)] = True
    on, off = np.abs(theta[mask]).sum(), np.abs(theta[~mask]).sum()
    return bool(off <= (1 + epsilon) * on * (1 + slack) and on > 0)


def rayleigh_ratio(X_tilde: np.ndarray, theta: np.ndarray) -> float:
    v = X_tilde @ theta
    return float(v @ v) / (X_tilde.shape[0] * float(theta @ theta))


def _into_cone(D: np.ndarray, mask: np.ndarray, epsilon: float) -> np.ndarray:
    """Shrink the off-support part of each row so the cone inequality holds."""
    on = np.abs(D[:, mask]).sum(axis=1)
    off = np.abs(D[:, ~mask]).sum(axis=1)
    cap = (1 + epsilon) * on
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(off > cap, cap / off, 1.0)
    D = D.copy()
    D[:, ~mask] *= scale[:, None]
    return D


def re_constant_estimate(
    X_tilde: np.ndarray,
    S: Sequence[int],
    epsilon: float,
    budget: int = RE_BUDGET,
    rng=None,
) -> REEstimate:
    """Minimum of ||X theta||^2 / (m ||theta||^2) over sampled members of C_eps(S).

    Candidates: the 1-sparse vectors e_j, j in S; random S-dominant directions
    with a random off-support share; and combinations of the lowest
    eigenvectors of X^T X pulled into the cone. The result can only
    overestimate the true constant.
    """
    X_tilde = np.asarray(X_tilde, dtype=float)
    rng = np.random.default_rng(rng)
    m, n = X_tilde.shape
    S = tuple(sorted(int(j) for j in S))
    if not S:
        raise ValueError("support set S must be non-empty")
    mask = np.zeros(n, dtype=bool)
    mask[list(S)] = True
    cands = [np.eye(n)[list(S)]]

    n_rand = max(0, budget // 2)
    if n_rand:
        D = rng.standard_normal((n_rand, n))
        sparsity = rng.random((n_rand, n)) < rng.random((n_rand, 1))
        D[:, ~mask] *= sparsity[:, ~mask]
        on = np.abs(D[:, mask]).sum(axis=1)
        off = np.abs(D[:, ~mask]).sum(axis=1)
        share = rng.random(n_rand) * (1 + epsilon) * on
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(off > 0, share / off, 0.0)
        D[:, ~mask] *= scale[:, None]
        cands.append(D)

    n_eig = max(0, budget - n_rand)
    if n_eig:
        _, vecs = np.linalg.eigh(X_tilde.T @ X_tilde)
        low = vecs[:, : min(n, max(1, len(S) + 2))]
        mix = rng.standard_normal((n_eig, low.shape[1])) * np.geomspace(1, 1e-3, low.shape[1])
        cands.append(np.vstack([low.T, mix @ low.T])[:n_eig])

    D = _into_cone(np.vstack(cands), mask, epsilon)
    keep = (np.einsum("ij,ij->i", D, D) > 0) & (np.abs(D[:, mask]).sum(axis=1) > 0)
    D = D[keep]
    M = X_tilde.T @ X_tilde / m
    ratios = _ratios(D, M)
    seeds = D[np.argsort(ratios, kind="stable")[:RE_REFINE_STARTS]]
    D = np.vstack([D, _refine_in_cone(seeds, M, mask, epsilon)])
    ratios = _ratios(D, M)
    best = int(np.argmin(ratios))
    witness = D[best]
    return REEstimate(rayleigh_ratio(X_tilde, witness), witness, S, float(epsilon))


def _ratios(D: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", D, M, D) / np.einsum("ij,ij->i", D, D)


def _refine_in_cone(D: np.ndarray, M: np.ndarray, mask: np.ndarray, epsilon: float) -> np.ndarray:
    """Projected gradient descent on the Rayleigh quotient, staying inside the cone.

    Each step is accepted only where it lowers the quotient, so the rows never get worse.
    """
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    step = 0.5 / max(float(np.linalg.eigvalsh(M)[-1]), 1e-300)
    cur = _ratios(D, M)
    for _ in range(RE_REFINE_ITERS):
        grad = D @ M - cur[:, None] * D
        trial = _into_cone(D - step * grad, mask, epsilon)
        norms = np.linalg.norm(trial, axis=1, keepdims=True)
        valid = (norms[:, 0] > 0) & (np.abs(trial[:, mask]).sum(axis=1) > 0)
        trial = np.where(valid[:, None], trial / np.where(norms > 0, norms, 1), D)
        new = _ratios(trial, M)
        better = valid & (new < cur)
        D = np.where(better[:, None], trial, D)
        cur = np.where(better, new, cur)
    return D


def averaging_split_check(x: np.ndarray, y: np.ndarray, epsilon: float) -> int:
    """Index i with x_i >= eps/k and y_i <= (1 + 10 eps) x_i, under the lemma's hypotheses."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size == 0:
        raise PreconditionViolated("x and y must be non-empty vectors of equal length")
    if not 0 < epsilon < 1 / 20:
        raise PreconditionViolated(f"epsilon must lie in (0, 1/20), got {epsilon}")
    if np.any(x < 0) or np.any(y < 0):
        raise PreconditionViolated("x and y must be non-negative")
    sx, sy = float(x.sum()), float(y.sum())
    if abs(sx + sy - 1) > 1e-9:
        raise PreconditionViolated(f"sum(x) + sum(y) = {sx + sy}, expected 1")
    if sy > (1 + epsilon) * sx:
        raise PreconditionViolated("sum(y) exceeds (1 + eps) sum(x)")
    k = x.size
    ok = (x >= epsilon / k) & (y <= (1 + 10 * epsilon) * x)
    if not ok.any():
        raise LemmaViolated(f"no qualifying index for x={x}, y={y}, eps={epsilon}")
    return int(np.argmax(ok))


# Solver handles used by the reduction pipeline and the harness: each takes an
# instance exposing X, y, k and the gadget shape, and returns a SolveResult.
def _solve_l0_partite(inst, shape) -> SolveResult:
    return l0_bruteforce_partite(inst.X, inst.y, inst.k, shape)


def _solve_l0_general(inst, shape) -> SolveResult:
    return l0_bruteforce_general(inst.X, inst.y, inst.k)


def _solve_thresholded_lasso(inst, shape) -> SolveResult:
    norms = np.linalg.norm(inst.X, axis=0)
    Z = norms.max() / math.sqrt(inst.X.shape[0])
    if Z == 0:
        raise ZeroMatrix("every column of X is zero")
    return thresholded_lasso(inst.X / Z, inst.y / Z, inst.k)


def _solve_zero(inst, shape) -> SolveResult:
    n = inst.X.shape[1]
    return SolveResult(np.zeros(n), residual_mse(inst.X, np.zeros(n), inst.y) / 2, 0, True)


SOLVERS: dict[str, Callable] = {
    "l0_partite": _solve_l0_partite,
    "l0_general": _solve_l0_general,
    "thresholded_lasso": _solve_thresholded_lasso,
    "zero": _solve_zero,
}


def get_solver(name: str) -> Callable:
    try:
        return SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
