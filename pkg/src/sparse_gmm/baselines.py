"""Spectral baselines for the two-cluster problem.

All functions take the data as samples by features (``Y``, shape n x d),
the transpose of the generator's ``X``, and return +/-1 labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import svds

from .model import labels_to_codebook, trace_form_mse


@dataclass
class BaselineResult:
    labels: np.ndarray
    direction: np.ndarray
    support_size: int
    flags: list[str] = field(default_factory=list)
    gamma: float | None = None


def labels_mse(labels: np.ndarray, U_star: np.ndarray) -> float:
    """Trace-form MSE of +/-1 labels against codebook ground truth (k = 2)."""
    idx = (np.asarray(labels) < 0).astype(int)
    return trace_form_mse(labels_to_codebook(idx, 2), U_star)


def _sign(x: np.ndarray) -> np.ndarray:
    # zero projections are assigned to the first cluster
    return np.where(x >= 0, 1, -1)


def _top_left_singular(Y: np.ndarray):
    """Leading singular triplet plus the second singular value.

    Small matrices use a dense SVD; larger ones use ARPACK with a fixed
    starting vector so repeated runs are bit-identical.
    """
    if min(Y.shape) <= 64:
        U, S, Vt = np.linalg.svd(Y, full_matrices=False)
        return U[:, 0], S[:2], Vt[0]
    v0 = np.full(min(Y.shape), 1.0 / np.sqrt(min(Y.shape)))
    U, S, Vt = svds(Y, k=2, v0=v0, tol=1e-12)
    order = np.argsort(-S)
    U, S, Vt = U[:, order], S[order], Vt[order]
    # fix the overall sign for reproducibility
    sgn = 1.0 if Vt[0][np.argmax(np.abs(Vt[0]))] >= 0 else -1.0
    return sgn * U[:, 0], S, sgn * Vt[0]


def pca_cluster(Y: np.ndarray) -> BaselineResult:
    """Sign of the projection on the top principal direction."""
    u, S, v = _top_left_singular(Y)
    flags = []
    if S.size > 1 and S[0] - S[1] <= 1e-12 * max(S[0], 1.0):
        flags.append("degenerate_spectrum")
    return BaselineResult(labels=_sign(u), direction=v, support_size=int(np.count_nonzero(v)), flags=flags)


@dataclass(frozen=True)
class SpcaConfig:
    gamma0: float = 1e-3
    sparsity_tol: float = 1.0
    max_outer: int = 40
    inner_iters: int = 200
    inner_tol: float = 1e-8
    warm_start: bool = False

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def spca_objective(Y: np.ndarray, c: np.ndarray, D: np.ndarray, gamma: float) -> float:
    return 0.5 * float(np.sum((Y - np.outer(c, D)) ** 2)) + gamma * float(np.abs(D).sum())


def spca_solve(Y: np.ndarray, gamma: float, c0: np.ndarray, iters: int = 200, tol: float = 1e-8,
               record: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Alternating minimization of ``||Y - c D^T||^2 / 2 + gamma ||D||_1`` with ``||c|| = 1``.

    Each D-step is an exact soft-threshold and each c-step an exact
    normalized projection, so the objective never increases.
    """
    c = c0 / np.linalg.norm(c0)
    half_y2 = 0.5 * float(np.einsum("ij,ij->", Y, Y)) if record is not None else 0.0
    prev = np.inf
    D = np.zeros(Y.shape[1])
    for _ in range(iters):
        D = _soft(Y.T @ c, gamma)
        # with ||c|| = 1 the objective is ||Y||^2/2 - c.Y D + ||D||^2/2 + gamma |D|_1
        if record is not None:
            record.append(half_y2 - float(c @ (Y @ D)) + 0.5 * float(D @ D) + gamma * float(np.abs(D).sum()))
        if not np.any(D):
            break
        nz = np.flatnonzero(D)
        YD = Y[:, nz] @ D[nz]
        c = YD / np.linalg.norm(YD)
        obj = -float(c @ YD) + 0.5 * float(D @ D) + gamma * float(np.abs(D).sum())
        if prev - obj <= tol * max(1.0, abs(obj)):
            break
        prev = obj
    return c, D


def spca_cluster(Y: np.ndarray, rho_target: float, config: SpcaConfig = SpcaConfig()) -> BaselineResult:
    """Sparse PCA with the penalty tuned until the support matches ``rho_target * d``.

    The penalty is expanded geometrically until the target is bracketed and
    then bisected (in log scale). The first solve starts from the PCA
    direction; with ``warm_start`` later solves continue from the solution at
    the closest penalty tried so far, otherwise every solve restarts from PCA.
    """
    n, d = Y.shape
    target = rho_target * d
    c_pca, _, _ = _top_left_singular(Y)
    tried: list[tuple[float, np.ndarray]] = []

    def run(g):
        c0 = c_pca
        if config.warm_start and tried:
            c0 = min(tried, key=lambda t: abs(np.log(t[0] / g)))[1]
        c, D = spca_solve(Y, g, c0, config.inner_iters, config.inner_tol)
        if np.any(D):
            tried.append((g, c))
        return c, D, int(np.count_nonzero(D))

    g = config.gamma0
    c, D, s_hat = run(g)
    best = (abs(target - s_hat), g, c, D, s_hat)
    lo = hi = None
    flags = []
    for _ in range(config.max_outer):
        delta = target - s_hat
        if abs(delta) < config.sparsity_tol:
            break
        if delta < 0:  # too many non-zeros: raise the penalty
            lo = g
        else:
            hi = g
        if lo is not None and hi is not None:
            g = np.sqrt(lo * hi)
        elif lo is not None:
            g = 2 * lo
        else:
            g = hi / 2
        c, D, s_hat = run(g)
        if abs(target - s_hat) < best[0]:
            best = (abs(target - s_hat), g, c, D, s_hat)
    else:
        flags.append("sparsity_not_matched")
    _, g, c, D, s_hat = best
    return BaselineResult(labels=_sign(Y @ D), direction=D, support_size=s_hat, flags=flags, gamma=g)


def top_s_indices(values: np.ndarray, s: int) -> np.ndarray:
    """Indices of the ``s`` largest entries; ties go to the lowest index."""
    order = np.argsort(-np.asarray(values), kind="stable")
    return np.sort(order[:s])


def dt_cluster(Y: np.ndarray, s: int) -> BaselineResult:
    """Diagonal thresholding: PCA restricted to the ``s`` highest-variance features."""
    n, d = Y.shape
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}")
    var = np.einsum("ij,ij->j", Y, Y) / n
    S = top_s_indices(var, s)
    YS = Y[:, S]
    K = YS.T @ YS / n
    w, Q = np.linalg.eigh(K)
    v = np.zeros(d)
    v[S] = Q[:, -1]
    return BaselineResult(labels=_sign(Y @ v), direction=v, support_size=s)
