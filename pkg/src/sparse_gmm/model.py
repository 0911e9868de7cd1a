"""Sparse k-cluster Gaussian mixture written as a spiked matrix model.

Data are generated as ``X = sqrt(lam/s) V U^T + W`` with ``X`` of shape
(d, n), one-hot-centred label rows in ``U`` and Gauss-Bernoulli centroid
rows in ``V``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

_EXHAUSTIVE_MAX_K = 8


@dataclass(frozen=True)
class ModelParams:
    """One problem size and signal strength.

    ``n`` and ``s`` are derived from ``alpha``, ``rho`` and ``d``; the stored
    ``alpha`` and ``rho`` are then recomputed from the integers so that the
    discrete and continuous descriptions agree exactly.
    """

    k: int
    alpha: float
    rho: float
    lam: float
    d: int
    seed: int = 0
    n: int = field(init=False)
    s: int = field(init=False)
    rho_requested: float = field(init=False)
    s_clamped: bool = field(init=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"k must be an integer >= 2, got {self.k}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        d = int(self.d)
        n = max(1, int(round(self.alpha * d)))
        # small epsilon so that rho = s/d round-trips through floor()
        raw_s = int(np.floor(self.rho * d + 1e-9))
        s = max(1, raw_s)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "rho_requested", float(self.rho))
        object.__setattr__(self, "s_clamped", raw_s < 1)
        object.__setattr__(self, "alpha", n / d)
        object.__setattr__(self, "rho", s / d)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_sparsity(cls, k: int, n: int, d: int, s: int, lam: float, seed: int = 0) -> "ModelParams":
        """Build parameters from integer sizes (used in the sub-extensive regime)."""
        if not 1 <= s <= d:
            raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
        return cls(k=k, alpha=n / d, rho=s / d, lam=lam, d=d, seed=seed)

    def with_lam(self, lam: float) -> "ModelParams":
        return ModelParams(k=self.k, alpha=self.alpha, rho=self.rho, lam=lam, d=self.d, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def codebook(k: int) -> np.ndarray:
    """Label vectors ``u_c = e_c - 1/k``, one per row."""
    return np.eye(k) - 1.0 / k


@dataclass
class ProblemInstance:
    X: np.ndarray
    U_star: np.ndarray
    V_star: np.ndarray
    params: ModelParams
    labels: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        """Samples-by-features view of the data (n x d)."""
        return self.X.T

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<path>.npz`` with the arrays and ``<path>.json`` with the parameters."""
        path = Path(path)
        npz = path.with_suffix(".npz")
        meta = path.with_suffix(".json")
        np.savez(npz, X=self.X, U_star=self.U_star, V_star=self.V_star, labels=self.labels)
        meta.write_text(json.dumps({"format": "sparse_gmm.instance/1", "params": self.params.to_dict()},
                                   indent=2, sort_keys=True))
        return npz, meta

    @classmethod
    def load(cls, path: str | Path) -> "ProblemInstance":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        p = meta["params"]
        params = ModelParams(k=p["k"], alpha=p["alpha"], rho=p["rho"], lam=p["lam"], d=p["d"], seed=p["seed"])
        with np.load(path.with_suffix(".npz")) as arrs:
            return cls(X=arrs["X"], U_star=arrs["U_star"], V_star=arrs["V_star"],
                       params=params, labels=arrs["labels"])


def generate_instance(params: ModelParams, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Draw labels, sparse centroids and noise, and assemble ``X``.

    Labels are i.i.d. uniform over the k classes. Each row of ``V`` is
    independently all-zero (probability ``1 - rho``) or standard Gaussian.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    k, n, d, s = params.k, params.n, params.d, params.s
    labels = rng.integers(0, k, size=n)
    U = codebook(k)[labels]
    active = rng.random(d) < params.rho
    V = rng.standard_normal((d, k)) * active[:, None]
    W = rng.standard_normal((d, n))
    X = np.sqrt(params.lam / s) * (V @ U.T) + W
    return ProblemInstance(X=X, U_star=U, V_star=V, params=params, labels=labels)


def labels_to_codebook(labels: np.ndarray, k: int) -> np.ndarray:
    return codebook(k)[np.asarray(labels)]


def _best_permutation(C: np.ndarray) -> np.ndarray:
    """Column permutation ``perm`` maximizing ``sum_c C[c, perm[c]]``."""
    k = C.shape[0]
    if k <= _EXHAUSTIVE_MAX_K:
        best, best_val = None, -np.inf
        idx = np.arange(k)
        for perm in itertools.permutations(range(k)):
            val = C[idx, perm].sum()
            if val > best_val:
                best, best_val = perm, val
        return np.asarray(best)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return cols[np.argsort(rows)]


def _check_pair(A: np.ndarray, B: np.ndarray):
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")


def overlap_of(A_hat: np.ndarray, A_star: np.ndarray, norm: float | None = None) -> np.ndarray:
    """Overlap matrix ``A_star^T A_hat / norm`` (``norm`` defaults to the row count).

    Label overlaps are normalized by n. For centroid overlaps pass
    ``norm=d`` so that perfect recovery gives ``rho * I``.
    """
    _check_pair(A_hat, A_star)
    if norm is None:
        norm = A_star.shape[0]
    return A_star.T @ A_hat / norm


def aligned(U_hat: np.ndarray, U_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(U_hat with optimally permuted columns, permutation)``."""
    _check_pair(U_hat, U_star)
    perm = _best_permutation(U_star.T @ U_hat)
    return U_hat[:, perm], perm


def symmetrized_mse(U_hat: np.ndarray, U_star: np.ndarray, k: int | None = None) -> float:
    """Minimum over column permutations of ``||pi(U_hat) - U_star||_F^2 / n``."""
    _check_pair(U_hat, U_star)
    if k is not None and U_hat.shape[1] != k:
        raise ValueError(f"expected {k} columns, got {U_hat.shape[1]}")
    U_al, _ = aligned(U_hat, U_star)
    n = U_star.shape[0]
    return float(np.sum((U_al - U_star) ** 2) / n)


def trace_form_mse(U_hat: np.ndarray, U_star: np.ndarray) -> float:
    """``(k-1)/k - Tr M_u`` at the best column permutation."""
    U_al, _ = aligned(U_hat, U_star)
    k = U_star.shape[1]
    return float((k - 1) / k - np.trace(overlap_of(U_al, U_star)))
