"""Partition functions and posterior-mean denoisers for the two priors.

The label prior is uniform over the codebook ``u_c = e_c - 1/k``; the
centroid prior is Gauss-Bernoulli on R^k rows (zero with probability
``1 - rho``, otherwise N(0, I_k)). For a Gaussian channel with precision
``A`` and field ``b`` the posterior is proportional to
``prior(x) exp(b.x - x.A.x / 2)``.

All functions accept a single field ``b`` of shape (k,) or a batch of
shape (m, k); the ``A`` matrix is shared across the batch.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .model import codebook

MIN_EIG = 1e-10


class SingularFieldError(ValueError):
    """Raised when ``I + A`` is not safely positive definite."""


def _as_batch(b):
    b = np.asarray(b, dtype=float)
    return (b[None, :], True) if b.ndim == 1 else (b, False)


def _unbatch(x, single):
    return x[0] if single else x


def _u_logits(A, B, cb):
    quad = 0.5 * np.einsum("ci,ij,cj->c", cb, A, cb)
    return B @ cb.T - quad


def log_Z_u(A, b, cb=None):
    A = np.asarray(A, dtype=float)
    B, single = _as_batch(b)
    cb = codebook(B.shape[1]) if cb is None else cb
    out = logsumexp(_u_logits(A, B, cb), axis=1) - np.log(cb.shape[0])
    return _unbatch(out, single)


def Z_u(A, b, cb=None):
    return np.exp(log_Z_u(A, b, cb))


def Z_u_direct(A, b, cb=None):
    """Plain-exponential evaluation, kept for cross-checking the log-domain path."""
    A = np.asarray(A, dtype=float)
    B, single = _as_batch(b)
    cb = codebook(B.shape[1]) if cb is None else cb
    return _unbatch(np.exp(_u_logits(A, B, cb)).mean(axis=1), single)


def u_posterior(A, b, cb=None):
    """Posterior weights over codebook entries, shape (m, k)."""
    A = np.asarray(A, dtype=float)
    B, single = _as_batch(b)
    cb = codebook(B.shape[1]) if cb is None else cb
    L = _u_logits(A, B, cb)
    L -= L.max(axis=1, keepdims=True)
    P = np.exp(L)
    P /= P.sum(axis=1, keepdims=True)
    return _unbatch(P, single)


def eta_u(A, b, cb=None):
    B, single = _as_batch(b)
    cb = codebook(B.shape[1]) if cb is None else cb
    P = u_posterior(A, B, cb)
    return _unbatch(P @ cb, single)


def eta_u_jac(A, b, cb=None):
    """Posterior covariance over codebook vectors, shape (k, k) or (m, k, k)."""
    B, single = _as_batch(b)
    cb = codebook(B.shape[1]) if cb is None else cb
    P = u_posterior(A, B, cb)
    mean = P @ cb
    second = np.einsum("mc,ci,cj->mij", P, cb, cb)
    return _unbatch(second - mean[:, :, None] * mean[:, None, :], single)


def eta_u_jac_sum(A, B, cb=None):
    """Sum over rows of ``eta_u_jac`` without materializing the stack."""
    B = np.asarray(B, dtype=float)
    cb = codebook(B.shape[1]) if cb is None else cb
    P = u_posterior(A, B, cb)
    mean = P @ cb
    return cb.T @ (P.sum(axis=0)[:, None] * cb) - mean.T @ mean


class _VChannel:
    """Cached linear algebra for ``I + A`` shared by all v-prior functions."""

    def __init__(self, A, rho):
        A = np.asarray(A, dtype=float)
        k = A.shape[0]
        if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        M = np.eye(k) + 0.5 * (A + A.T)
        evals, evecs = np.linalg.eigh(M)
        if evals.min() < MIN_EIG:
            raise SingularFieldError(f"I + A has eigenvalue {evals.min():.3e}")
        self.G = (evecs / evals) @ evecs.T
        self.logdet = float(np.sum(np.log(evals)))
        self.rho = float(rho)
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {rho}")
        if self.rho < 1:
            self.log_odds = np.log1p(-self.rho) - np.log(self.rho) + 0.5 * self.logdet
        else:
            self.log_odds = -np.inf

    def q(self, B):
        GB = B @ self.G
        return GB, np.einsum("mi,mi->m", GB, B)

    def weight(self, q):
        """Posterior probability that the row is non-zero."""
        return expit(0.5 * q - self.log_odds)


def log_Z_v(A, b, rho):
    ch = _VChannel(A, rho)
    B, single = _as_batch(b)
    _, q = ch.q(B)
    if rho >= 1:
        out = 0.5 * q - 0.5 * ch.logdet
    else:
        out = np.log1p(-rho) - log_expit(ch.log_odds - 0.5 * q)
    return _unbatch(out, single)


def Z_v(A, b, rho):
    return np.exp(log_Z_v(A, b, rho))


def Z_v_direct(A, b, rho):
    A = np.asarray(A, dtype=float)
    B, single = _as_batch(b)
    M = np.eye(A.shape[0]) + A
    q = np.einsum("mi,ij,mj->m", B, np.linalg.inv(M), B)
    out = 1 - rho + rho * np.exp(0.5 * q) / np.sqrt(np.linalg.det(M))
    return _unbatch(out, single)


def eta_v(A, b, rho):
    ch = _VChannel(A, rho)
    B, single = _as_batch(b)
    GB, q = ch.q(B)
    return _unbatch(ch.weight(q)[:, None] * GB, single)


def eta_v_jac(A, b, rho):
    """``w G + w (1 - w) (G b)(G b)^T`` with ``w`` the non-zero posterior weight."""
    ch = _VChannel(A, rho)
    B, single = _as_batch(b)
    GB, q = ch.q(B)
    w = ch.weight(q)
    J = w[:, None, None] * ch.G + (w * (1 - w))[:, None, None] * GB[:, :, None] * GB[:, None, :]
    return _unbatch(J, single)


def eta_v_and_jac_sum(A, B, rho):
    """Denoised rows and the summed Jacobian, as needed by one AMP half-step."""
    ch = _VChannel(A, rho)
    B = np.asarray(B, dtype=float)
    GB, q = ch.q(B)
    w = ch.weight(q)
    jac_sum = w.sum() * ch.G + (GB * (w * (1 - w))[:, None]).T @ GB
    return w[:, None] * GB, jac_sum


# Rank-one specializations (k = 2 mapped onto +/-1 labels).

def rank1_log_Z_u(A, b):
    b = np.asarray(b, dtype=float)
    return -0.5 * A + np.logaddexp(b, -b) - np.log(2.0)


def rank1_eta_u(A, b):
    return np.tanh(b)


def rank1_eta_u_jac(A, b):
    return 1.0 - np.tanh(b) ** 2


def rank1_log_Z_v(A, b, rho):
    b = np.asarray(b, dtype=float)
    q = b**2 / (1 + A)
    if rho >= 1:
        return 0.5 * q - 0.5 * np.log1p(A)
    return np.logaddexp(np.log1p(-rho), np.log(rho) - 0.5 * np.log1p(A) + 0.5 * q)


def rank1_eta_v(A, b, rho):
    b = np.asarray(b, dtype=float)
    denom = rho + (1 - rho) * np.sqrt(1 + A) * np.exp(-(b**2) / (2 * (1 + A)))
    return rho * b / (1 + A) / denom
