"""State evolution for the label/centroid overlaps.

Overlaps are ``M_u = U*^T U_hat / n`` and ``M_v = V*^T V_hat / d``. Under the
permutation-symmetric ansatz ``M_u = (m_u / k) P`` and ``M_v = m_v P`` with
``P = I - J/k``, the recursion is exactly two scalar maps::

    m_u' = f_u(lam * m_v / rho)
    m_v' = f_v(alpha * lam * m_u / rho)

``m_u`` lives in [0, 1] and ``m_v`` in [0, rho]. The matrix recursion is
available too, for checking the ansatz and for non-symmetric starts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import integrals as _int
from .denoisers import eta_u, eta_v
from .model import codebook


@dataclass(frozen=True)
class QuadratureSpec:
    """How the label-channel expectation is evaluated.

    ``method`` is one of ``"auto"`` (closed tanh form for k = 2, Gumbel
    reduction otherwise), ``"gumbel"``, ``"tensor"`` (k-dimensional
    Gauss-Hermite, ``order`` nodes per axis) or ``"mc"`` (scrambled Sobol
    with ``samples`` points).
    """

    method: str = "auto"
    order: int = 40
    samples: int = 1 << 16
    seed: int = 0
    v_dof: int | None = None  # radial degrees of freedom, default k - 1

    def __post_init__(self):
        if self.method not in ("auto", "gumbel", "tensor", "mc"):
            raise ValueError(f"unknown quadrature method {self.method!r}")


DEFAULT_QUAD = QuadratureSpec()


def f_u(z: float, k: int, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Label overlap produced by a channel of precision ``z P``."""
    if z < 0:
        raise ValueError(f"negative channel precision {z}")
    m = quad.method
    if m == "auto":
        return _int.f_u_tanh(z) if k == 2 else _int.f_u_gumbel(z, k)
    if m == "gumbel":
        return _int.f_u_gumbel(z, k)
    if m == "tensor":
        return _int.f_u_tensor(z, k, quad.order)
    return _int.f_u_monte_carlo(z, k, quad.samples, quad.seed)[0]


def f_v(z: float, k: int, rho: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Centroid overlap produced by a channel of precision ``(z / k) P``."""
    if z < 0:
        raise ValueError(f"negative channel precision {z}")
    return _int.f_v_radial(z, k, rho, quad.v_dof)[0]


def f_v_prime(z: float, k: int, rho: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    return _int.f_v_radial(z, k, rho, quad.v_dof)[1]


def psi_u(z: float, k: int) -> float:
    """``E log Z_u`` at precision ``z P``; its derivative is ``(k-1)/(2k) f_u``."""
    return _int.psi_u_gumbel(z, k)


def psi_v(z: float, k: int, rho: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E log Z_v`` at precision ``(z / k) P``; its derivative is ``(k-1)/(2k) f_v``."""
    return _int.psi_v_radial(z, k, rho, quad.v_dof)


def se_step_scalar(m_u: float, m_v: float, k: int, alpha: float, rho: float, lam: float,
                   quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[float, float]:
    """One parallel update of ``(m_u, m_v)``."""
    zu = lam * m_v / rho
    zv = alpha * lam * m_u / rho
    return f_u(max(zu, 0.0), k, quad), f_v(max(zv, 0.0), k, rho, quad)


# ------------------------------------------------------------------ matrix


def _psd_sqrt(A):
    A = 0.5 * (A + A.T)
    w, Q = np.linalg.eigh(A)
    scale = max(1.0, np.abs(w).max())
    if w.min() < -1e-10 * scale:
        raise ValueError(f"overlap matrix is not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return w, Q


def _normal_nodes(k: int, quad: QuadratureSpec):
    """Standard normal points in R^k with weights."""
    if quad.method == "mc" or (quad.method == "auto" and k > 3):
        from scipy.stats import norm, qmc

        sob = qmc.Sobol(d=k, scramble=True, seed=quad.seed)
        U = sob.random_base2(int(np.ceil(np.log2(max(quad.samples, 2)))))
        pts = norm.ppf(np.clip(U, 1e-16, 1 - 1e-16))
        return pts, np.full(pts.shape[0], 1.0 / pts.shape[0])
    x, w = _int.hermite_nodes(quad.order)
    grids = np.meshgrid(*([x] * k), indexing="ij")
    wg = np.meshgrid(*([w] * k), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
    return pts, wts


def se_step_matrix(M_u: np.ndarray, M_v: np.ndarray, k: int, alpha: float, rho: float, lam: float,
                   quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[np.ndarray, np.ndarray]:
    """One parallel update of the full k x k overlaps.

    The label update averages over the k codebook entries and Gaussian
    noise. The centroid update uses the marginal law of the field,
    ``b ~ N(0, A^2 + A)`` given a non-zero row, and
    ``E[v* | b] = (I + A)^-1 b`` on the range of ``A``, so only a
    k-dimensional Gaussian expectation is needed.
    """
    pts, wts = _normal_nodes(k, quad)
    cb = codebook(k)

    A_u = lam * 0.5 * (M_v + M_v.T) / rho
    ev, Q = _psd_sqrt(A_u)
    S = (Q * np.sqrt(ev)) @ Q.T
    noise = pts @ S
    M_u_new = np.zeros((k, k))
    for c in range(k):
        B = cb[c] @ A_u + noise
        M_u_new += np.outer(cb[c], wts @ eta_u(A_u, B, cb))
    M_u_new /= k

    A_v = alpha * lam * 0.5 * (M_u + M_u.T) / rho
    ev, Q = _psd_sqrt(A_v)
    L = (Q * np.sqrt(ev**2 + ev)) @ Q.T
    pos = ev > 1e-14 * max(1.0, ev.max())
    K = (Q * np.where(pos, 1.0 / (1.0 + ev), 0.0)) @ Q.T
    B = pts @ L
    H = eta_v(A_v, B, rho)
    M_v_new = rho * (B @ K).T @ (wts[:, None] * H)
    return M_u_new, M_v_new


def symmetric_overlaps(m_u: float, m_v: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    P = np.eye(k) - 1.0 / k
    return m_u / k * P, m_v * P


def scalars_of(M_u: np.ndarray, M_v: np.ndarray) -> tuple[float, float]:
    """Project overlaps back onto the symmetric ansatz."""
    k = M_u.shape[0]
    return float(np.trace(M_u) * k / (k - 1)), float(np.trace(M_v) / (k - 1))


# ------------------------------------------------------------- fixed points


@dataclass
class SEResult:
    m_u: float
    m_v: float
    iterations: int
    converged: bool
    oscillating: bool = False
    trace: list[tuple[float, float]] = field(default_factory=list)

    def mse(self, k: int) -> float:
        """Trace-form label MSE, ``(k-1)/k - Tr M_u``."""
        return (k - 1) / k * (1.0 - self.m_u)


def uninformed_start(rho: float, eps: float = 1e-4) -> tuple[float, float]:
    return eps, rho * eps


def informed_start(rho: float, eps: float = 1e-4) -> tuple[float, float]:
    return 1.0 - eps, rho * (1.0 - eps)


def se_fixed_point(k: int, alpha: float, rho: float, lam: float, start: tuple[float, float],
                   quad: QuadratureSpec = DEFAULT_QUAD, max_iters: int = 10_000,
                   tol: float = 1e-12, keep_trace: bool = False) -> SEResult:
    """Iterate the scalar maps from ``start`` until the update stalls.

    The parallel recursion splits into two interleaved chains; the stopping
    test looks at both coordinates. A run that hits ``max_iters`` while still
    alternating between two values is flagged as oscillating.
    """
    m_u, m_v = start
    trace = [(m_u, m_v)] if keep_trace else []
    prev2 = None
    for it in range(1, max_iters + 1):
        nu, nv = se_step_scalar(m_u, m_v, k, alpha, rho, lam, quad)
        step = max(abs(nu - m_u), abs(nv - m_v) / rho)
        if keep_trace:
            trace.append((nu, nv))
        prev2, (m_u, m_v) = (m_u, m_v), (nu, nv)
        if step < tol:
            return SEResult(m_u, m_v, it, True, False, trace)
    osc = prev2 is not None and abs(prev2[0] - m_u) > 10 * tol
    return SEResult(m_u, m_v, max_iters, False, osc, trace)


def composed_map(m_u: float, k: int, alpha: float, rho: float, lam: float,
                 quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``m_u -> f_u(lam f_v(alpha lam m_u / rho) / rho)``."""
    mv = f_v(alpha * lam * m_u / rho, k, rho, quad)
    return f_u(lam * mv / rho, k, quad)


def departs_from_trivial(k: int, alpha: float, rho: float, lam: float, eps: float = 1e-6,
                         max_iters: int = 100_000, quad: QuadratureSpec = DEFAULT_QUAD) -> bool:
    """Whether SE started at ``m_u = eps`` escapes the uninformed point.

    Iterates the composed label map until ``m_u`` grows past ``10 eps``
    (departed) or shrinks below ``eps / 10`` (trivial). Undecided runs count
    as trivial.
    """
    m = eps
    for _ in range(max_iters):
        m = composed_map(m, k, alpha, rho, lam, quad)
        if m > 10 * eps:
            return True
        if m < eps / 10:
            return False
    return False


def slope_at_origin(k: int, alpha: float, lam: float) -> float:
    """``F'(0) = alpha lam^2 / k^2`` of the composed map; independent of rho."""
    return alpha * lam**2 / k**2


def curvature_at_origin(k: float, alpha: float, lam: float) -> float:
    """``F''(0) = 2 [(k - 4) alpha^2 lam^4 / (2 k^4) - alpha^2 lam^3 / k^3]``.

    Accepts non-integer ``k`` so the sign can be continued in ``k``. At
    ``lam = k / sqrt(alpha)`` it equals ``k - 4 - 2 sqrt(alpha)``.
    """
    return 2.0 * ((k - 4) * alpha**2 * lam**4 / (2 * k**4) - alpha**2 * lam**3 / k**3)


@dataclass
class Linearization:
    slope: float
    curvature: float
    slope_fd: float
    curvature_fd: float
    step: float


def se_linearization(k: int, alpha: float, rho: float, lam: float, step: float | None = None,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> Linearization:
    """Analytic ``F'(0)``, ``F''(0)`` of the composed map with finite-difference checks.

    The estimates use ``F(h), F(2h), F(4h)`` with Richardson extrapolation:
    third order for the slope, second order for the curvature. The map is
    analytic only for ``alpha lam m_u / rho`` of order one, so the default
    step shrinks with ``rho``. The trivial point loses stability when the
    slope exceeds one.
    """
    h = step if step is not None else 1e-3 * min(1.0, 3.0 * rho)
    F = [composed_map(c * h, k, alpha, rho, lam, quad) for c in (1, 2, 4)]
    g1, g2, g4 = F[0] / h, F[1] / (2 * h), F[2] / (4 * h)
    slope_fd = (8 * g1 - 6 * g2 + g4) / 3
    s2 = (F[1] - 2 * F[0]) / h**2
    s4 = (F[2] - 2 * F[1]) / (2 * h) ** 2
    return Linearization(slope=slope_at_origin(k, alpha, lam),
                         curvature=curvature_at_origin(k, alpha, lam),
                         slope_fd=float(slope_fd), curvature_fd=float(2 * s2 - s4), step=h)


def k_tricritical(alpha: float) -> float:
    """Continuous ``k`` where ``F''(0)`` at ``lam_alg`` changes sign (``4 + 2 sqrt(alpha)``)."""
    from scipy.optimize import brentq

    return float(brentq(lambda k: curvature_at_origin(k, alpha, k / np.sqrt(alpha)), 1.0, 1e4, xtol=1e-12))


def rank1_se_step(m_u: float, m_v: float, alpha: float, rho: float, lam: float) -> tuple[float, float]:
    """Two-cluster recursion written directly with +/-1 labels.

    Kept as an independent oracle for the k = 2 case of the general maps:
    with ``lam' = lam / 2`` it is the symmetric rank-one problem.
    """
    lp = lam / 2
    x = lp * m_v / rho
    t, w = _int.gaussian_nodes(x)
    mu = float(np.tanh(x + t) @ w)
    a = alpha * lp * m_u / rho
    if a <= 0:
        return mu, 0.0
    g = np.sqrt(1 + a)
    t, w = _int.gaussian_nodes(a * (1 + a))
    # E over the field given an active row; v*|b has mean b / (1 + a)
    denom = rho + (1 - rho) * g * np.exp(-(t**2) / (2 * (1 + a)))
    eta = rho * t / (1 + a) / denom
    mv = rho * float((eta * t / (1 + a)) @ w)
    return mu, mv
