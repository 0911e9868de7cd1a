"""One-dimensional expectation machinery behind the scalar overlap maps.

Two reductions keep every scalar update a 1-D integral:

* Label channel. With ``X_1 = z + sqrt(z) w_1`` and ``X_l = sqrt(z) w_l``
  (l >= 2), the posterior weight of the true class is a softmax of the
  ``X_l``. Adding i.i.d. standard Gumbel noise turns the softmax into an
  argmax, so ``E[p_1] = int f(t) F(t + z)^(k-1) dt`` where ``F``/``f`` are
  the CDF/density of ``sqrt(z) w + Gumbel``. The same CDF gives
  ``E log sum_l exp(X_l)`` as ``E[max] - euler_gamma``.

* Centroid channel. With precision ``a P`` (``P`` the projector orthogonal
  to the all-ones vector, rank ``k-1``) the Gauss-Bernoulli posterior only
  depends on the squared norm of the field, so expectations collapse to a
  radial integral against a chi distribution with ``k-1`` degrees of freedom.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import expit, gammaln, log_expit, roots_hermitenorm

EULER_GAMMA = 0.5772156649015329

_GH_ORDER = 60
_TRAPZ_STEP = 0.2
_GL_ORDER = 12


@lru_cache(maxsize=None)
def hermite_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes with weights normalized to sum to one."""
    x, w = roots_hermitenorm(order)
    return x, w / w.sum()


def gaussian_nodes(var: float) -> tuple[np.ndarray, np.ndarray]:
    """Points ``t`` and weights for ``E f(t)``, ``t ~ N(0, var)``.

    Narrow Gaussians use Gauss-Hermite. Wide ones use a uniform trapezoid
    grid, which converges geometrically for the logistic/Gumbel-type
    integrands used here, whose complex singularities stay a fixed distance
    from the real axis in ``t`` rather than shrinking with ``1/sqrt(var)``.
    """
    if var <= 0:
        return np.zeros(1), np.ones(1)
    sd = np.sqrt(var)
    if var < 1.0:
        x, w = hermite_nodes(_GH_ORDER)
        return sd * x, w
    half = 12.0 * sd
    m = int(np.ceil(half / _TRAPZ_STEP))
    t = np.linspace(-half, half, 2 * m + 1)
    w = np.exp(-0.5 * (t / sd) ** 2)
    return t, w / w.sum()


def _gumbel_cdf(x):
    with np.errstate(over="ignore"):
        return np.exp(-np.exp(-x))


def _gumbel_pdf(x):
    with np.errstate(over="ignore"):
        return np.exp(-x - np.exp(-x))


class _LabelChannel:
    """Tabulates ``F`` and ``f`` on a uniform grid for one value of ``z``."""

    def __init__(self, z: float, k: int):
        self.z, self.k = z, k
        self.t, self.wt = gaussian_nodes(z)
        sd = np.sqrt(max(z, 0.0))
        lo = -6.0 - 12.0 * sd
        hi = 45.0 + z + 12.0 * sd
        # fixed grid below z = 1 keeps the z -> 0 baseline consistent
        if z < 1.0:
            lo, hi = -18.0, 58.0
        m = int(np.ceil((hi - lo) / _TRAPZ_STEP))
        self.y = np.linspace(lo, hi, m + 1)
        self.h = self.y[1] - self.y[0]

    def F(self, y):
        return _gumbel_cdf(y[:, None] - self.t[None, :]) @ self.wt

    def f(self, y):
        return _gumbel_pdf(y[:, None] - self.t[None, :]) @ self.wt

    def mean_p1(self) -> float:
        y = self.y
        vals = self.f(y) * self.F(y + self.z) ** (self.k - 1)
        return float(self.h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))

    def mean_log_sum_exp(self) -> float:
        """``E log sum_l exp(X_l)`` via the expected Gumbel maximum."""
        y = self.y
        lo, hi = y[0] - self.z - 10.0, y[-1] + self.z + 10.0
        m = int(np.ceil((hi - lo) / _TRAPZ_STEP))
        grid = np.linspace(lo, hi, m + 1)
        h = grid[1] - grid[0]
        H = self.F(grid - self.z) * self.F(grid) ** (self.k - 1)
        integrand = np.where(grid >= 0, 1.0 - H, -H)
        # split the trapezoid at 0 where the integrand jumps
        pos = grid >= 0
        val = 0.0
        for mask in (pos, ~pos):
            seg = integrand[mask]
            if seg.size > 1:
                val += h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
        # boundary pieces between the last negative node and 0 and first positive node
        i0 = np.argmax(pos)
        if 0 < i0 < grid.size:
            a, b = grid[i0 - 1], grid[i0]
            Ha, Hb = H[i0 - 1], H[i0]
            H0 = Ha + (Hb - Ha) * (0 - a) / (b - a)
            val += -0.5 * (Ha + H0) * (0 - a) + 0.5 * ((1 - H0) + (1 - Hb)) * b
        return val - EULER_GAMMA


@lru_cache(maxsize=64)
def _baseline_p1(k: int) -> float:
    return _LabelChannel(0.0, k).mean_p1()


def label_mean_p1(z: float, k: int) -> float:
    """``E[p_1]`` minus its numerical value at ``z = 0`` plus ``1/k``.

    Subtracting the z = 0 quadrature cancels the (tiny) systematic error so
    that the trivial point maps to itself exactly.
    """
    if z <= 0:
        return 1.0 / k
    return _LabelChannel(z, k).mean_p1() - _baseline_p1(k) + 1.0 / k


def f_u_gumbel(z: float, k: int) -> float:
    if z <= 0:
        return 0.0
    return k / (k - 1) * (label_mean_p1(z, k) - 1.0 / k)


def f_u_tanh(z: float) -> float:
    """Two-cluster label map ``E tanh(x + sqrt(x) g)`` with ``x = z / 2``."""
    if z <= 0:
        return 0.0
    x = 0.5 * z
    t, w = gaussian_nodes(x)
    return float(np.tanh(x + t) @ w)


def psi_u_gumbel(z: float, k: int) -> float:
    """``E log Z_u`` for the label channel with precision ``z P``."""
    if z <= 0:
        return 0.0
    ch = _LabelChannel(z, k)
    base = _LabelChannel(0.0, k).mean_log_sum_exp() - np.log(k)
    return -z * (k + 1) / (2 * k) + ch.mean_log_sum_exp() - np.log(k) - base


def f_u_tensor(z: float, k: int, order: int) -> float:
    """Label map by a k-dimensional tensor Gauss-Hermite rule."""
    if z <= 0:
        return 0.0
    x, w = hermite_nodes(order)
    grids = np.meshgrid(*([x] * k), indexing="ij")
    W = np.ones_like(grids[0])
    for g, wi in zip(grids, np.meshgrid(*([w] * k), indexing="ij")):
        W = W * wi
    logits = np.stack([np.sqrt(z) * g for g in grids], axis=-1)
    logits[..., 0] += z
    logits -= logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    p1 = e[..., 0] / e.sum(axis=-1)
    return float(k / (k - 1) * (np.sum(W * p1) - 1.0 / k))


def f_u_monte_carlo(z: float, k: int, samples: int, seed: int) -> tuple[float, float]:
    """Label map from scrambled-Sobol normal draws; returns ``(value, std_error)``."""
    from scipy.stats import norm, qmc

    if z <= 0:
        return 0.0, 0.0
    sob = qmc.Sobol(d=k, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(max(samples, 2))))
    U = sob.random_base2(m)
    w = norm.ppf(np.clip(U, 1e-16, 1 - 1e-16))
    logits = np.sqrt(z) * w
    logits[:, 0] += z
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    p1 = e[:, 0] / e.sum(axis=1)
    val = k / (k - 1) * (p1.mean() - 1.0 / k)
    se = k / (k - 1) * p1.std(ddof=1) / np.sqrt(p1.size)
    return float(val), float(se)


# ---------------------------------------------------------------- centroids


@lru_cache(maxsize=None)
def _gl_nodes(order: int = _GL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _chi_log_density(xi, dof):
    return (dof - 1) * np.log(xi) - 0.5 * xi**2 - (0.5 * dof - 1) * np.log(2.0) - gammaln(0.5 * dof)


def chi_expect(func, dof: int, transitions=()) -> float:
    """``E func(xi)`` for ``xi`` chi-distributed with ``dof`` degrees of freedom.

    ``transitions`` lists ``(scale, offset)`` pairs: ``func`` is assumed to
    switch sharply where ``scale * xi**2 / 2 - offset`` crosses zero, and the
    panel grid is refined there.
    """
    xi_max = np.sqrt(dof) + 14.0
    edges = [np.arange(0.0, xi_max + 0.25, 0.25)]
    for scale, offset in transitions:
        if scale <= 0 or not np.isfinite(offset):
            continue
        # written without divisions by ``scale``, which may be subnormal
        if offset - 40.0 >= 0.5 * scale * xi_max**2 or offset + 40.0 <= 0:
            continue
        if offset + 40.0 >= 0.5 * scale * xi_max**2:
            xi_hi = xi_max
        else:
            xi_hi = np.sqrt(2 * (offset + 40.0) / scale)
        xi_lo = np.sqrt(2 * (offset - 40.0) / scale) if offset > 40.0 else 0.0
        if xi_lo >= xi_hi:
            continue
        width = 0.25 if scale * xi_hi <= 8.0 else 2.0 / (scale * xi_hi)
        count = min(4000, int(np.ceil((xi_hi - xi_lo) / width)))
        edges.append(np.linspace(xi_lo, xi_hi, count + 1))
    e = np.unique(np.concatenate(edges))
    e = e[e <= xi_max]
    a, b = e[:-1], e[1:]
    x, w = _gl_nodes()
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    dens = np.exp(_chi_log_density(pts, dof))
    return float(np.sum(wts * dens * func(pts)))


def _v_log_odds(rho: float, a: float, dof: int) -> float:
    if rho >= 1:
        return -np.inf
    return np.log1p(-rho) - np.log(rho) + 0.5 * dof * np.log1p(a)


def f_v_radial(z: float, k: int, rho: float, dof: int | None = None) -> tuple[float, float]:
    """Centroid map and its derivative in ``z``.

    The channel precision is ``(z / k) P``; ``dof`` defaults to ``k - 1``,
    the rank of ``P``.
    """
    if z <= 0:
        return 0.0, rho**2 / k
    dof = k - 1 if dof is None else dof
    a = z / k
    c = _v_log_odds(rho, a, dof)
    if not np.isfinite(c):
        m = a / (1 + a)
        return m, 1.0 / (k * (1 + a) ** 2)

    def sig(xi):
        return expit(0.5 * a * xi**2 - c)

    E0 = chi_expect(lambda xi: xi**2 * sig(xi), dof, [(a, c)])
    E1 = chi_expect(lambda xi: xi**2 * (s := sig(xi)) * (1 - s) * (0.5 * xi**2 - 0.5 * dof / (1 + a)),
                    dof, [(a, c)])
    m = rho * a / ((1 + a) * dof) * E0
    dm_da = rho / ((1 + a) ** 2 * dof) * E0 + rho * a / ((1 + a) * dof) * E1
    return m, dm_da / k


def psi_v_radial(z: float, k: int, rho: float, dof: int | None = None) -> float:
    """``E log Z_v`` for the centroid channel with precision ``(z / k) P``."""
    if z <= 0:
        return 0.0
    dof = k - 1 if dof is None else dof
    a = z / k
    c = _v_log_odds(rho, a, dof)
    if not np.isfinite(c):
        return -0.5 * dof * np.log1p(a) + 0.5 * a * dof

    def softplus(x):
        return -log_expit(-x)

    on = chi_expect(lambda xi: softplus(0.5 * a * xi**2 - c), dof, [(a, c)])
    off = chi_expect(lambda xi: softplus(0.5 * a / (1 + a) * xi**2 - c), dof, [(a / (1 + a), c)])
    return float(np.log1p(-rho) + rho * on + (1 - rho) * off)
