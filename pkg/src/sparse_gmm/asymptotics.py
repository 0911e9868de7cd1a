"""Very sparse limit (rho -> 0) of the scalar state evolution.

With ``m_u = x sqrt(-rho log rho / alpha)``, ``m_v = rho y`` and
``lam = C k sqrt(-rho log rho / alpha)`` the recursion reduces to::

    x = C y,    y = T_k(C x)

where ``T_k(z)`` is the fraction of the second radial moment that lies past
the hard activation edge ``z xi^2 / 2 = 1``. Because the centroid channel
precision is proportional to the projector orthogonal to the all-ones
direction, the radial variable has ``k - 1`` degrees of freedom, giving
``T_k(z) = Q((k + 1) / 2, 1 / z)`` with ``Q`` the regularized upper
incomplete gamma function. Its step sits at ``z = 2 / (k + 1)`` for large k.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaincc, gammaln


def _dof(k: int, dof: int | None) -> int:
    return k - 1 if dof is None else dof


def T_k(z, k: int, dof: int | None = None):
    """Normalized upper radial moment; 0 for ``z <= 0``, increasing to 1."""
    z = np.asarray(z, dtype=float)
    a = 0.5 * (_dof(k, dof) + 2)
    with np.errstate(divide="ignore"):
        out = np.where(z > 0, gammaincc(a, 1.0 / np.where(z > 0, z, 1.0)), 0.0)
    return out if out.ndim else float(out)


def T_k_prime(z, k: int, dof: int | None = None):
    """Derivative of ``T_k``: the gamma density at ``1/z`` times ``1/z^2``."""
    z = np.asarray(z, dtype=float)
    a = 0.5 * (_dof(k, dof) + 2)
    zz = np.where(z > 0, z, 1.0)
    t = 1.0 / zz
    logpdf = (a - 1) * np.log(t) - t - gammaln(a)
    out = np.where(z > 0, np.exp(logpdf) * t**2, 0.0)
    return out if out.ndim else float(out)


def T_k_integral(y: float, k: int, dof: int | None = None) -> float:
    """``int_0^y T_k(u) du`` in closed form.

    Integrating by parts and substituting ``t = 1/u`` gives
    ``y Q(a, 1/y) - Q(a - 1, 1/y) / (a - 1)``.
    """
    if y <= 0:
        return 0.0
    a = 0.5 * (_dof(k, dof) + 2)
    x = 1.0 / y
    if a > 1:
        return float(y * gammaincc(a, x) - gammaincc(a - 1, x) / (a - 1))
    return float(quad(lambda u: T_k(u, k, dof), 0.0, y, limit=200)[0])


def T_k_quadrature(z: float, k: int, dof: int | None = None) -> float:
    """Brute-force radial integral, kept as an oracle for :func:`T_k`."""
    if z <= 0:
        return 0.0
    kap = _dof(k, dof)
    xi0 = np.sqrt(2.0 / z)
    lognorm = (0.5 * kap) * np.log(2.0) + gammaln(0.5 * kap + 1)

    def f(xi):
        return np.exp((kap + 1) * np.log(xi) - 0.5 * xi**2 - lognorm)

    mode = np.sqrt(kap + 1)
    if xi0 < mode:
        val = quad(f, xi0, mode, epsabs=0, epsrel=1e-13, limit=200)[0]
        val += quad(f, mode, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    else:
        val = quad(f, xi0, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return float(val)


# ------------------------------------------------------------- fixed points


@dataclass
class RescaledOverlap:
    m_u_tilde: float
    m_v_tilde: float
    C: float
    nontrivial: bool

    def to_model(self, k: int, alpha: float, rho: float) -> tuple[float, float, float]:
        """``(m_u, m_v, lam)`` at finite ``rho``."""
        s = np.sqrt(-rho * np.log(rho) / alpha)
        return self.m_u_tilde * s, self.m_v_tilde * rho, self.C * k * s

    @classmethod
    def from_model(cls, m_u: float, m_v: float, lam: float, k: int, alpha: float,
                   rho: float) -> "RescaledOverlap":
        s = np.sqrt(-rho * np.log(rho) / alpha)
        x = m_u / s
        return cls(x, m_v / rho, lam / (k * s), x > 0)


def rescaled_se_fixed_point(C: float, k: int, dof: int | None = None,
                            grid: int = 400) -> RescaledOverlap:
    """Largest solution of ``x = C T_k(C x)`` (trivial fallback ``x = 0``)."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")

    def g(x):
        return C * T_k(C * x, k, dof) - x

    # every fixed point lies in (0, C] because T_k <= 1
    xs = C * np.logspace(-8, 0, grid)[::-1]
    vals = C * T_k(C * xs, k, dof) - xs
    for i in range(len(xs) - 1):
        if vals[i] <= 0 < vals[i + 1] or vals[i] == 0:
            if vals[i] == 0:
                x = xs[i]
            else:
                x = brentq(g, xs[i + 1], xs[i], xtol=1e-15, rtol=1e-14)
            return RescaledOverlap(float(x), float(T_k(C * x, k, dof)), C, True)
    return RescaledOverlap(0.0, 0.0, C, False)


def C_dyn(k: int, dof: int | None = None, return_y: bool = False):
    """``min_y sqrt(y / T_k(y))``: smallest C with a non-trivial fixed point."""
    # the minimizer sits just past the step of T_k near 2 / (dof + 2)
    step = 2.0 / (_dof(k, dof) + 2)
    ys = step * np.logspace(-0.5, 2, 400)
    with np.errstate(divide="ignore"):
        vals = ys / T_k(ys, k, dof)
    i = int(np.argmin(vals))
    lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, len(ys) - 1)]
    res = minimize_scalar(lambda t: np.exp(t) / T_k(np.exp(t), k, dof),
                          bounds=(np.log(lo), np.log(hi)), method="bounded",
                          options={"xatol": 1e-12})
    y = float(np.exp(res.x))
    c = float(np.sqrt(y / T_k(y, k, dof)))
    return (c, y) if return_y else c


def C_of_overlap(x: float, k: int, dof: int | None = None, branch: str = "high") -> float:
    """``C_k(x)``: coefficient making ``x`` a fixed point of the rescaled map.

    With ``y = C x`` the fixed-point condition is ``y T_k(y) = x^2`` and then
    ``C = y / x``. ``y T_k(y)`` is increasing, so the solution is unique.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    target = x * x
    hi = 1.0
    while hi * T_k(hi, k, dof) < target:
        hi *= 2
    lo = hi / 2
    while lo * T_k(lo, k, dof) > target and lo > 1e-12:
        lo /= 2
    y = brentq(lambda u: u * T_k(u, k, dof) - target, lo, hi, xtol=1e-15, rtol=1e-14)
    return y / x


def C_it(k: int, dof: int | None = None, return_y: bool = False):
    """Coefficient where the informative branch reaches zero potential.

    The rescaled free-energy balance along the branch reduces, with
    ``y = C x``, to the equal-area rule ``int_0^y T_k = y T_k(y) / 2``,
    solved for ``y`` beyond the spinodal point.
    """
    _, y_dyn = C_dyn(k, dof, return_y=True)

    def h(y):
        return T_k_integral(y, k, dof) - 0.5 * y * T_k(y, k, dof)

    lo, hi = y_dyn, 2 * y_dyn
    if h(lo) > 0:
        raise RuntimeError(f"equal-area bracket failed at y_dyn={y_dyn}: h={h(lo)}")
    while h(hi) < 0:
        hi *= 2
        if hi > 1e6:
            raise RuntimeError("equal-area bracket failed: no sign change up to y=1e6")
    y = brentq(h, lo, hi, xtol=1e-15, rtol=1e-14)
    c = float(np.sqrt(y / T_k(y, k, dof)))
    return (c, y) if return_y else c


def C_it_nested(k: int, dof: int | None = None) -> float:
    """Same coefficient from the nested balance integral, solved in ``x``.

    For a trial overlap ``x`` with ``C = C_k(x)`` the balance reads
    ``int_0^x T'(C q) [q - C T(C q)] dq = 0``. Slower; used as a check.
    """
    c_dyn, y_dyn = C_dyn(k, dof, return_y=True)
    x_dyn = y_dyn / c_dyn

    def balance(x):
        C = C_of_overlap(x, k, dof)
        f = lambda q: T_k_prime(C * q, k, dof) * (q - C * T_k(C * q, k, dof))
        edge = 1.0 / C * 1e-3
        return quad(f, edge, x, limit=400, epsabs=1e-14, epsrel=1e-11)[0]

    lo, hi = x_dyn, 2 * x_dyn
    while balance(hi) > 0:
        hi *= 2
    x = brentq(balance, lo, hi, xtol=1e-13)
    return C_of_overlap(x, k, dof)


def C_it_asymptotic(k: int) -> float:
    return float(np.sqrt(4.0 / (k + 1)))


def C_dyn_asymptotic(k: int) -> float:
    return float(np.sqrt(2.0 / (k + 1)))


@dataclass
class ThresholdScaling:
    lambda_it_headline: float
    lambda_it_refined: float
    lambda_it_coefficient: float
    lambda_alg: float


def threshold_scaling(k: int, rho: float, alpha: float, dof: int | None = None) -> ThresholdScaling:
    """Small-rho information threshold in three forms, and the exact ``lam_alg``.

    ``headline``: ``sqrt(-k rho log rho / alpha)``; ``refined``: the large-k
    prefactor ``sqrt(4 k^2 / (k + 1))``; ``coefficient``: ``C_it(k) k`` times
    the common scale.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    s = np.sqrt(-rho * np.log(rho) / alpha)
    return ThresholdScaling(
        lambda_it_headline=float(np.sqrt(k) * s),
        lambda_it_refined=float(np.sqrt(4.0 * k * k / (k + 1)) * s),
        lambda_it_coefficient=float(C_it(k, dof) * k * s),
        lambda_alg=float(k / np.sqrt(alpha)),
    )


def coefficient_table(ks, dof: int | None = None) -> list[dict]:
    rows = []
    for k in ks:
        rows.append({"k": int(k), "C_dyn": C_dyn(k, dof), "C_it": C_it(k, dof),
                     "C_dyn_asymptotic": C_dyn_asymptotic(k), "C_it_asymptotic": C_it_asymptotic(k)})
    return rows


def write_coefficient_table(path: str | Path, rows: list[dict]) -> None:
    cols = ["k", "C_dyn", "C_it", "C_dyn_asymptotic", "C_it_asymptotic"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["k"]] + [repr(float(r[c])) for c in cols[1:]])
