"""Replica potential, threshold location and phase labels.

Along the symmetric family the potential is::

    Phi(m_u, m_v) = alpha lam (k-1) / (2 k rho) m_u m_v
                    - psi_v(alpha lam m_u / rho) - alpha psi_u(lam m_v / rho)

with ``psi`` the averaged log-partition functions, so ``Phi(0, 0) = 0`` and
its stationary points are exactly the SE fixed points.

The fixed-point curve ``lam(x)`` (the SNR at which ``m_u = x`` is a fixed
point) carries all the threshold information. Starting at ``lam_alg`` for
``x -> 0`` it may rise to a local maximum (``lam_alg_bayes``), dip to a local
minimum (``lam_dyn``) and then grow without bound as ``x -> 1``.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad as _quad
from scipy.optimize import brentq, minimize_scalar

from .denoisers import log_Z_u, log_Z_v
from .model import codebook
from .state_evolution import (DEFAULT_QUAD, QuadratureSpec, _normal_nodes, _psd_sqrt, f_u, f_v,
                              f_v_prime, informed_start, psi_u, psi_v, se_fixed_point,
                              uninformed_start)

LAMBDA_MAX = 1e4


def lambda_alg(k: int, alpha: float) -> float:
    return k / np.sqrt(alpha)


def k_hard(alpha: float) -> float:
    return 4 + 2 * np.sqrt(alpha)


# ---------------------------------------------------------------- potential


def phi_rs_scalar(m_u: float, m_v: float, k: int, alpha: float, rho: float, lam: float,
                  quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    zv = alpha * lam * m_u / rho
    zu = lam * m_v / rho
    return (alpha * lam * (k - 1) / (2 * k * rho) * m_u * m_v
            - psi_v(zv, k, rho, quad) - alpha * psi_u(zu, k))


def phi_rs(M_u: np.ndarray, M_v: np.ndarray, k: int, alpha: float, rho: float, lam: float,
           quad: QuadratureSpec = QuadratureSpec(order=40)) -> float:
    """Potential for general overlap matrices by direct Gaussian quadrature."""
    pts, wts = _normal_nodes(k, quad)
    cb = codebook(k)
    A_u = lam * 0.5 * (M_v + M_v.T) / rho
    ev, Q = _psd_sqrt(A_u)
    noise = pts @ ((Q * np.sqrt(ev)) @ Q.T)
    eu = np.mean([wts @ log_Z_u(A_u, cb[c] @ A_u + noise, cb) for c in range(k)])
    A_v = alpha * lam * 0.5 * (M_u + M_u.T) / rho
    ev, Q = _psd_sqrt(A_v)
    on = pts @ ((Q * np.sqrt(ev**2 + ev)) @ Q.T)
    off = pts @ ((Q * np.sqrt(ev)) @ Q.T)
    ev_ = rho * (wts @ log_Z_v(A_v, on, rho)) + (1 - rho) * (wts @ log_Z_v(A_v, off, rho))
    return float(alpha * lam * np.trace(M_u @ M_v) / (2 * rho) - ev_ - alpha * eu)


def phi_gradient(m_u: float, m_v: float, k: int, alpha: float, rho: float, lam: float,
                 quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[float, float]:
    """Analytic gradient; it vanishes exactly at SE fixed points."""
    c = alpha * lam * (k - 1) / (2 * k * rho)
    gu = c * (m_v - f_v(alpha * lam * m_u / rho, k, rho, quad))
    gv = c * (m_u - f_u(lam * m_v / rho, k, quad))
    return gu, gv


def composed(x: float, k: int, alpha: float, rho: float, lam: float,
             quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    return f_u(lam * f_v(alpha * lam * x / rho, k, rho, quad) / rho, k, quad)


def lambda_of_overlap(x: float, k: int, alpha: float, rho: float,
                      quad: QuadratureSpec = DEFAULT_QUAD, xtol: float = 1e-12) -> float | None:
    """SNR at which ``m_u = x`` is a fixed point, or None if unreachable."""
    if not 0 < x < 1:
        raise ValueError(f"overlap must lie in (0, 1), got {x}")

    def g(lam):
        return composed(x, k, alpha, rho, lam, quad) - x

    lo = 1e-6
    hi = lambda_alg(k, alpha)
    while g(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > LAMBDA_MAX:
            return None
    return brentq(g, lo, hi, xtol=xtol * hi, rtol=1e-15)


def delta_phi(x: float, k: int, alpha: float, rho: float, quad: QuadratureSpec = DEFAULT_QUAD,
              lam: float | None = None) -> float | None:
    """Potential of the fixed point ``m_u = x`` relative to the trivial one.

    Integrates the potential along the path where the centroid equation is
    satisfied, ``m_v = f_v(alpha lam q / rho)`` for ``q`` in [0, x], at the
    SNR ``lam(x)``.
    """
    if lam is None:
        lam = lambda_of_overlap(x, k, alpha, rho, quad)
        if lam is None:
            return None
    s = alpha * lam / rho

    def integrand(q):
        zv = s * q
        return f_v_prime(zv, k, rho, quad) * (q - f_u(lam * f_v(zv, k, rho, quad) / rho, k, quad))

    val, _ = _quad(integrand, 0.0, x, limit=200, epsabs=1e-13, epsrel=1e-10)
    return (k - 1) / (2 * k) * s**2 * val


# --------------------------------------------------------------- thresholds


@dataclass
class ThresholdSet:
    k: int
    alpha: float
    rho: float
    lambda_alg: float
    lambda_it: float | None = None
    lambda_dyn: float | None = None
    lambda_alg_bayes: float | None = None
    lambda_jump_bayes: float | None = None
    x_dyn: float | None = None
    x_alg_bayes: float | None = None
    x_it: float | None = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def all_values(self) -> list[float]:
        vals = [self.lambda_alg, self.lambda_it, self.lambda_dyn, self.lambda_alg_bayes,
                self.lambda_jump_bayes]
        return [v for v in vals if v is not None]


def overlap_grid(points: int = 200, lo: float = 1e-4, hi: float = 0.999) -> np.ndarray:
    """Log-spaced near 0 and near 1, so both ends of the curve are resolved."""
    half = points // 2
    a = np.logspace(np.log10(lo), np.log10(0.5), half)
    b = 1 - np.logspace(np.log10(0.5), np.log10(1 - hi), points - half + 1)[1:]
    return np.unique(np.concatenate([a, b]))


def _refine_extremum(fun, a: float, b: float, maximize: bool, tol: float):
    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(lambda t: sign * fun(np.exp(t)), bracket=None,
                          bounds=(np.log(a), np.log(b)), method="bounded",
                          options={"xatol": tol})
    x = float(np.exp(res.x))
    return x, sign * float(res.fun)


def _branch_inverse(lam_target: float, curve, a: float, b: float) -> float:
    """Overlap on the monotone branch [a, b] of ``curve`` where it equals ``lam_target``."""
    return brentq(lambda x: curve(x) - lam_target, a, b, xtol=1e-13)


def find_thresholds(k: int, alpha: float, rho: float, quad: QuadratureSpec = DEFAULT_QUAD,
                    points: int = 200, tol: float = 1e-7) -> ThresholdSet:
    """Locate every threshold from the fixed-point curve ``lam(x)``.

    * ``lam_alg = k / sqrt(alpha)``.
    * ``lam_alg_bayes`` / ``lam_dyn`` are the local maximum / minimum of
      ``lam(x)``, absent when the curve is monotone.
    * The Bayes-optimal point jumps to the high-overlap branch where its
      potential equals that of its competitor: the trivial point below
      ``lam_alg``, the low-overlap branch above it. A jump below ``lam_alg``
      is ``lam_it``; a jump above it is ``lam_jump_bayes`` and then
      ``lam_it = lam_alg``.
    """
    la = lambda_alg(k, alpha)
    ts = ThresholdSet(k=k, alpha=alpha, rho=rho, lambda_alg=la)
    ts.tolerances = {"lambda_alg": 0.0}
    cache: dict[float, float] = {}

    def curve(x):
        if x not in cache:
            v = lambda_of_overlap(x, k, alpha, rho, quad)
            cache[x] = np.inf if v is None else v
        return cache[x]

    xs = overlap_grid(points)
    lams = np.array([curve(x) for x in xs])
    dl = np.diff(lams)
    maxima, minima = [], []
    for i in range(1, len(dl)):
        if dl[i - 1] > 0 and dl[i] <= 0:
            maxima.append(i)
        elif dl[i - 1] < 0 and dl[i] >= 0:
            minima.append(i)
    # a curve that starts by decreasing has its maximum at x -> 0, i.e. lam_alg
    x_max = x_min = None
    if maxima:
        i = maxima[0]
        x_max, ts.lambda_alg_bayes = _refine_extremum(curve, xs[i - 1], xs[i + 1], True, tol)
        ts.x_alg_bayes = x_max
    if minima:
        i = minima[-1]
        x_min, ts.lambda_dyn = _refine_extremum(curve, xs[i - 1], xs[i + 1], False, tol)
        ts.x_dyn = x_min
    ts.tolerances.update({"lambda_dyn": tol, "lambda_alg_bayes": tol})

    if x_min is None:
        ts.lambda_it = la
        ts.tolerances["lambda_it"] = 0.0
        return ts

    x_hi_end = xs[-1]
    while curve(x_hi_end) < (ts.lambda_alg_bayes or la) * 1.5 and x_hi_end < 1 - 1e-9:
        x_hi_end = 1 - (1 - x_hi_end) / 10

    def dphi(x):
        return delta_phi(x, k, alpha, rho, quad, lam=curve(x))

    def competitor(lam):
        if lam <= la or x_max is None or lam >= ts.lambda_alg_bayes:
            return 0.0 if lam <= la else None
        xl = _branch_inverse(lam, curve, xs[0] / 10, x_max)
        return dphi(xl)

    def gap(x):
        lam = curve(x)
        c = competitor(lam)
        if c is None:
            return -np.inf
        return dphi(x) - c

    a, b = x_min, x_hi_end
    ga, gb = gap(a), gap(b)
    if ga <= 0:
        x_star = a
    elif gb > 0:
        x_star = None
    else:
        x_star = brentq(gap, a, b, xtol=1e-10)
    if x_star is None:
        ts.lambda_it = la
        return ts
    lam_star = curve(x_star)
    ts.x_it = x_star
    if lam_star < la:
        ts.lambda_it = lam_star
    else:
        ts.lambda_it = la
        ts.lambda_jump_bayes = lam_star
    ts.tolerances["lambda_it"] = 1e-8
    ts.tolerances["lambda_jump_bayes"] = 1e-8
    return ts


# -------------------------------------------------------------------- phases


class PhaseLabel(str, enum.Enum):
    IMPOSSIBLE = "impossible"
    HARD = "hard"
    EASY = "easy"
    ALG_BAYES = "alg_bayes"


@dataclass
class PhaseResult:
    label: PhaseLabel
    boundary: bool
    m_uninformed: float
    m_informed: float
    m_bayes: float


def classify_phase(k: int, alpha: float, rho: float, lam: float, thresholds: ThresholdSet | None = None,
                   quad: QuadratureSpec = DEFAULT_QUAD, trivial_tol: float = 1e-6,
                   gap_tol: float = 1e-4, boundary_frac: float = 0.02) -> PhaseResult:
    """Label a point from its uninformed and informed SE fixed points.

    The Bayes point is whichever of the two has the lower potential. Points
    within ``boundary_frac`` (relative) of any threshold are flagged.
    """
    un = se_fixed_point(k, alpha, rho, lam, uninformed_start(rho), quad)
    inf = se_fixed_point(k, alpha, rho, lam, informed_start(rho), quad)
    phi_un = phi_rs_scalar(un.m_u, un.m_v, k, alpha, rho, lam, quad)
    phi_inf = phi_rs_scalar(inf.m_u, inf.m_v, k, alpha, rho, lam, quad)
    bayes = inf if phi_inf < phi_un - 1e-12 else un
    if bayes.m_u < trivial_tol:
        label = PhaseLabel.IMPOSSIBLE
    elif un.m_u < trivial_tol:
        label = PhaseLabel.HARD
    elif abs(un.m_u - bayes.m_u) > gap_tol:
        label = PhaseLabel.EASY
    else:
        label = PhaseLabel.ALG_BAYES
    boundary = False
    if thresholds is not None:
        boundary = any(abs(lam - t) <= boundary_frac * t for t in thresholds.all_values())
    return PhaseResult(label, boundary, un.m_u, inf.m_u, bayes.m_u)
