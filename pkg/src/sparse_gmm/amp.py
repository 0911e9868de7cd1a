"""Low-rank AMP for the sparse mixture, with optional damping of the fields.

Each iteration builds, from the current estimates,

* label fields  ``A_u = (lam/s) V^T V``,  ``B_u = sqrt(lam/s) X^T V - (lam/s) U_prev S_v``
* centroid fields ``A_v = (lam/s) U^T U``, ``B_v = sqrt(lam/s) X U - (lam/s) V_prev S_u``

where ``S_u`` / ``S_v`` are the summed denoiser Jacobians from the step that
produced the current ``U`` / ``V``. Both sides are then denoised in parallel.
With damping ``gamma`` the fields are mixed with their previous values
before denoising.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoisers import SingularFieldError, eta_u, eta_u_jac_sum, eta_v_and_jac_sum
from .model import ProblemInstance, aligned, overlap_of, symmetrized_mse


class AmpDivergence(RuntimeError):
    """The iteration produced a non-finite or singular state."""

    def __init__(self, message: str, trace: "AmpTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AmpConfig:
    max_iters: int = 500
    tol: float = 1e-7
    gamma: float = 0.0
    epsilon: float = 1e-2
    init_mode: str = "uninformative"
    tau: float = 1.0
    auto_damping: bool = False
    max_restarts: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive; a zero start is a fixed point")
        if self.init_mode not in ("uninformative", "informative"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class AmpState:
    U_hat: np.ndarray
    V_hat: np.ndarray
    U_hat_prev: np.ndarray
    V_hat_prev: np.ndarray
    sigma_u: np.ndarray  # summed over rows, k x k
    sigma_v: np.ndarray
    A_u: np.ndarray | None = None
    A_v: np.ndarray | None = None
    B_u: np.ndarray | None = None
    B_v: np.ndarray | None = None
    iteration: int = 0

    def is_finite(self) -> bool:
        arrs = [self.U_hat, self.V_hat, self.sigma_u, self.sigma_v]
        arrs += [a for a in (self.A_u, self.A_v, self.B_u, self.B_v) if a is not None]
        return all(np.all(np.isfinite(a)) for a in arrs)


@dataclass
class AmpRecord:
    iter: int
    tr_Mu: float
    tr_Mv: float
    mse_trace_form: float
    mse_frobenius: float
    damping: float
    converged: bool


@dataclass
class AmpTrace:
    records: list[AmpRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    gamma: float = 0.0
    restarts: int = 0
    U_hat: np.ndarray | None = None
    V_hat: np.ndarray | None = None

    @property
    def final_mse(self) -> float:
        return self.records[-1].mse_trace_form

    @property
    def final_overlap(self) -> float:
        return self.records[-1].tr_Mu

    def to_csv(self, path: str | Path) -> None:
        cols = ["iter", "tr_Mu", "tr_Mv", "mse_trace_form", "mse_frobenius", "damping", "converged"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                w.writerow([r.iter, repr(r.tr_Mu), repr(r.tr_Mv), repr(r.mse_trace_form),
                            repr(r.mse_frobenius), repr(r.damping), int(r.converged)])


def amp_init(instance: ProblemInstance, config: AmpConfig,
             rng: np.random.Generator | None = None) -> AmpState:
    """Starting iterates; Jacobian sums and previous iterates are zero.

    Informative starts mix the ground truth with noise scaled by ``1 - tau``
    so that ``tau = 1`` starts exactly at the planted signal.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    p = instance.params
    k, n, d = p.k, p.n, p.d
    eps = config.epsilon
    U = eps * rng.standard_normal((n, k))
    V = eps * rng.standard_normal((d, k))
    if config.init_mode == "informative":
        t = config.tau
        U = t * instance.U_star + (1 - t) * U
        V = t * instance.V_star + (1 - t) * V
    zk = np.zeros((k, k))
    return AmpState(U_hat=U, V_hat=V, U_hat_prev=np.zeros_like(U), V_hat_prev=np.zeros_like(V),
                    sigma_u=zk.copy(), sigma_v=zk.copy())


def _record(instance: ProblemInstance, state: AmpState, gamma: float, converged: bool) -> AmpRecord:
    U_star, V_star = instance.U_star, instance.V_star
    k = U_star.shape[1]
    U_al, perm = aligned(state.U_hat, U_star)
    tr_u = float(np.trace(overlap_of(U_al, U_star)))
    tr_v = float(np.trace(overlap_of(state.V_hat[:, perm], V_star, norm=instance.params.d)))
    return AmpRecord(iter=state.iteration, tr_Mu=tr_u, tr_Mv=tr_v,
                     mse_trace_form=(k - 1) / k - tr_u,
                     mse_frobenius=symmetrized_mse(state.U_hat, U_star),
                     damping=gamma, converged=converged)


def amp_step(X: np.ndarray, lam: float, s: int, rho: float, state: AmpState, gamma: float) -> AmpState:
    """One damped AMP iteration; returns the new state."""
    c = lam / s
    r = np.sqrt(c)
    U, V = state.U_hat, state.V_hat
    A_u = c * V.T @ V
    A_v = c * U.T @ U
    B_u = r * (V.T @ X).T - c * state.U_hat_prev @ state.sigma_v
    B_v = r * (X @ U) - c * state.V_hat_prev @ state.sigma_u
    if gamma > 0 and state.A_u is not None:
        g = gamma
        A_u = (1 - g) * A_u + g * state.A_u
        A_v = (1 - g) * A_v + g * state.A_v
        B_u = (1 - g) * B_u + g * state.B_u
        B_v = (1 - g) * B_v + g * state.B_v
    A_u = 0.5 * (A_u + A_u.T)
    A_v = 0.5 * (A_v + A_v.T)
    U_new = eta_u(A_u, B_u)
    sig_u = eta_u_jac_sum(A_u, B_u)
    V_new, sig_v = eta_v_and_jac_sum(A_v, B_v, rho)
    return AmpState(U_hat=U_new, V_hat=V_new, U_hat_prev=U, V_hat_prev=V,
                    sigma_u=0.5 * (sig_u + sig_u.T), sigma_v=0.5 * (sig_v + sig_v.T),
                    A_u=A_u, A_v=A_v, B_u=B_u, B_v=B_v, iteration=state.iteration + 1)


def _run_once(instance: ProblemInstance, config: AmpConfig, gamma: float) -> AmpTrace:
    p = instance.params
    X = instance.X
    n, k = p.n, p.k
    state = amp_init(instance, config)
    trace = AmpTrace(gamma=gamma)
    trace.records.append(_record(instance, state, gamma, False))
    for _ in range(config.max_iters):
        try:
            new = amp_step(X, p.lam, p.s, p.rho, state, gamma)
        except SingularFieldError as exc:
            raise AmpDivergence(f"singular field at iteration {state.iteration + 1}: {exc}", trace) from exc
        if not new.is_finite():
            raise AmpDivergence(f"non-finite state at iteration {new.iteration}", trace)
        # the parallel schedule runs two interleaved chains that may settle on
        # permuted copies of one fixed point, so also compare within a chain
        delta = float(np.sum((new.U_hat - state.U_hat) ** 2) / (n * k))
        delta2 = float(np.sum((new.U_hat - state.U_hat_prev) ** 2) / (n * k))
        state = new
        done = min(delta, delta2) < config.tol and state.iteration > 1
        trace.records.append(_record(instance, state, gamma, done))
        if done:
            trace.converged = True
            break
    trace.iterations = state.iteration
    trace.U_hat, trace.V_hat = state.U_hat, state.V_hat
    return trace


def amp_run(instance: ProblemInstance, config: AmpConfig = AmpConfig()) -> AmpTrace:
    """Run AMP to convergence or ``max_iters``.

    With ``auto_damping`` a divergence restarts the run with
    ``gamma <- (1 + gamma) / 2``, up to ``max_restarts`` times.
    """
    gamma = config.gamma
    restarts = 0
    while True:
        try:
            trace = _run_once(instance, config, gamma)
            trace.restarts = restarts
            return trace
        except AmpDivergence:
            if not config.auto_damping or restarts >= config.max_restarts:
                raise
            restarts += 1
            gamma = 0.5 * (1 + gamma)
