"""Reconstruction algorithms for Y = A X with row-sparse X.

general_vcs is the AMP template with a colored row-wise denoiser and a
matricial Onsager term; softsense and steinsense fix the denoiser.
array_amp vectorizes X and runs scalar-Onsager AMP with a blockwise
denoiser. group_bp_admm solves the convex l2,1 program.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .denoisers import (
    BlockSoft,
    JamesStein,
    avg_divergence,
    avg_jacobian,
    eta_bst,
    eta_colored,
    identity_state,
    make_covariance_state,
)
from .exceptions import DivergedError
from .risk import tau_minimax

__all__ = [
    "SolveOptions",
    "SolveResult",
    "general_vcs",
    "softsense",
    "steinsense",
    "array_amp",
    "group_bp_admm",
    "oracle_recover",
]

# floor on the scalar noise variance fed to the array-AMP denoiser, the same
# absolute floor make_covariance_state applies to S^t
_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 300
    converge_tol: float = 1e-8
    record_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.converge_tol >= 0:
            raise ValueError("converge_tol must be >= 0")


@dataclass
class SolveResult:
    Xhat: np.ndarray
    iters: int
    converged: bool
    residual_norm: float
    trace: list = field(default_factory=list)


def _check_shapes(A, Y):
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if A.ndim != 2 or Y.ndim != 2:
        raise ValueError("A and Y must be 2-D")
    n, N = A.shape
    if Y.shape[0] != n:
        raise ValueError(f"Y has {Y.shape[0]} rows but A has {n}")
    if not 0 < n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    return A, Y


def _schedule(spec_schedule) -> Callable[[int], object]:
    if callable(spec_schedule) and not hasattr(spec_schedule, "weights"):
        return spec_schedule
    if isinstance(spec_schedule, Sequence):
        specs = list(spec_schedule)
        if not specs:
            raise ValueError("empty denoiser schedule")
        return lambda t: specs[min(t, len(specs) - 1)]
    return lambda t: spec_schedule


def _rel_change(new, old):
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-30))


def general_vcs(A, Y, spec_schedule, opts: SolveOptions | None = None, x_init=None) -> SolveResult:
    """AMP for the multiple-measurement-vector problem.

    ``spec_schedule`` is a denoiser spec, a sequence of specs (the last one
    repeats) or a callable ``t -> spec``. Each iteration forms the residual
    with the Onsager term ``R^{t-1} J / delta``, the centered residual
    covariance S^t, and denoises ``X^t + A^T R^t`` row-wise under S^t. The
    Onsager term is absent on the first step.
    """
    opts = opts or SolveOptions()
    A, Y = _check_shapes(A, Y)
    n, N = A.shape
    B = Y.shape[1]
    delta = n / N
    spec_at = _schedule(spec_schedule)
    spec_at(0).check(B)

    X = np.zeros((N, B)) if x_init is None else np.array(x_init, dtype=float)
    if X.shape != (N, B):
        raise ValueError(f"x_init has shape {X.shape}, expected {(N, B)}")
    onsager = np.zeros((n, B))
    trace = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        R = Y - A @ X + onsager
        if not np.all(np.isfinite(R)):
            raise DivergedError(it, trace)
        Rc = R - R.mean(axis=0)
        S = Rc.T @ Rc / n
        H = X + A.T @ R
        cov = make_covariance_state(S)
        spec = spec_at(it - 1)
        X_new = eta_colored(spec, H, cov)
        J = avg_jacobian(spec, H, cov)
        if not np.all(np.isfinite(X_new)):
            raise DivergedError(it, trace)
        onsager = R @ J / delta
        change = _rel_change(X_new, X)
        if opts.record_trace:
            trace.append({"iter": it, "residual_fro": float(np.linalg.norm(R)),
                          "trace_S": float(np.trace(S)),
                          "min_eig_S": float(np.linalg.eigvalsh(S)[0]), "rel_change": change})
        X = X_new
        if change < opts.converge_tol:
            converged = True
            break
    return SolveResult(X, it, converged, float(np.linalg.norm(Y - A @ X)), trace)


def softsense(A, Y, epsilon_for_tau: float, opts: SolveOptions | None = None, x_init=None) -> SolveResult:
    """general_vcs with colored block-soft thresholding at the minimax tau(eps, B)."""
    Y = np.asarray(Y, dtype=float)
    tau = tau_minimax(epsilon_for_tau, Y.shape[1])
    return general_vcs(A, Y, BlockSoft(tau), opts, x_init)


def steinsense(A, Y, opts: SolveOptions | None = None, x_init=None) -> SolveResult:
    """general_vcs with colored positive-part James-Stein; requires B >= 3."""
    return general_vcs(A, Y, JamesStein(), opts, x_init)


def array_amp(A_arr, y_arr, spec, B: int, opts: SolveOptions | None = None) -> SolveResult:
    """Scalar AMP on the vectorized problem, denoising consecutive length-B blocks.

    The noise level is re-estimated every iteration as |r| / sqrt(n) and
    passed to the denoiser as a scaled identity covariance.
    """
    opts = opts or SolveOptions()
    A = np.asarray(A_arr, dtype=float)
    y = np.asarray(y_arr, dtype=float).ravel()
    n, NB = A.shape
    if y.size != n:
        raise ValueError(f"y_arr has length {y.size} but A_arr has {n} rows")
    if NB % B:
        raise ValueError(f"column count {NB} is not divisible by B={B}")
    if not 0 < n <= NB:
        raise ValueError(f"need 1 <= n <= N*B, got n={n}")
    spec.check(B)
    N = NB // B
    ratio = NB / n

    x = np.zeros(NB)
    onsager = np.zeros(n)
    trace = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        r = y - A @ x + onsager
        if not np.all(np.isfinite(r)):
            raise DivergedError(it, trace)
        h = x + A.T @ r
        var = max(float(r @ r) / n, _VAR_FLOOR)
        cov = identity_state(B, var)
        H = h.reshape(N, B)
        x_new = eta_colored(spec, H, cov).ravel()
        div = avg_divergence(spec, H, cov)
        onsager = ratio * div * r
        change = _rel_change(x_new, x)
        if opts.record_trace:
            trace.append({"iter": it, "residual_norm": float(np.linalg.norm(r)),
                          "sigma_hat": math.sqrt(var), "divergence": div, "rel_change": change})
        x = x_new
        if change < opts.converge_tol:
            converged = True
            break
    return SolveResult(x.reshape(N, B), it, converged, float(np.linalg.norm(y - A @ x)), trace)


def group_bp_admm(A, Y, opts: SolveOptions | None = None, rho: float = 1.0) -> SolveResult:
    """Minimize sum_i |X_i|_2 subject to A X = Y by ADMM on the split X = Z.

    The X-update projects onto the affine set {A X = Y} using a cached
    Cholesky factor of A A^T; the Z-update is row-wise block-soft
    thresholding at 1/rho. The returned estimate is the feasible X iterate.
    Stops when the primal |X - Z| and dual rho |Z - Z_prev| residuals both
    fall below ``converge_tol`` times the scale of X and of rho U.
    """
    opts = opts or SolveOptions(max_iters=5000, converge_tol=1e-9)
    if not rho > 0:
        raise ValueError("rho must be positive")
    A, Y = _check_shapes(A, Y)
    N = A.shape[1]
    B = Y.shape[1]
    try:
        chol = linalg.cho_factor(A @ A.T)
    except linalg.LinAlgError as exc:
        raise ValueError("A A^T is not positive definite (rank-deficient A)") from exc

    def project(V):
        return V - A.T @ linalg.cho_solve(chol, A @ V - Y)

    Z = np.zeros((N, B))
    U = np.zeros((N, B))
    X = project(Z)
    trace = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        X = project(Z - U)
        Z_prev = Z
        Z = eta_bst(X + U, 1.0 / rho)
        U = U + X - Z
        if not np.all(np.isfinite(X)):
            raise DivergedError(it, trace)
        primal = float(np.linalg.norm(X - Z))
        dual = rho * float(np.linalg.norm(Z - Z_prev))
        if opts.record_trace:
            trace.append({"iter": it, "primal": primal, "dual": dual})
        scale_p = max(np.linalg.norm(X), np.linalg.norm(Z), 1e-30)
        scale_d = max(rho * np.linalg.norm(U), 1e-30)
        if primal <= opts.converge_tol * scale_p and dual <= opts.converge_tol * scale_d:
            converged = True
            break
    return SolveResult(X, it, converged, float(np.linalg.norm(Y - A @ X)), trace)


def oracle_recover(A, Y, support) -> np.ndarray:
    """Least squares on the given support columns, zero elsewhere."""
    A, Y = _check_shapes(A, Y)
    support = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
    n, N = A.shape
    if support.size > n:
        raise ValueError(f"underdetermined even for oracle: |support|={support.size} > n={n}")
    X = np.zeros((N, Y.shape[1]))
    if support.size:
        X[support] = np.linalg.lstsq(A[:, support], Y, rcond=None)[0]
    return X
