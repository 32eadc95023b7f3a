"""Block-soft and James-Stein shrinkage, their whitened versions and Jacobians.

Both plain denoisers have the form eta(u) = c(|u|^2) u, hence Jacobian
c I + d u u^T. Denoisers here compute the pair (c, d) from squared norms and
build everything else from it, row-wise over the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlockSoft",
    "JamesStein",
    "CovarianceState",
    "make_covariance_state",
    "eta_bst",
    "eta_js",
    "eta_colored",
    "jac",
    "avg_jacobian",
    "avg_divergence",
]


@dataclass(frozen=True)
class BlockSoft:
    tau: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"BlockSoft threshold must be >= 0, got {self.tau}")

    def check(self, B):
        pass

    def weights(self, q, B):
        r = np.sqrt(q)
        live = r > self.tau
        safe = np.where(live, r, 1.0)
        c = np.where(live, 1.0 - self.tau / safe, 0.0)
        d = np.where(live, self.tau / safe**3, 0.0)
        return c, d

    def to_dict(self):
        return {"kind": "bst", "tau": self.tau}


@dataclass(frozen=True)
class JamesStein:
    def check(self, B):
        if B < 3:
            raise ValueError(f"James-Stein requires B >= 3, got B={B}")

    def weights(self, q, B):
        self.check(B)
        live = q > B - 2
        safe = np.where(live, q, 1.0)
        c = np.where(live, 1.0 - (B - 2) / safe, 0.0)
        d = np.where(live, 2.0 * (B - 2) / safe**2, 0.0)
        return c, d

    def to_dict(self):
        return {"kind": "js"}


@dataclass(frozen=True)
class CovarianceState:
    """Symmetric PSD matrix with eigenvalue-floored square root and inverse square root."""

    sigma: np.ndarray
    half: np.ndarray
    inv_half: np.ndarray
    floor_used: bool


def make_covariance_state(S, rel_floor: float = 1e-10, abs_floor: float = 1e-12) -> CovarianceState:
    """Eigenvalues below ``max(lambda_max * rel_floor, abs_floor)`` are raised to that floor."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if not np.all(np.isfinite(S)):
        raise ValueError("covariance has non-finite entries")
    S = (S + S.T) / 2
    w, V = np.linalg.eigh(S)
    floor = max(w[-1] * rel_floor, abs_floor)
    if not floor > 0:
        raise ValueError("covariance has no positive eigenvalue and no absolute floor")
    floor_used = bool(np.any(w < floor))
    w = np.maximum(w, floor)
    root = np.sqrt(w)
    half = (V * root) @ V.T
    inv_half = (V / root) @ V.T
    return CovarianceState(S, half, inv_half, floor_used)


def identity_state(B: int, scale: float = 1.0) -> CovarianceState:
    """Covariance ``scale * I`` without an eigendecomposition."""
    s = np.sqrt(scale)
    return CovarianceState(scale * np.eye(B), s * np.eye(B), np.eye(B) / s, False)


def eta_bst(y, tau: float):
    """(1 - tau/|y|)_+ y, row-wise over the last axis."""
    y = np.asarray(y, dtype=float)
    c, _ = BlockSoft(tau).weights(np.sum(y * y, axis=-1), y.shape[-1])
    return c[..., None] * y


def eta_js(y):
    """Positive-part James-Stein (1 - (B-2)/|y|^2)_+ y, row-wise over the last axis."""
    y = np.asarray(y, dtype=float)
    c, _ = JamesStein().weights(np.sum(y * y, axis=-1), y.shape[-1])
    return c[..., None] * y


def _whiten(spec, y, cov):
    u = y @ cov.inv_half
    B = y.shape[-1]
    spec.check(B)
    c, d = spec.weights(np.sum(u * u, axis=-1), B)
    return u, c, d


def eta_colored(spec, y, cov: CovarianceState):
    """half @ eta(inv_half @ y) for a vector or for every row of a matrix."""
    y = np.asarray(y, dtype=float)
    u, c, _ = _whiten(spec, y, cov)
    return (c[..., None] * u) @ cov.half


def jac(spec, y, cov: CovarianceState) -> np.ndarray:
    """Analytic Jacobian of the colored denoiser at a single vector ``y``."""
    y = np.asarray(y, dtype=float)
    u, c, d = _whiten(spec, y, cov)
    plain = c * np.eye(y.size) + d * np.outer(u, u)
    return cov.half @ plain @ cov.inv_half


def avg_jacobian(spec, H, cov: CovarianceState) -> np.ndarray:
    """(1/N) sum_i Jac(eta)(H_i)^T over the rows of ``H``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    N, B = H.shape
    U, c, d = _whiten(spec, H, cov)
    inner = c.mean() * np.eye(B) + (U * d[:, None]).T @ U / N
    # each plain Jacobian is symmetric, so transposing swaps the two factors
    return cov.inv_half @ inner @ cov.half


def avg_divergence(spec, H, cov: CovarianceState) -> float:
    """Mean diagonal entry of the row-wise Jacobians (trace / B, averaged over rows)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    U, c, d = _whiten(spec, H, cov)
    q = np.sum(U * U, axis=1)
    return float(np.mean(c + d * q / H.shape[1]))
