"""Row-sparse signal ensembles, Gaussian measurements and the success metric.

All randomness flows through ``numpy.random.Generator`` objects built on
PCG64 (see :func:`make_rng`), so every draw is a pure function of the seed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .distributions import NonzeroDistribution
from .exceptions import DegenerateSparsityError, VacuousSignalError

SUCCESS_THRESHOLD = 1e-3


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the one pseudo-random algorithm used repo-wide."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def support_size(N: int, epsilon: float) -> int:
    # half-up rounding, so k does not depend on banker's rounding
    return int(math.floor(N * epsilon + 0.5))


@dataclass
class SignalEnsemble:
    X: np.ndarray
    support: np.ndarray
    epsilon: float
    dist: NonzeroDistribution | None

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def B(self):
        return self.X.shape[1]


@dataclass
class MeasurementSetup:
    A: np.ndarray
    Y: np.ndarray

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def N(self):
        return self.A.shape[1]

    @property
    def B(self):
        return self.Y.shape[1]

    @property
    def delta(self):
        return self.n / self.N


def sample_support(N: int, epsilon: float, rng) -> np.ndarray:
    """Uniformly random support of size round(N * epsilon), sorted."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if N < 1:
        raise ValueError("N must be >= 1")
    k = support_size(N, epsilon)
    if k == 0 or k == N:
        raise DegenerateSparsityError(f"degenerate sparsity: k={k} for N={N}")
    rng = make_rng(rng)
    return np.sort(rng.choice(N, size=k, replace=False))


def gen_signal(N: int, B: int, epsilon: float, dist: NonzeroDistribution, rng) -> SignalEnsemble:
    if B < 1:
        raise ValueError("B must be >= 1")
    dist.validate(B)
    rng = make_rng(rng)
    support = sample_support(N, epsilon, rng)
    X = np.zeros((N, B))
    X[support] = dist.sample(support.size, B, rng)
    return SignalEnsemble(X, support, epsilon, dist)


def gen_measurement(N: int, n: int, rng) -> np.ndarray:
    """n x N matrix with iid N(0, 1/n) entries."""
    if n < 1:
        raise ValueError("need at least one measurement (n >= 1)")
    if n > N:
        raise ValueError(f"n={n} exceeds N={N}")
    rng = make_rng(rng)
    return rng.standard_normal((n, N)) / math.sqrt(n)


def measure(A: np.ndarray, X: np.ndarray) -> MeasurementSetup:
    return MeasurementSetup(A, A @ X)


def relative_error(Xhat, X, threshold: float = SUCCESS_THRESHOLD) -> tuple[float, bool]:
    """Relative Frobenius error and the strict success flag ``err < threshold``.

    Values within 1e-12 (relative) of the threshold count as failures, so
    an estimate that is off by exactly the threshold never passes because of
    rounding in the subtraction.
    """
    Xhat = np.asarray(Xhat, dtype=float)
    X = np.asarray(X, dtype=float)
    if Xhat.shape != X.shape:
        raise ValueError(f"shape mismatch {Xhat.shape} vs {X.shape}")
    ref = np.linalg.norm(X)
    if ref == 0:
        raise VacuousSignalError("vacuous signal: reference matrix is all zero")
    err = float(np.linalg.norm(Xhat - X) / ref)
    success = err < threshold and not math.isclose(err, threshold, rel_tol=1e-12)
    return err, success


def ingest_sparsify(matrix, epsilon: float, log_transform: bool = False) -> SignalEnsemble:
    """Keep the top round(N * epsilon) rows by Euclidean norm, zero the rest.

    The optional log2(x + 1) transform is applied first, so the ranking uses
    transformed norms. Ties keep the lower row index.
    """
    M = np.array(matrix, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if log_transform:
        if np.any(M < 0):
            r, c = np.argwhere(M < 0)[0]
            raise ValueError(f"negative entry at row {r}, column {c} under log2 transform")
        M = np.log2(M + 1.0)
    if not np.any(M):
        raise VacuousSignalError("vacuous signal: matrix is all zero")
    N = M.shape[0]
    k = support_size(N, epsilon)
    if k == 0 or k == N:
        raise DegenerateSparsityError(f"degenerate sparsity: k={k} for N={N}")
    order = np.argsort(-np.linalg.norm(M, axis=1), kind="stable")
    support = np.sort(order[:k])
    X = np.zeros_like(M)
    X[support] = M[support]
    return SignalEnsemble(X, support, epsilon, None)


def read_matrix_csv(path) -> np.ndarray:
    """Read a comma-separated numeric matrix; a single non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                bad = next(c for c in row if not _is_float(c))
                raise ValueError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.array(rows)


def write_matrix_csv(path, M) -> None:
    np.savetxt(path, np.asarray(M), delimiter=",", fmt="%.17g")


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True
