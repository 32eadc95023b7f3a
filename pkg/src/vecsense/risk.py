"""Minimax risks of block-soft and James-Stein shrinkage, and state evolution.

Analytic pieces (chi partial moments, the minimax threshold, M_BST, M_JS,
the two-point Bayes bound) use one-dimensional quadrature or regularized
incomplete gamma functions. Risk matrices and state evolution are Monte
Carlo, stratified over the zero / nonzero parts of the sparse prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special, stats

from .denoisers import BlockSoft, JamesStein, eta_colored, identity_state, make_covariance_state
from .distributions import NonzeroDistribution, Symmetrized
from .exceptions import ThresholdRangeError
from .signal_model import make_rng

__all__ = [
    "SparsePrior",
    "RiskEstimate",
    "SETrace",
    "PTPrediction",
    "incomplete_I",
    "chi_partial_moments",
    "h_g",
    "tau_minimax",
    "m_bst",
    "r_js_zero",
    "m_js",
    "risk_mc",
    "se_run",
    "predict_pt_se",
    "symmetrize_sampler",
    "bayes_two_point_bound",
    "extreme_sparsity_asymptotics",
    "minimax_risk",
]

_CHUNK = 100_000
_BISECT_DEPTH = 60


@dataclass(frozen=True)
class SparsePrior:
    """(1 - epsilon) * delta_0 + epsilon * nonzero, on R^B."""

    epsilon: float
    nonzero: NonzeroDistribution
    B: int

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        self.nonzero.validate(self.B)


# --- analytic minimax machinery -------------------------------------------

def _I_unchecked(tau_sq, b):
    if b > 0:
        log_scale = 0.5 * b * math.log(2.0) + special.gammaln(0.5 * b)
        return math.exp(log_scale) * special.gammaincc(0.5 * b, 0.5 * tau_sq)
    # b <= 0: substitute x = tau^2 + s and keep the exp(-tau^2/2) factor outside
    val, _ = integrate.quad(
        lambda s: (tau_sq + s) ** (0.5 * b - 1) * math.exp(-0.5 * s),
        0, np.inf, epsabs=0, epsrel=1e-12, limit=200,
    )
    return math.exp(-0.5 * tau_sq) * val


def incomplete_I(tau_sq: float, b: float) -> float:
    """Upper integral of x^(b/2 - 1) exp(-x/2) from tau^2 to infinity (tau^2 >= 1)."""
    if tau_sq < 1:
        raise ValueError(f"tau_sq must be >= 1, got {tau_sq}")
    return _I_unchecked(tau_sq, b)


def _normalized_I(tau_sq, B, j):
    # I(tau^2; B + j) / (2^(B/2) Gamma(B/2)), valid for any tau^2 > 0 since B + j > 0
    log_ratio = 0.5 * j * math.log(2.0) + special.gammaln(0.5 * (B + j)) - special.gammaln(0.5 * B)
    return math.exp(log_ratio) * special.gammaincc(0.5 * (B + j), 0.5 * tau_sq)


def chi_partial_moments(tau: float, B: int) -> tuple[float, float]:
    """E[(chi_B - tau)_+] and E[(chi_B - tau)_+^2] from incomplete-I combinations."""
    t2 = tau * tau
    i0 = _normalized_I(t2, B, 0)
    i1 = _normalized_I(t2, B, 1)
    i2 = _normalized_I(t2, B, 2)
    return i1 - tau * i0, i2 - 2 * tau * i1 + t2 * i0


def _max_tau(B):
    lo, hi = 1.0, 60.0
    for _ in range(_BISECT_DEPTH):
        mid = 0.5 * (lo + hi)
        e1, _ = chi_partial_moments(mid, B)
        if e1 > mid * 1e-300:
            lo = mid
        else:
            hi = mid
    return lo


def h_g(tau_sq: float, B: int) -> tuple[float, float]:
    if not tau_sq > 0:
        raise ValueError(f"tau_sq must be positive, got {tau_sq}")
    if B < 1:
        raise ValueError("B must be >= 1")
    tau = math.sqrt(tau_sq)
    e1, e2 = chi_partial_moments(tau, B)
    if not e1 > tau * 1e-300:
        raise ThresholdRangeError(
            f"threshold out of range: tau={tau:.6g} for B={B}; largest usable tau is about {_max_tau(B):.6g}"
        )
    return tau / e1, tau * max(e2, 0.0) / e1


def tau_minimax(epsilon: float, B: int) -> float:
    """Minimax block-soft threshold: the tau with 1 / (1 + h(tau^2, B)) = epsilon."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    target = 1.0 / epsilon - 1.0

    def excess(t):
        return -target if t == 0 else h_g(t * t, B)[0] - target

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
    lo = 0.0
    for _ in range(_BISECT_DEPTH):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def m_bst(epsilon: float, B: int) -> float:
    """Minimax per-coordinate risk of block-soft thresholding over epsilon-sparse priors."""
    tau = tau_minimax(epsilon, B)
    h, g = h_g(tau * tau, B)
    return float((B + tau * tau + g) / (B * (1 + h)))


def r_js_zero(B: int) -> float:
    """(1/B) E|eta_JS(z)|^2 for z ~ N(0, I_B)."""
    if B < 3:
        raise ValueError(f"James-Stein requires B >= 3, got B={B}")
    c = B - 2
    # (1 - c/x)^2 x = (x - c)^2 / x on x > c
    val, _ = integrate.quad(
        lambda x: (x - c) ** 2 / x * stats.chi2.pdf(x, B),
        c, np.inf, epsabs=0, epsrel=1e-12, limit=200,
    )
    return val / B


def m_js(epsilon: float, B: int) -> float:
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    return (1 - epsilon) * r_js_zero(B) + epsilon


def minimax_risk(denoiser: str, epsilon: float, B: int) -> float:
    if denoiser == "bst":
        return m_bst(epsilon, B)
    if denoiser == "js":
        return m_js(epsilon, B)
    raise ValueError(f"unknown denoiser {denoiser!r}")


def extreme_sparsity_asymptotics(epsilon: float, B: int) -> tuple[float, float]:
    """Leading-order threshold sqrt(2 log 1/eps) and risk 2 eps log(1/eps) / B."""
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    L = math.log(1 / epsilon)
    return math.sqrt(2 * L), 2 * epsilon * L / B


def _two_point_value(epsilon, B, a, lam):
    shift = 0.5 * (a * a - lam * lam)

    def integrand(z):
        # 1 / (1 + exp(a z + shift)), computed via expit to avoid overflow
        return special.expit(-(a * z + shift)) ** 2 * math.exp(-0.5 * z * z)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return epsilon * a * a / B * val / math.sqrt(2 * math.pi)


def bayes_two_point_bound(epsilon: float, B: int, a=None) -> float:
    """Lower bound on the global minimax risk from a two-point prior at 0 and a e_1.

    By default ``a^2 = lambda^2 - 2 lambda^(3/2)`` with
    ``lambda = sqrt(2 log((1-eps)/eps))``, which requires ``a^2 > 0``
    (epsilon below about 3.35e-4). ``a="optimal"`` instead maximizes the
    same Bayes-risk contribution over ``a > 0``; any ``a`` gives a valid
    bound. A float ``a`` is used as given.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    lam = math.sqrt(2 * math.log((1 - epsilon) / epsilon))
    if a is None:
        a_sq = lam * lam - 2 * lam**1.5
        if a_sq <= 0:
            raise ValueError(f"epsilon too large for the bound: a^2 = {a_sq:.4g} <= 0")
        return _two_point_value(epsilon, B, math.sqrt(a_sq), lam)
    if a == "optimal":
        hi = 2 * lam + 10
        grid = np.linspace(hi / 200, hi, 200)
        vals = [_two_point_value(epsilon, B, g, lam) for g in grid]
        i = int(np.argmax(vals))
        lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(
            lambda t: -_two_point_value(epsilon, B, t, lam),
            bounds=(lo_b, hi_b), method="bounded", options={"xatol": 1e-10},
        )
        return max(-res.fun, vals[i])
    return _two_point_value(epsilon, B, float(a), lam)


def symmetrize_sampler(nonzero: NonzeroDistribution) -> NonzeroDistribution:
    return Symmetrized(nonzero)


# --- Monte-Carlo risk ----------------------------------------------------

@dataclass
class RiskEstimate:
    matrix: np.ndarray
    scalar: float
    matrix_se: np.ndarray
    scalar_se: float


class _Accumulator:
    def __init__(self, B):
        self.n = 0
        self.outer = np.zeros((B, B))
        self.outer_sq = np.zeros((B, B))
        self.loss = 0.0
        self.loss_sq = 0.0

    def add(self, e):
        B = e.shape[1]
        self.n += e.shape[0]
        self.outer += e.T @ e
        e2 = e * e
        self.outer_sq += e2.T @ e2
        loss = e2.sum(axis=1) / B
        self.loss += loss.sum()
        self.loss_sq += loss @ loss

    def moments(self):
        n = self.n
        mean = self.outer / n
        var = np.maximum(self.outer_sq / n - mean**2, 0.0) / n
        lmean = self.loss / n
        lvar = max(self.loss_sq / n - lmean**2, 0.0) / n
        return mean, var, lmean, lvar


@dataclass
class _Draws:
    """Standard normals for both strata and nonzero means; stored when shared across calls."""

    z0: np.ndarray | None
    z1: np.ndarray | None
    m: np.ndarray | None


def _make_draws(prior, samples, rng):
    B = prior.B
    z0 = rng.standard_normal((samples, B)) if prior.epsilon < 1 else None
    z1 = m = None
    if prior.epsilon > 0:
        m = prior.nonzero.sample(samples, B, rng)
        z1 = rng.standard_normal((samples, B))
    return _Draws(z0, z1, m)


def _risk_from_draws(prior, spec, cov, draws):
    B = prior.B
    eps = prior.epsilon
    acc0, acc1 = _Accumulator(B), _Accumulator(B)
    if draws.z0 is not None:
        for s in range(0, draws.z0.shape[0], _CHUNK):
            y = draws.z0[s:s + _CHUNK] @ cov.half
            acc0.add(eta_colored(spec, y, cov))
    if draws.z1 is not None:
        for s in range(0, draws.z1.shape[0], _CHUNK):
            m = draws.m[s:s + _CHUNK]
            y = m + draws.z1[s:s + _CHUNK] @ cov.half
            acc1.add(eta_colored(spec, y, cov) - m)
    mat = np.zeros((B, B))
    mat_var = np.zeros((B, B))
    scal = scal_var = 0.0
    for w, acc in ((1 - eps, acc0), (eps, acc1)):
        if acc.n:
            mean, var, lmean, lvar = acc.moments()
            mat += w * mean
            mat_var += w * w * var
            scal += w * lmean
            scal_var += w * w * lvar
    mat = (mat + mat.T) / 2
    return RiskEstimate(mat, float(scal), np.sqrt(mat_var), math.sqrt(scal_var))


def _cov_state(Sigma):
    Sigma = np.asarray(Sigma, dtype=float)
    off = Sigma - np.diag(np.diag(Sigma))
    d = np.diag(Sigma)
    if not np.any(off) and np.all(d == d[0]) and d[0] > 0:
        return identity_state(Sigma.shape[0], float(d[0]))
    return make_covariance_state(Sigma, abs_floor=0.0 if np.max(np.linalg.eigvalsh(Sigma)) > 0 else 1e-12)


def risk_mc(prior: SparsePrior, spec, Sigma, samples: int, rng) -> RiskEstimate:
    """Risk matrix E[(eta(m + Sigma^(1/2) z) - m)(...)^T] and its trace / B.

    ``samples`` draws are used in each of the two strata, which are combined
    with weights (1 - epsilon) and epsilon.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    spec.check(prior.B)
    rng = make_rng(rng)
    cov = _cov_state(Sigma)
    draws = _make_draws(prior, samples, rng)
    return _risk_from_draws(prior, spec, cov, draws)


# --- state evolution ----------------------------------------------------

@dataclass
class SETrace:
    kind: str
    values: list
    stderr: list
    delta: float
    converged_to_zero: bool
    initial_stderr: float = 0.0

    def per_coordinate(self) -> np.ndarray:
        """sigma^2_t (scalar) or trace(Sigma_t)/B (matricial) for each t."""
        if self.kind == "scalar":
            return np.array(self.values, dtype=float)
        return np.array([np.trace(v) / v.shape[0] for v in self.values])

    def to_dict(self):
        vals = self.values if self.kind == "scalar" else [np.asarray(v).tolist() for v in self.values]
        return {
            "kind": self.kind,
            "delta": self.delta,
            "converged_to_zero": self.converged_to_zero,
            "values": [v if self.kind == "scalar" else v for v in vals],
            "stderr": [np.asarray(s).tolist() for s in self.stderr],
        }


def _initial_second_moment(prior, rng):
    M = prior.nonzero.second_moment(prior.B)
    if M is not None:
        return prior.epsilon * M, 0.0
    x = prior.nonzero.sample(1_000_000, prior.B, rng)
    M = x.T @ x / x.shape[0]
    se = float(np.std(np.sum(x * x, axis=1) / prior.B) / math.sqrt(x.shape[0]))
    return prior.epsilon * M, prior.epsilon * se


def _se_step(prior, spec, delta, state, kind, draws):
    B = prior.B
    if kind == "scalar":
        est = _risk_from_draws(prior, spec, identity_state(B, state / delta), draws)
        return est.scalar, est.scalar_se
    est = _risk_from_draws(prior, spec, _cov_state(state / delta), draws)
    return est.matrix, est.matrix_se


def _size(state, kind):
    return state if kind == "scalar" else float(np.trace(state)) / state.shape[0]


def se_run(prior: SparsePrior, spec, delta: float, T: int, kind: str = "scalar",
           samples: int = 100_000, rng=None, common_random_numbers: bool = True) -> SETrace:
    """Scalar or matricial state evolution for ``T`` iterations.

    Stops early once the per-coordinate size falls below 1e-12 of its
    initial value. With ``common_random_numbers`` one set of draws is reused
    at every iteration, which makes the recursion a deterministic map.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind not in ("scalar", "matricial"):
        raise ValueError(f"kind must be 'scalar' or 'matricial', got {kind!r}")
    spec.check(prior.B)
    rng = make_rng(rng if rng is not None else 0)
    Sigma0, se0 = _initial_second_moment(prior, rng)
    state = float(np.trace(Sigma0)) / prior.B if kind == "scalar" else Sigma0
    values, errs = [state], [se0]
    start = _size(state, kind)
    draws = _make_draws(prior, samples, rng) if common_random_numbers else None
    converged = False
    for _ in range(T):
        d = draws if draws is not None else _make_draws(prior, samples, rng)
        state, err = _se_step(prior, spec, delta, state, kind, d)
        values.append(state)
        errs.append(err)
        if _size(state, kind) < 1e-12 * start:
            converged = True
            break
    return SETrace(kind, values, errs, delta, converged, se0)


@dataclass
class PTPrediction:
    delta_star: float
    bracket: tuple
    samples: int
    note: str = ""
    evaluations: dict = field(default_factory=dict)


def _se_converges(prior, spec, delta, draws, kind, max_iters, x0, stall_tol=1e-6):
    """Iterate state evolution until it reaches 1e-12 of its start or stalls."""
    state = x0
    start = prev = _size(state, kind)
    for _ in range(max_iters):
        state, _ = _se_step(prior, spec, delta, state, kind, draws)
        cur = _size(state, kind)
        if not math.isfinite(cur):
            return False
        if cur < 1e-12 * start:
            return True
        if cur >= prev * (1 - stall_tol):
            return False
        prev = cur
    return False


def _se_contracts(prior, spec, delta, draws, x0, n_grid=121):
    """f(x) < x on a log grid over [1e-12 x0, x0] for the scalar map f.

    With common random numbers f is a fixed increasing function, so
    iteration from x0 is driven to zero exactly when f has no fixed point
    in (0, x0]. The grid reaches the 1e-12 stopping level of se_run.
    """
    for x in x0 * np.logspace(0, -12, n_grid):
        fx, _ = _se_step(prior, spec, delta, x, "scalar", draws)
        if not fx < x:
            return False
    return True


def predict_pt_se(prior: SparsePrior, spec, B: int, samples: int = 20_000, rng=None,
                  kind: str = "scalar", steps: int = 20, max_iters: int = 5000) -> PTPrediction:
    """Bisect delta in (0, 1) on whether state evolution is driven to zero.

    One set of common random numbers is shared by every delta. For the
    scalar recursion the outcome is decided by checking f(x) < x over
    [1e-12 x0, x0] (see ``_se_contracts``), which is what iterating to
    the 1e-12 level decides, without the slow crawl near the transition.
    The matricial recursion is iterated (up to ``max_iters``); a step that
    fails to shrink the trace by a relative 1e-6 counts as a stall.
    """
    if B != prior.B:
        raise ValueError(f"B={B} does not match prior dimension {prior.B}")
    spec.check(B)
    seed_rng = make_rng(rng if rng is not None else 0)
    Sigma0, _ = _initial_second_moment(prior, seed_rng)
    x0 = float(np.trace(Sigma0)) / B if kind == "scalar" else Sigma0
    for attempt in range(2):
        n_samp = samples * (4 if attempt else 1)
        draws = _make_draws(prior, n_samp, seed_rng)

        def converges(d):
            if kind == "scalar":
                return _se_contracts(prior, spec, d, draws, x0)
            return _se_converges(prior, spec, d, draws, kind, max_iters, x0)

        evals = {0.99: converges(0.99)}
        if not evals[0.99]:
            continue
        lo, hi = 0.0, 1.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            ok = converges(mid)
            evals[mid] = ok
            if ok:
                hi = mid
            else:
                lo = mid
        if any(evals[d] for d in evals if d <= lo) or any(not evals[d] for d in evals if d >= hi):
            continue
        note = f"bracket half-width {0.5 * (hi - lo):.2g}; Monte-Carlo risk map with {n_samp} samples per stratum"
        return PTPrediction(0.5 * (lo + hi), (lo, hi), n_samp, note, evals)
    raise RuntimeError("state-evolution outcomes are not monotone in delta even after widening the sample")
