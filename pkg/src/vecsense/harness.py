"""Phase-transition experiments: seeded trials, resumable NDJSON grids, LD50 fits.

A grid is (epsilon) x (delta band) x (reps). Each trial draws X, A and Y
from a seed derived from (base_seed, epsilon index, delta index, rep), runs
one solver, and becomes one JSON line. Fitting groups records by epsilon
and locates the 50% success point of a polynomial-logistic regression.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special

from .denoisers import BlockSoft, JamesStein
from .distributions import NonzeroDistribution, StdGaussian, from_dict, parse_dist
from .exceptions import DivergedError, NoTransitionError
from .risk import m_bst, m_js, tau_minimax
from .signal_model import SUCCESS_THRESHOLD, gen_measurement, gen_signal, make_rng, relative_error
from .solvers import SolveOptions, array_amp, group_bp_admm, softsense, steinsense

__all__ = [
    "ALGOS",
    "DeltaBand",
    "GridSpec",
    "TrialSpec",
    "TrialRecord",
    "PTFit",
    "HeatCell",
    "trial_seed",
    "run_trial",
    "grid_trials",
    "run_grid",
    "read_records",
    "fit_logistic_pt",
    "pt_curve",
    "heatmap",
    "write_pt_csv",
    "write_heatmap_csv",
]

ALGOS = ("steinsense", "softsense", "array-amp", "group-bp")

IRLS_MAX_ITERS = 100
IRLS_TOL = 1e-10
IRLS_RIDGE = 1e-8


def _check_algo(algo):
    if algo not in ALGOS:
        raise ValueError(f"unknown algo {algo!r}; choose from {', '.join(ALGOS)}")


def analytic_pt(algo: str, epsilon: float, B: int, denoiser: str | None = None) -> float:
    """Minimax risk of the algorithm's denoiser, the predicted transition."""
    _check_algo(algo)
    if algo == "steinsense" or (algo == "array-amp" and denoiser == "js"):
        return m_js(epsilon, B)
    return m_bst(epsilon, B)


@dataclass
class DeltaBand:
    """Deltas ``center + k * step`` for ``|k * step| <= half_width``.

    ``center`` is "analytic" (the minimax risk at each epsilon), one number,
    or a list with one center per epsilon. ``deltas`` lists explicit values
    and overrides the band.
    """

    center: object = "analytic"
    half_width: float = 0.1
    step: float = 0.02
    deltas: list | None = None

    def values(self, center_value: float) -> list[float]:
        if self.deltas is not None:
            return [float(d) for d in self.deltas]
        if not self.step > 0:
            raise ValueError("delta_band.step must be positive")
        K = int(math.floor(self.half_width / self.step + 1e-9))
        return [round(center_value + k * self.step, 12) for k in range(-K, K + 1)]


@dataclass
class GridSpec:
    algo: str
    N: int
    B: int
    dist: NonzeroDistribution
    epsilons: list
    delta_band: DeltaBand = field(default_factory=DeltaBand)
    reps: int = 20
    base_seed: int = 0
    epsilon_for_tau: float | None = None
    denoiser: str | None = None
    threshold: float = SUCCESS_THRESHOLD
    max_iters: int | None = None

    def __post_init__(self):
        _check_algo(self.algo)
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.N < 1 or self.B < 1:
            raise ValueError("N and B must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        d = dict(d)
        dist = d.get("dist", {"kind": "std_gaussian"})
        d["dist"] = parse_dist(dist) if isinstance(dist, str) else from_dict(dist)
        band = d.get("delta_band", {})
        d["delta_band"] = band if isinstance(band, DeltaBand) else DeltaBand(**band)
        d["epsilons"] = [float(e) for e in d.get("epsilons", [])]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "GridSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def centers(self) -> list[float]:
        c = self.delta_band.center
        if c == "analytic":
            return [analytic_pt(self.algo, e, self.B, self.denoiser) for e in self.epsilons]
        if isinstance(c, (list, tuple)):
            if len(c) != len(self.epsilons):
                raise ValueError("delta_band.center list must have one entry per epsilon")
            return [float(x) for x in c]
        return [float(c)] * len(self.epsilons)

    def deltas(self) -> list[list[float]]:
        """Admissible deltas per epsilon: in (0, 1] with 1 <= round(N delta) <= N."""
        out = []
        for center in self.centers():
            keep = [d for d in self.delta_band.values(center)
                    if 0 < d <= 1 and 1 <= _n_measurements(self.algo, self.N, self.B, d) <= _n_cols(self.algo, self.N, self.B)]
            out.append(keep)
        return out


@dataclass(frozen=True)
class TrialSpec:
    algo: str
    N: int
    B: int
    epsilon: float
    delta: float
    dist: NonzeroDistribution = StdGaussian()
    epsilon_for_tau: float | None = None
    denoiser: str | None = None
    threshold: float = SUCCESS_THRESHOLD
    max_iters: int | None = None


@dataclass
class TrialRecord:
    algo: str
    N: int
    B: int
    epsilon: float
    delta: float
    n: int
    dist: dict
    rep: int
    seed: int
    success: bool
    rel_error: float | None
    diverged: bool
    iters: int
    converged: bool
    wall_ms: float

    def to_dict(self) -> dict:
        return asdict(self)

    def key(self):
        return (self.epsilon, self.delta, self.rep)


def trial_seed(base_seed: int, i_eps: int, i_delta: int, rep: int) -> int:
    """64-bit seed addressed by grid position, independent of execution order."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(i_eps, i_delta, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _n_cols(algo, N, B):
    return N * B if algo == "array-amp" else N


def _n_measurements(algo, N, B, delta):
    return _round_half_up(_n_cols(algo, N, B) * delta)


def _solve(spec: TrialSpec, rng, X):
    N, B = X.shape
    n = _n_measurements(spec.algo, N, B, spec.delta)
    eps_tau = spec.epsilon_for_tau if spec.epsilon_for_tau is not None else spec.epsilon
    if spec.algo == "array-amp":
        A = gen_measurement(N * B, n, rng)
        den = JamesStein() if spec.denoiser == "js" else BlockSoft(tau_minimax(eps_tau, B))
        opts = SolveOptions(max_iters=spec.max_iters or 300)
        return n, array_amp(A, A @ X.ravel(), den, B, opts)
    A = gen_measurement(N, n, rng)
    Y = A @ X
    if spec.algo == "steinsense":
        return n, steinsense(A, Y, SolveOptions(max_iters=spec.max_iters or 300))
    if spec.algo == "softsense":
        return n, softsense(A, Y, eps_tau, SolveOptions(max_iters=spec.max_iters or 300))
    return n, group_bp_admm(A, Y, SolveOptions(max_iters=spec.max_iters or 5000, converge_tol=1e-9))


def run_trial(spec: TrialSpec, seed: int, rep: int = 0) -> TrialRecord:
    """One experiment; a pure function of (spec, seed) apart from wall_ms.

    A diverging solver becomes a failed record with ``rel_error=None``.
    """
    _check_algo(spec.algo)
    if spec.algo == "steinsense" or spec.denoiser == "js":
        JamesStein().check(spec.B)
    t0 = time.perf_counter()
    rng = make_rng(seed)
    sig = gen_signal(spec.N, spec.B, spec.epsilon, spec.dist, rng)
    n = _n_measurements(spec.algo, spec.N, spec.B, spec.delta)
    try:
        n, res = _solve(spec, rng, sig.X)
        err, ok = relative_error(res.Xhat, sig.X, spec.threshold)
        diverged, iters, conv = False, res.iters, res.converged
    except DivergedError as exc:
        err, ok, diverged, iters, conv = None, False, True, exc.iteration, False
    wall = (time.perf_counter() - t0) * 1e3
    return TrialRecord(spec.algo, spec.N, spec.B, spec.epsilon, spec.delta, n, spec.dist.to_dict(),
                       rep, int(seed), bool(ok), err, diverged, int(iters), bool(conv), round(wall, 3))


def grid_trials(grid: GridSpec):
    """(key, TrialSpec, seed, rep) for every cell of the grid, in grid order."""
    for i_e, (eps, deltas) in enumerate(zip(grid.epsilons, grid.deltas())):
        for i_d, delta in enumerate(deltas):
            spec = TrialSpec(grid.algo, grid.N, grid.B, eps, delta, grid.dist,
                             grid.epsilon_for_tau, grid.denoiser, grid.threshold, grid.max_iters)
            for rep in range(grid.reps):
                yield (eps, delta, rep), spec, trial_seed(grid.base_seed, i_e, i_d, rep), rep


def read_records(path, repair: bool = False) -> list[dict]:
    """Parse an NDJSON record file.

    A final line without its newline that does not parse is an interrupted
    write and is dropped (and cut from the file when ``repair``). Any other
    malformed line raises ``ValueError`` naming its line number.
    """
    if not os.path.exists(path):
        return []
    with open(path, "rb") as fh:
        data = fh.read()
    *complete, tail = data.split(b"\n")
    records = []
    for lineno, raw in enumerate(complete, start=1):
        if not raw.strip():
            continue
        rec = _parse_line(raw)
        if rec is None:
            raise ValueError(f"{path}:{lineno}: malformed record")
        records.append(rec)
    if tail.strip():
        rec = _parse_line(tail)
        if rec is not None:
            records.append(rec)
        if repair:
            with open(path, "r+b") as fh:
                if rec is None:
                    fh.truncate(len(data) - len(tail))
                else:
                    fh.seek(0, os.SEEK_END)
                    fh.write(b"\n")
    return records


def _parse_line(raw):
    try:
        rec = json.loads(raw)
    except ValueError:
        return None
    return rec if isinstance(rec, dict) else None


def _record_key(rec):
    return (float(rec["epsilon"]), float(rec["delta"]), int(rec["rep"]))


def _exec(args):
    spec, seed, rep = args
    return run_trial(spec, seed, rep).to_dict()


def run_grid(grid: GridSpec, parallelism: int, out_path) -> int:
    """Run every grid cell not yet present in ``out_path``; return records appended."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    done = {_record_key(r) for r in read_records(out_path, repair=True)}
    todo = [(spec, seed, rep) for key, spec, seed, rep in grid_trials(grid) if key not in done]
    if not todo:
        if not os.path.exists(out_path):
            open(out_path, "a").close()
        return 0
    written = 0
    with open(out_path, "a") as fh:
        def emit(rec):
            nonlocal written
            fh.write(json.dumps(rec) + "\n")
            fh.flush()
            written += 1

        if parallelism == 1:
            for item in todo:
                emit(_exec(item))
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                for rec in pool.map(_exec, todo, chunksize=max(1, len(todo) // (8 * parallelism))):
                    emit(rec)
    return written


# --- LD50 fitting -----------------------------------------------------------

@dataclass
class PTFit:
    epsilon: float
    degree: int
    coefficients: list
    delta_pt: float
    n_points: int
    separable_flag: bool
    out_of_range: bool = False
    center: float = 0.0
    scale: float = 1.0
    iterations: int = 0

    def predict(self, delta):
        """Fitted success probability at ``delta``."""
        z = (np.asarray(delta, dtype=float) - self.center) / self.scale
        return special.expit(np.polyval(self.coefficients[::-1], z))


def _irls(F, r):
    beta = np.zeros(F.shape[1])
    ridge = IRLS_RIDGE * np.eye(F.shape[1])
    it = 0
    for it in range(1, IRLS_MAX_ITERS + 1):
        p = special.expit(F @ beta)
        w = np.maximum(p * (1 - p), 1e-300)
        grad = F.T @ (r - p) - IRLS_RIDGE * beta
        hess = (F * w[:, None]).T @ F + ridge
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) <= IRLS_TOL * max(1.0, np.max(np.abs(beta))):
            break
    return beta, it


def _separable(delta, r):
    if not r.any() or r.all():
        return False
    return bool(delta[r == 0].max() < delta[r == 1].min() or delta[r == 1].max() < delta[r == 0].min())


def fit_logistic_pt(records, degree: int = 1) -> PTFit:
    """Logistic regression of success on a polynomial in delta; returns the 50% point.

    delta is standardized before building the features. For degree > 1 the
    returned point is the root of the fitted polynomial in [0, 1] closest to
    the degree-1 estimate.
    """
    if degree not in (1, 2, 3):
        raise ValueError("degree must be 1, 2 or 3")
    recs = sorted(records, key=lambda r: (float(r["delta"]), bool(r["success"]), int(r.get("rep", 0))))
    if not recs:
        raise ValueError("no records to fit")
    eps_set = {float(r["epsilon"]) for r in recs}
    if len(eps_set) != 1:
        raise ValueError(f"records span {len(eps_set)} epsilon values; fit one at a time")
    delta = np.array([float(r["delta"]) for r in recs])
    r = np.array([1.0 if r["success"] else 0.0 for r in recs])
    n_distinct = len(np.unique(delta))
    if n_distinct < degree + 2:
        raise ValueError(f"need at least {degree + 2} distinct delta values, got {n_distinct}")
    if not r.any() or r.all():
        raise NoTransitionError("no transition in band: all outcomes are "
                                + ("successes" if r.all() else "failures") + "; widen the delta band")
    center = float(delta.mean())
    scale = float(delta.std()) or 1.0
    z = (delta - center) / scale
    beta1, it1 = _irls(np.vander(z, 2, increasing=True), r)
    d1 = center + scale * (-beta1[0] / beta1[1]) if beta1[1] != 0 else math.nan
    if degree == 1:
        beta, it, d_pt = beta1, it1, d1
    else:
        beta, it = _irls(np.vander(z, degree + 1, increasing=True), r)
        d_pt = _nearest_root(beta, center, scale, d1)
    out = not (math.isfinite(d_pt) and 0 < d_pt < 1)
    return PTFit(eps_set.pop(), degree, [float(b) for b in beta], float(d_pt), len(recs),
                 _separable(delta, r), out, center, scale, it)


def _nearest_root(beta, center, scale, target):
    def poly(d):
        return np.polyval(beta[::-1], (d - center) / scale)

    grid = np.linspace(0.0, 1.0, 2001)
    vals = poly(grid)
    roots = [float(g) for g, v in zip(grid, vals) if v == 0]
    for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if va * vb < 0:
            roots.append(optimize.brentq(poly, a, b, xtol=1e-14))
    if not roots:
        return math.nan
    ref = target if math.isfinite(target) else 0.5
    return min(roots, key=lambda x: (abs(x - ref), x))


def pt_curve(records, degree: int = 1):
    """Fit every epsilon group; returns (fits sorted by epsilon, epsilons without a transition)."""
    groups: dict[float, list] = {}
    for rec in records:
        groups.setdefault(float(rec["epsilon"]), []).append(rec)
    fits, skipped = [], []
    for eps in sorted(groups):
        try:
            fits.append(fit_logistic_pt(groups[eps], degree))
        except NoTransitionError:
            skipped.append(eps)
    return fits, skipped


@dataclass(frozen=True)
class HeatCell:
    epsilon: float
    delta: float
    success_fraction: float
    n_trials: int


def heatmap(records) -> list[HeatCell]:
    counts: dict[tuple, list] = {}
    for rec in records:
        c = counts.setdefault((float(rec["epsilon"]), float(rec["delta"])), [0, 0])
        c[0] += bool(rec["success"])
        c[1] += 1
    return [HeatCell(e, d, s / n, n) for (e, d), (s, n) in sorted(counts.items())]


def write_pt_csv(fits, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "delta_pt", "degree", "n_points"])
        for f in fits:
            w.writerow([repr(f.epsilon), repr(f.delta_pt), f.degree, f.n_points])


def write_heatmap_csv(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "delta", "success_fraction", "n_trials"])
        for c in cells:
            w.writerow([repr(c.epsilon), repr(c.delta), repr(c.success_fraction), c.n_trials])
