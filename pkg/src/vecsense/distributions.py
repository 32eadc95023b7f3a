"""Distributions for the nonzero rows of a row-sparse signal.

Every distribution draws ``k`` iid rows in R^B through ``sample(k, B, rng)``
and serializes to a ``{"kind": ..., params...}`` dict. Where a closed form
exists, ``second_moment(B)`` returns E[x x^T] for one nonzero row; otherwise
it returns ``None`` and callers fall back to Monte Carlo.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

__all__ = [
    "NonzeroDistribution",
    "StdGaussian",
    "AbsGaussian",
    "Exponential",
    "PoissonHetero",
    "BinarySigned",
    "TernaryZeroSigned",
    "PerColumnMix",
    "ScalarDist",
    "SphereShell",
    "Symmetrized",
    "from_dict",
    "parse_dist",
]

_REGISTRY: dict[str, type] = {}


def _register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


class NonzeroDistribution:
    kind: ClassVar[str] = ""

    def validate(self, B: int) -> None:
        if B < 1:
            raise ValueError("B must be >= 1")

    def sample(self, k: int, B: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def second_moment(self, B: int) -> np.ndarray | None:
        return None

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def _iid_moment(mean: np.ndarray, second: np.ndarray) -> np.ndarray:
    # independent coordinates: off-diagonal E[x_i x_j] = mean_i mean_j
    M = np.outer(mean, mean)
    np.fill_diagonal(M, second)
    return M


@_register
@dataclass(frozen=True)
class StdGaussian(NonzeroDistribution):
    kind: ClassVar[str] = "std_gaussian"

    def sample(self, k, B, rng):
        return rng.standard_normal((k, B))

    def second_moment(self, B):
        return np.eye(B)


@_register
@dataclass(frozen=True)
class AbsGaussian(NonzeroDistribution):
    kind: ClassVar[str] = "abs_gaussian"

    def sample(self, k, B, rng):
        return np.abs(rng.standard_normal((k, B)))

    def second_moment(self, B):
        return _iid_moment(np.full(B, math.sqrt(2 / math.pi)), np.ones(B))


@_register
@dataclass(frozen=True)
class Exponential(NonzeroDistribution):
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def validate(self, B):
        super().validate(B)
        _positive("rate", self.rate)

    def sample(self, k, B, rng):
        self.validate(B)
        return rng.exponential(1.0 / self.rate, size=(k, B))

    def second_moment(self, B):
        return _iid_moment(np.full(B, 1 / self.rate), np.full(B, 2 / self.rate**2))

    def params(self):
        return {"rate": self.rate}


@_register
@dataclass(frozen=True)
class PoissonHetero(NonzeroDistribution):
    """Column j is Poisson(rates[j]); ``rates=None`` means rates 1..B."""

    rates: tuple | None = None
    kind: ClassVar[str] = "poisson_hetero"

    def _rates(self, B):
        rates = np.arange(1, B + 1, dtype=float) if self.rates is None else np.asarray(self.rates, float)
        if rates.shape != (B,):
            raise ValueError(f"poisson_hetero has {rates.size} rates but B={B}")
        return rates

    def validate(self, B):
        super().validate(B)
        if np.any(self._rates(B) <= 0):
            raise ValueError("poisson rates must be positive")

    def sample(self, k, B, rng):
        self.validate(B)
        return rng.poisson(self._rates(B), size=(k, B)).astype(float)

    def second_moment(self, B):
        lam = self._rates(B)
        return _iid_moment(lam, lam + lam**2)

    def params(self):
        return {"rates": None if self.rates is None else list(self.rates)}


@_register
@dataclass(frozen=True)
class BinarySigned(NonzeroDistribution):
    magnitude: float = 1.0
    kind: ClassVar[str] = "binary_signed"

    def sample(self, k, B, rng):
        return self.magnitude * rng.choice([-1.0, 1.0], size=(k, B))

    def second_moment(self, B):
        return self.magnitude**2 * np.eye(B)

    def params(self):
        return {"magnitude": self.magnitude}


@_register
@dataclass(frozen=True)
class TernaryZeroSigned(NonzeroDistribution):
    """Each coordinate uniform on {-a, 0, +a}."""

    magnitude: float = 1.0
    kind: ClassVar[str] = "ternary_zero_signed"

    def sample(self, k, B, rng):
        return self.magnitude * rng.choice([-1.0, 0.0, 1.0], size=(k, B))

    def second_moment(self, B):
        return (2 / 3) * self.magnitude**2 * np.eye(B)

    def params(self):
        return {"magnitude": self.magnitude}


@dataclass(frozen=True)
class ScalarDist:
    """One-dimensional distribution used as a column of :class:`PerColumnMix`.

    Supported kinds and their parameters::

        normal(loc=0, scale=1)      logistic(loc=0, scale=1)
        laplace(loc=0, scale=1)     student_t(df)
        triangular(left, mode, right)
        exponential(rate=1)         poisson(rate=1)
        abs_normal(scale=1)         uniform(low, high)
    """

    kind: str
    params: dict = field(default_factory=dict)

    _DEFAULTS: ClassVar[dict] = {
        "normal": {"loc": 0.0, "scale": 1.0},
        "logistic": {"loc": 0.0, "scale": 1.0},
        "laplace": {"loc": 0.0, "scale": 1.0},
        "student_t": {"df": 5.0},
        "triangular": {"left": -1.0, "mode": 0.0, "right": 1.0},
        "exponential": {"rate": 1.0},
        "poisson": {"rate": 1.0},
        "abs_normal": {"scale": 1.0},
        "uniform": {"low": -1.0, "high": 1.0},
    }

    def __post_init__(self):
        if self.kind not in self._DEFAULTS:
            raise ValueError(f"unknown scalar distribution {self.kind!r}")
        p = {**self._DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", p)
        for name in ("scale", "rate", "df"):
            if name in p:
                _positive(name, p[name])

    def sample(self, k, rng):
        p = self.params
        if self.kind == "normal":
            return rng.normal(p["loc"], p["scale"], k)
        if self.kind == "logistic":
            return rng.logistic(p["loc"], p["scale"], k)
        if self.kind == "laplace":
            return rng.laplace(p["loc"], p["scale"], k)
        if self.kind == "student_t":
            return rng.standard_t(p["df"], k)
        if self.kind == "triangular":
            return rng.triangular(p["left"], p["mode"], p["right"], k)
        if self.kind == "exponential":
            return rng.exponential(1 / p["rate"], k)
        if self.kind == "poisson":
            return rng.poisson(p["rate"], k).astype(float)
        if self.kind == "abs_normal":
            return np.abs(rng.normal(0.0, p["scale"], k))
        return rng.uniform(p["low"], p["high"], k)

    def moments(self) -> tuple[float, float] | None:
        """(mean, E[x^2]), or None when the second moment is infinite."""
        p = self.params
        if self.kind in ("normal",):
            return p["loc"], p["loc"] ** 2 + p["scale"] ** 2
        if self.kind == "logistic":
            return p["loc"], p["loc"] ** 2 + (math.pi * p["scale"]) ** 2 / 3
        if self.kind == "laplace":
            return p["loc"], p["loc"] ** 2 + 2 * p["scale"] ** 2
        if self.kind == "student_t":
            return (0.0, p["df"] / (p["df"] - 2)) if p["df"] > 2 else None
        if self.kind == "triangular":
            a, c, b = p["left"], p["mode"], p["right"]
            mean = (a + b + c) / 3
            var = (a * a + b * b + c * c - a * b - a * c - b * c) / 18
            return mean, mean**2 + var
        if self.kind == "exponential":
            return 1 / p["rate"], 2 / p["rate"] ** 2
        if self.kind == "poisson":
            return p["rate"], p["rate"] + p["rate"] ** 2
        if self.kind == "abs_normal":
            return p["scale"] * math.sqrt(2 / math.pi), p["scale"] ** 2
        lo, hi = p["low"], p["high"]
        return (lo + hi) / 2, (lo * lo + lo * hi + hi * hi) / 3

    def to_dict(self):
        return {"kind": self.kind, **self.params}


@_register
@dataclass(frozen=True)
class PerColumnMix(NonzeroDistribution):
    columns: tuple = ()
    kind: ClassVar[str] = "per_column_mix"

    def validate(self, B):
        super().validate(B)
        if len(self.columns) != B:
            raise ValueError(f"per_column_mix describes {len(self.columns)} columns but B={B}")

    def sample(self, k, B, rng):
        self.validate(B)
        return np.column_stack([c.sample(k, rng) for c in self.columns])

    def second_moment(self, B):
        self.validate(B)
        mom = [c.moments() for c in self.columns]
        if any(m is None for m in mom):
            return None
        mean, second = map(np.array, zip(*mom))
        return _iid_moment(mean, second)

    def params(self):
        return {"columns": [c.to_dict() for c in self.columns]}


@_register
@dataclass(frozen=True)
class SphereShell(NonzeroDistribution):
    """Uniform on the sphere of the given radius in R^B."""

    radius: float = 1.0
    kind: ClassVar[str] = "sphere_shell"

    def validate(self, B):
        super().validate(B)
        _positive("radius", self.radius)

    def sample(self, k, B, rng):
        self.validate(B)
        g = rng.standard_normal((k, B))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        return self.radius * g / norms

    def second_moment(self, B):
        return (self.radius**2 / B) * np.eye(B)

    def params(self):
        return {"radius": self.radius}


@_register
@dataclass(frozen=True)
class Symmetrized(NonzeroDistribution):
    """Random coordinate signs and a random coordinate permutation applied to ``base``.

    This is an exact sampler for the uniform mixture of the base law over
    all 2^B sign patterns and B! coordinate orders.
    """

    base: NonzeroDistribution = field(default_factory=StdGaussian)
    kind: ClassVar[str] = "symmetrized"

    def validate(self, B):
        self.base.validate(B)

    def sample(self, k, B, rng):
        x = self.base.sample(k, B, rng)
        signs = rng.choice([-1.0, 1.0], size=(k, B))
        order = rng.permuted(np.tile(np.arange(B), (k, 1)), axis=1)
        return np.take_along_axis(x * signs, order, axis=1)

    def second_moment(self, B):
        M = self.base.second_moment(B)
        if M is None:
            return None
        return (np.trace(M) / B) * np.eye(B)

    def params(self):
        return {"base": self.base.to_dict()}


def from_dict(d: dict) -> NonzeroDistribution:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _REGISTRY:
        raise ValueError(f"unknown distribution kind {kind!r}")
    cls = _REGISTRY[kind]
    if cls is PerColumnMix:
        cols = []
        for c in d.get("columns", []):
            c = dict(c)
            cols.append(ScalarDist(c.pop("kind"), c))
        return PerColumnMix(tuple(cols))
    if cls is Symmetrized:
        return Symmetrized(from_dict(d["base"]))
    if cls is PoissonHetero and d.get("rates") is not None:
        d["rates"] = tuple(d["rates"])
    return cls(**d)


_ALIASES = {
    "gaussian": "std_gaussian",
    "normal": "std_gaussian",
    "abs": "abs_gaussian",
    "exp": "exponential",
    "poisson": "poisson_hetero",
    "binary": "binary_signed",
    "ternary": "ternary_zero_signed",
    "sphere": "sphere_shell",
}

_FIRST_PARAM = {
    "exponential": "rate",
    "binary_signed": "magnitude",
    "ternary_zero_signed": "magnitude",
    "sphere_shell": "radius",
}


def parse_dist(text: str) -> NonzeroDistribution:
    """Parse a CLI distribution spec: a JSON object, or ``kind[:param]``.

    >>> parse_dist("sphere:1e6").to_dict()
    {'kind': 'sphere_shell', 'radius': 1000000.0}
    """
    text = text.strip()
    if text.startswith("{"):
        return from_dict(json.loads(text))
    kind, _, arg = text.partition(":")
    kind = _ALIASES.get(kind, kind)
    if kind == "symmetrized":
        return Symmetrized(parse_dist(arg or "std_gaussian"))
    if not arg:
        return from_dict({"kind": kind})
    if kind == "poisson_hetero":
        return PoissonHetero(tuple(float(r) for r in arg.split(",")))
    if kind not in _FIRST_PARAM:
        raise ValueError(f"distribution {kind!r} takes no parameter")
    return from_dict({"kind": kind, _FIRST_PARAM[kind]: float(arg)})
