"""Statistical model: per-sequence densities, mixed-observation densities, priors.

Three density families are supported:

* ``gaussian``  -- f0 = N(0, sigma2), f1 = N(0, sigma2 + P)
* ``tabulated`` -- both densities sampled on one uniform grid (trapezoid-normalised)
* ``discrete``  -- probability mass functions on a uniformly spaced alphabet

The discrete family is what the brute-force oracles in the test-suite run on;
expectations against it are exact finite sums.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

F0, F1 = 0, 1

MIN_TABULATED_POINTS = 16
_TAB_NORM_TOL = 1e-9
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Raised for invalid model or solver configuration."""


def _as_tuple(values) -> tuple:
    return tuple(float(v) for v in np.asarray(values, dtype=float).ravel())


@dataclass(frozen=True)
class Density:
    """A single univariate density (or pmf for ``kind == "discrete"``)."""

    kind: str
    var: float = 0.0
    support: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.var > 0:
                raise ConfigurationError(f"gaussian variance must be > 0, got {self.var}")
        elif self.kind in ("tabulated", "discrete"):
            if len(self.support) != len(self.values) or len(self.support) < 2:
                raise ConfigurationError("support and values must have equal length >= 2")
        else:
            raise ConfigurationError(f"unknown density kind {self.kind!r}")

    # cached numpy views; frozen dataclasses need object.__setattr__
    def _arrays(self):
        cache = self.__dict__.get("_cache")
        if cache is None:
            x = np.asarray(self.support, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if self.kind == "tabulated":
                dx = x[1] - x[0]
                cdf = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dx)])
                cdf /= cdf[-1]
            else:
                dx = x[1] - x[0]
                cdf = np.cumsum(v)
                cdf /= cdf[-1]
            cache = (x, v, dx, cdf)
            object.__setattr__(self, "_cache", cache)
        return cache

    @property
    def std(self) -> float:
        if self.kind == "gaussian":
            return math.sqrt(self.var)
        x, v, dx, _ = self._arrays()
        w = v * (dx if self.kind == "tabulated" else 1.0)
        mean = float(np.sum(w * x) / np.sum(w))
        return math.sqrt(float(np.sum(w * (x - mean) ** 2) / np.sum(w)))

    def pdf(self, x):
        """Density (or pmf) at ``x``; scalar in, float out; array in, array out."""
        if self.kind == "gaussian":
            if isinstance(x, (float, int)):
                return math.exp(-0.5 * x * x / self.var) / math.sqrt(2.0 * math.pi * self.var)
            x = np.asarray(x, dtype=float)
            return np.exp(-0.5 * x * x / self.var) / math.sqrt(2.0 * math.pi * self.var)
        xs, v, dx, _ = self._arrays()
        scalar = np.ndim(x) == 0
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "tabulated":
            out = np.interp(xa, xs, v, left=0.0, right=0.0)
        else:
            k = np.rint((xa - xs[0]) / dx).astype(np.int64)
            hit = (k >= 0) & (k < len(xs))
            hit &= np.abs(xa - (xs[0] + k.clip(0, len(xs) - 1) * dx)) <= 1e-9 * max(1.0, abs(dx))
            out = np.where(hit, v[k.clip(0, len(xs) - 1)], 0.0)
        return float(out[0]) if scalar else out

    def logpdf(self, x):
        if self.kind == "gaussian":
            x = np.asarray(x, dtype=float)
            return -0.5 * x * x / self.var - 0.5 * math.log(self.var) - _LOG_SQRT_2PI
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "gaussian":
            return rng.normal(0.0, math.sqrt(self.var), size)
        xs, v, dx, cdf = self._arrays()
        u = rng.random(size)
        if self.kind == "tabulated":
            return np.interp(u, cdf, xs)
        return xs[np.searchsorted(cdf, u, side="right").clip(0, len(xs) - 1)]


@dataclass(frozen=True)
class DensityPair:
    """The two per-sequence hypotheses f0 (kind F0) and f1 (target F1)."""

    kind: str
    sigma2: float = 1.0
    p: float = 0.0
    support: tuple = ()
    f0_values: tuple = ()
    f1_values: tuple = ()

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.sigma2 > 0:
                raise ConfigurationError(f"sigma2 must be > 0, got {self.sigma2}")
            if not self.p >= 0:
                raise ConfigurationError(f"signal power P must be >= 0, got {self.p}")
        elif self.kind in ("tabulated", "discrete"):
            x = np.asarray(self.support, dtype=float)
            if x.size < 2 or len(self.f0_values) != x.size or len(self.f1_values) != x.size:
                raise ConfigurationError("support and both density vectors must share one length >= 2")
            steps = np.diff(x)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
                raise ConfigurationError("support must be a uniformly spaced increasing grid")
            for name, vals in (("f0", self.f0_values), ("f1", self.f1_values)):
                v = np.asarray(vals, dtype=float)
                if np.any(v < 0) or not np.all(np.isfinite(v)):
                    raise ConfigurationError(f"{name} must be finite and nonnegative")
                if self.kind == "tabulated":
                    mass = float(np.trapezoid(v, x))
                    if abs(mass - 1.0) > _TAB_NORM_TOL:
                        raise ConfigurationError(f"{name} integrates to {mass!r}, expected 1 +- 1e-9")
                else:
                    mass = float(np.sum(v))
                    if abs(mass - 1.0) > 1e-12:
                        raise ConfigurationError(f"{name} pmf sums to {mass!r}")
        else:
            raise ConfigurationError(f"unknown density kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma2: float = 1.0, *, p: Optional[float] = None,
                 snr_db: Optional[float] = None) -> "DensityPair":
        if (p is None) == (snr_db is None):
            raise ConfigurationError("give exactly one of p or snr_db")
        if p is None:
            p = sigma2 * 10.0 ** (snr_db / 10.0)
        return cls("gaussian", sigma2=float(sigma2), p=float(p))

    @classmethod
    def tabulated(cls, grid, f0, f1) -> "DensityPair":
        return cls("tabulated", support=_as_tuple(grid), f0_values=_as_tuple(f0), f1_values=_as_tuple(f1))

    @classmethod
    def discrete(cls, alphabet, f0, f1) -> "DensityPair":
        return cls("discrete", support=_as_tuple(alphabet), f0_values=_as_tuple(f0), f1_values=_as_tuple(f1))

    @property
    def snr_db(self) -> float:
        if self.kind != "gaussian":
            raise ConfigurationError("SNR is defined for the gaussian family only")
        return 10.0 * math.log10(self.p / self.sigma2) if self.p > 0 else -math.inf

    @property
    def f0(self) -> Density:
        if self.kind == "gaussian":
            return Density("gaussian", var=self.sigma2)
        return Density(self.kind, support=self.support, values=self.f0_values)

    @property
    def f1(self) -> Density:
        if self.kind == "gaussian":
            return Density("gaussian", var=self.sigma2 + self.p)
        return Density(self.kind, support=self.support, values=self.f1_values)

    @property
    def uninformative(self) -> bool:
        if self.kind == "gaussian":
            return self.p == 0
        return self.f0_values == self.f1_values

    def log_lr(self, x):
        """log f1(x)/f0(x); +-inf where exactly one density vanishes, 0 where both do."""
        if self.kind == "gaussian":
            a = 0.5 * math.log(self.sigma2 / (self.sigma2 + self.p))
            b = 0.5 * (1.0 / self.sigma2 - 1.0 / (self.sigma2 + self.p))
            if isinstance(x, (float, int)):
                return a + b * x * x
            x = np.asarray(x, dtype=float)
            return a + b * x * x
        f1 = np.asarray(self.f1.pdf(x), dtype=float)
        f0 = np.asarray(self.f0.pdf(x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(f1) - np.log(f0)
        out = np.where((f1 == 0) & (f0 == 0), 0.0, out)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "sigma2": self.sigma2, "p": self.p}
        return {"kind": self.kind, "support": list(self.support),
                "f0": list(self.f0_values), "f1": list(self.f1_values)}

    @classmethod
    def from_dict(cls, d: dict) -> "DensityPair":
        if d["kind"] == "gaussian":
            return cls("gaussian", sigma2=float(d["sigma2"]), p=float(d["p"]))
        return cls(d["kind"], support=_as_tuple(d["support"]),
                   f0_values=_as_tuple(d["f0"]), f1_values=_as_tuple(d["f1"]))


@dataclass(frozen=True)
class MixedDensities:
    """Densities of Z = Y^a + Y^b under (F0,F0), one of each, and (F1,F1)."""

    f00: Density
    fm: Density
    f11: Density

    def by_truth(self, truth_a: int, truth_b: int) -> Density:
        n = truth_a + truth_b
        return (self.f00, self.fm, self.f11)[n]


@dataclass(frozen=True)
class ModelParams:
    pi: float
    c: float
    pair: DensityPair = field(default_factory=lambda: DensityPair.gaussian(1.0, snr_db=3.0))
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise ConfigurationError(f"pi must lie in (0, 1), got {self.pi}")
        if not self.c > 0:
            raise ConfigurationError(f"c must be > 0, got {self.c}")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ConfigurationError("rng_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"pi": self.pi, "c": self.c, "pair": self.pair.to_dict(), "rng_seed": int(self.rng_seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(pi=float(d["pi"]), c=float(d["c"]), pair=DensityPair.from_dict(d["pair"]),
                   rng_seed=int(d.get("rng_seed", 0)))

    def solve_hash(self) -> str:
        """Digest of everything the value surfaces depend on (the seed is excluded)."""
        d = self.to_dict()
        d.pop("rng_seed")
        return stable_hash(d)


def stable_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _convolve(d0: Density, d1: Density) -> Density:
    x, v0, dx, _ = d0._arrays()
    v1 = d1._arrays()[1]
    n = len(x)
    z = 2.0 * x[0] + dx * np.arange(2 * n - 1)
    if d0.kind == "discrete":
        v = np.convolve(v0, v1)
        return Density("discrete", support=_as_tuple(z), values=_as_tuple(v / v.sum()))
    v = np.convolve(v0, v1) * dx
    v = v / np.trapezoid(v, z)
    return Density("tabulated", support=_as_tuple(z), values=_as_tuple(v))


def mixed_densities(params) -> MixedDensities:
    """The three densities of the sum of one sample from each of two sequences.

    Accepts a :class:`ModelParams` or a bare :class:`DensityPair`.
    """
    pair = params.pair if isinstance(params, ModelParams) else params
    if pair.kind == "gaussian":
        s2, p = pair.sigma2, pair.p
        return MixedDensities(Density("gaussian", var=2 * s2), Density("gaussian", var=2 * s2 + p),
                              Density("gaussian", var=2 * s2 + 2 * p))
    if pair.kind == "tabulated" and len(pair.support) < MIN_TABULATED_POINTS:
        raise ConfigurationError(
            f"tabulated support has {len(pair.support)} points; need at least {MIN_TABULATED_POINTS}")
    f0, f1 = pair.f0, pair.f1
    return MixedDensities(_convolve(f0, f0), _convolve(f0, f1), _convolve(f1, f1))


def scan_prior(params):
    """Prior scanning belief (pi^2, 2 pi (1 - pi)) of a fresh pair."""
    from .belief import ScanBelief

    pi = params.pi if isinstance(params, ModelParams) else float(params)
    return ScanBelief(pi * pi, 2.0 * pi * (1.0 - pi))


def sample_pair_truth(params, rng: np.random.Generator) -> tuple[int, int]:
    """Independent labels for a fresh pair; each is F1 with probability pi."""
    pi = params.pi if isinstance(params, ModelParams) else float(params)
    u = rng.random(2)
    return int(u[0] < pi), int(u[1] < pi)


def sample_observation(density: Density, rng: np.random.Generator, size=None):
    return density.sample(rng, size)


def toy_pair() -> DensityPair:
    """Binary-alphabet model used by the exhaustive-enumeration oracles."""
    return DensityPair.discrete([0, 1], [0.8, 0.2], [0.2, 0.8])
