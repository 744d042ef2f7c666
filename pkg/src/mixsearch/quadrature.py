"""Integration rules for expectations over an observation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import ConfigurationError

MASS_DEFICIT_LIMIT = 1e-6


class QuadratureError(ArithmeticError):
    """The rule misses too much probability mass; the integration range must widen."""


@dataclass(frozen=True)
class QuadratureSpec:
    n_points: int = 129
    width: float = 6.0      # half-range in units of the largest standard deviation
    panel_order: int = 4

    def __post_init__(self):
        if self.n_points < 17:
            raise ConfigurationError(f"quadrature needs >= 17 points, got {self.n_points}")
        if not self.width > 0:
            raise ConfigurationError("quadrature width must be positive")
        if self.panel_order < 1:
            raise ConfigurationError("panel order must be >= 1")


@lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def composite_gauss_legendre(n_points: int, a: float, b: float, order: int = 4, edges=None):
    """Panels each carrying a Gauss-Legendre rule; ``n_points`` nodes in total.

    Panels are equal-width on [a, b] unless explicit ``edges`` are given.
    """
    if edges is None:
        n_panels = max(n_points // order, 1)
        edges = np.linspace(a, b, n_panels + 1)
    n_panels = len(edges) - 1
    sizes = [n_points // n_panels + (1 if k < n_points % n_panels else 0) for k in range(n_panels)]
    nodes, weights = [], []
    for k, size in enumerate(sizes):
        x, w = _leggauss(size)
        half = 0.5 * (edges[k + 1] - edges[k])
        mid = 0.5 * (edges[k + 1] + edges[k])
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def graded_gauss_legendre(spec: QuadratureSpec, scales):
    """Rule on +-width*max(scales) whose panels are shared out equally between the
    bands [width*s_k, width*s_{k+1}], so narrow components keep their resolution."""
    bounds = [0.0] + [spec.width * s for s in scales]
    per_side = max(spec.n_points // spec.panel_order // 2, len(scales))
    counts = [per_side // len(scales) + (1 if k < per_side % len(scales) else 0) for k in range(len(scales))]
    right = [0.0]
    for k, n in enumerate(counts):
        right.extend(np.linspace(bounds[k], bounds[k + 1], n + 1)[1:])
    right = np.array(right)
    edges = np.concatenate([-right[:0:-1], right])
    return composite_gauss_legendre(spec.n_points, edges[0], edges[-1], spec.panel_order, edges=edges)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def rule_for(densities, spec: QuadratureSpec):
    """Nodes and weights for integrating against any of ``densities``.

    All densities must be of one kind; tabulated and discrete ones must share
    a support, which then serves as the node set.
    """
    kinds = {d.kind for d in densities}
    if len(kinds) != 1:
        raise ConfigurationError(f"mixed density kinds {kinds}")
    kind = kinds.pop()
    if kind == "gaussian":
        return graded_gauss_legendre(spec, sorted({d.std for d in densities}))
    supports = {d.support for d in densities}
    if len(supports) != 1:
        raise ConfigurationError("densities do not share a support grid")
    x = np.asarray(densities[0].support, dtype=float)
    if kind == "tabulated":
        return x, trapezoid_weights(x)
    return x, np.ones_like(x)


def check_mass(densities, nodes, weights, limit: float = MASS_DEFICIT_LIMIT) -> float:
    """Largest mass deficit of the rule over ``densities``; raises past ``limit``."""
    worst = 0.0
    for d in densities:
        mass = float(np.dot(weights, d.pdf(nodes)))
        worst = max(worst, 1.0 - mass)
    if worst > limit:
        raise QuadratureError(f"quadrature misses {worst:.3g} of the probability mass; widen the range")
    return worst
