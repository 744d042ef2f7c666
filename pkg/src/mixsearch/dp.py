"""Value iteration for the refinement, scanning and single-observation problems.

Refinement
    Along a refinement trajectory started at scanning belief (p11, pmix) the
    belief is ``embed(origin, log_lr)``, so V_r restricted to one origin is a
    function of the cumulative log-likelihood ratio alone.  Every origin node of
    the triangular grid gets its own 1-D problem on a shared log-ratio grid.
    The transition "add log l(X)" has one kernel per true density, identical
    for all origins, so a sweep over all origins is one matrix product.

Scanning
    The map V_s -> A_c is linear (quadrature against the predictive density of
    Z, then barycentric interpolation of V_s at the updated beliefs) and is
    assembled once as a sparse matrix.

Single observation
    The baseline posterior is tracked in log-odds, where an observation again
    adds log l(X) and a switch resets to the prior log-odds.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .belief import ScanBelief, embed, embed_arrays, marginals, scan_update
from .grid import LogGrid, TriangularGrid, ValueSurface
from .model import ConfigurationError, ModelParams, mixed_densities, scan_prior
from .quadrature import MASS_DEFICIT_LIMIT, QuadratureError, QuadratureSpec, check_mass, rule_for

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, what: str, iterations: int, residual: float):
        super().__init__(f"{what} did not converge in {iterations} sweeps (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SolverSettings:
    grid_m: int = 201
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    tol: float = 1e-7
    max_iter: int = 20000
    loglr_bound: float = 40.0
    loglr_points: int = 401

    def __post_init__(self):
        if self.grid_m < 2:
            raise ConfigurationError(f"grid_m must be >= 2, got {self.grid_m}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not self.loglr_bound > 0:
            raise ConfigurationError("loglr_bound must be positive")
        if self.loglr_points < 3 or self.loglr_points % 2 == 0:
            raise ConfigurationError("loglr_points must be odd and >= 3 so that log_lr = 0 is a node")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSettings":
        d = dict(d)
        d["quad"] = QuadratureSpec(**d.get("quad", {}))
        return cls(**d)

    @property
    def loglr_grid(self) -> LogGrid:
        return LogGrid.symmetric(self.loglr_bound, self.loglr_points)


@dataclass
class RefinementSolution:
    g_surface: ValueSurface
    loglr: LogGrid
    values: np.ndarray           # V_r along each origin's ray, shape (nodes, loglr points)
    continuation: np.ndarray     # c + E[V_r(next) | current], same shape
    iterations: int
    residual: float
    max_increase: float

    @property
    def grid(self) -> TriangularGrid:
        return self.g_surface.grid


@dataclass
class ScanningSolution:
    vs_surface: ValueSurface
    ac_surface: ValueSurface
    a_s: float
    iterations: int
    residual: float
    max_increase: float


@dataclass
class BaselineSolution:
    grid: LogGrid                # log-odds of the current sequence, centred at logit(pi)
    values: np.ndarray
    expected_next: np.ndarray    # E[V_b(next) | continue]
    a_switch: float              # E[V_b(next) | switch], a constant
    stop_threshold: float        # pi_U: smallest posterior from which stopping is optimal
    switch_below: float          # largest posterior at which switching is optimal (nan if none)
    iterations: int
    residual: float
    max_increase: float

    @property
    def posteriors(self) -> np.ndarray:
        return _sigmoid(self.grid.nodes)

    def value_at(self, posterior: float) -> float:
        return float(self.grid.interpolate(self.values, _logit(posterior)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


# --------------------------------------------------------------------------
# kernels


def loglr_kernels(pair, lam: LogGrid, quad: QuadratureSpec):
    """Row-stochastic matrices K0, K1 with (K_i V)[k] ~ E_{X ~ f_i}[V(node_k + log l(X))]."""
    f0, f1 = pair.f0, pair.f1
    x, w = rule_for([f0, f1], quad)
    check_mass([f0, f1], x, w)
    d0 = w * f0.pdf(x)
    d1 = w * f1.pdf(x)
    keep = (d0 > 0) | (d1 > 0)
    x, d0, d1 = x[keep], d0[keep], d1[keep]
    far = 2.0 * lam.bound + 10.0 * lam.step
    s = np.clip(np.nan_to_num(pair.log_lr(x), posinf=far, neginf=-far), -far, far)
    n = lam.n
    lo, fr = lam.weights(lam.nodes[:, None] + s[None, :])
    rows = np.broadcast_to(np.arange(n)[:, None], lo.shape)
    kernels = []
    for d in (d0, d1):
        vals = np.concatenate([(d * (1.0 - fr)).ravel(), (d * fr).ravel()])
        cols = np.concatenate([lo.ravel(), lo.ravel() + 1])
        k = np.zeros(n * n)
        np.add.at(k, np.concatenate([rows.ravel(), rows.ravel()]) * n + cols, vals)
        kernels.append(k.reshape(n, n) / d.sum())
    return kernels[0], kernels[1]


def scanning_kernel(mixed, grid: TriangularGrid, quad: QuadratureSpec, points=None):
    """Sparse matrix W with (W V)[k] = E_Z[V(scan_update(point_k, Z))].

    ``points`` defaults to the grid nodes; pass (p11, pmix) arrays to get rows
    for arbitrary beliefs (the prior row, for instance).
    """
    dens = [mixed.f00, mixed.fm, mixed.f11]
    z, w = rule_for(dens, quad)
    check_mass(dens, z, w)
    if points is None:
        p11, pmix = grid.p11, grid.pmix
    else:
        p11, pmix = (np.atleast_1d(np.asarray(a, dtype=float)) for a in points)
    f00z, fmz, f11z = (d.pdf(z) for d in dens)
    P11 = p11[:, None]
    PM = pmix[:, None]
    P00 = np.maximum(1.0 - P11 - PM, 0.0)
    w11 = P11 * f11z
    wm = PM * fmz
    fz = w11 + wm + P00 * f00z
    weight = w[None, :] * fz
    mass = weight.sum(axis=1)
    deficit = float(np.max(1.0 - mass))
    if deficit > MASS_DEFICIT_LIMIT:
        raise QuadratureError(f"predictive mass deficit {deficit:.3g}; widen the range")
    ok = fz > 0
    safe = np.where(ok, fz, 1.0)
    u11 = np.where(ok, w11 / safe, 0.0)
    um = np.where(ok, wm / safe, 0.0)
    rows = np.repeat(np.arange(len(p11)), len(z))
    mat = grid.interp_matrix(u11, um, row_weights=weight / mass[:, None], n_rows=len(p11), row_of=rows)
    mat.eliminate_zeros()
    return mat


def interpolation_tolerance(surface: ValueSurface) -> float:
    """Bound h^2/8 * max|f''| on linear-interpolation error, curvature from node data."""
    worst = 0.0
    for d in TriangularGrid.DIRECTIONS:
        _, dd = surface.grid.second_differences(surface.values, d)
        if dd.size:
            worst = max(worst, float(np.max(np.abs(dd))))
    return worst / 8.0


# --------------------------------------------------------------------------
# refinement


def refinement_rays(grid: TriangularGrid, lam: LogGrid):
    """Stop cost and pi^a on every (origin node, log-ratio node) pair."""
    r11, r10, r01 = embed_arrays(grid.p11[:, None], grid.pmix[:, None], lam.nodes[None, :])
    pa = r11 + r10
    pb = r11 + r01
    return 1.0 - np.maximum(pa, pb), pa


def solve_refinement(params: ModelParams, mixed=None, settings: SolverSettings = SolverSettings(),
                     *, horizon: Optional[int] = None) -> RefinementSolution:
    """Solve V_r = min{1 - max(pi^a, pi^b), c + E[V_r(next)]} for every origin node.

    With ``horizon`` set, exactly that many sweeps are applied to the stop
    cost (the horizon-truncated problem); otherwise sweeps run until the
    sup-norm change drops below ``settings.tol``.
    """
    if settings.grid_m < 20 and horizon is None:
        raise ConfigurationError("refinement grid needs M >= 20")
    t0 = time.perf_counter()
    grid = TriangularGrid(settings.grid_m)
    lam = settings.loglr_grid
    k0, k1 = loglr_kernels(params.pair, lam, settings.quad)
    stop, pa = refinement_rays(grid, lam)
    n = lam.n
    kt = np.ascontiguousarray(np.concatenate([k1.T, k0.T], axis=1))
    c = params.c
    V = stop.copy()
    cont = np.full_like(V, np.inf)
    max_inc = -np.inf
    resid = np.inf
    limit = horizon if horizon is not None else settings.max_iter
    it = 0
    for it in range(1, limit + 1):
        e = V @ kt
        e1 = e[:, :n]
        e0 = e[:, n:]
        np.subtract(e1, e0, out=e1)
        np.multiply(e1, pa, out=e1)
        np.add(e1, e0, out=e1)
        e1 += c
        cont = e1
        new = np.minimum(stop, cont)
        diff = new - V
        resid = float(np.max(np.abs(diff)))
        max_inc = max(max_inc, float(np.max(diff)))
        V = new
        if horizon is None and resid < settings.tol:
            break
    else:
        if horizon is None:
            raise ConvergenceError("refinement value iteration", it, resid)
    cont = np.ascontiguousarray(cont)
    g = V[:, lam.center_index].copy()
    g[grid.index(0, 0)] = 1.0
    g[grid.index(grid.m, 0)] = 0.0
    meta = {"params_hash": params.solve_hash(), "iterations": it, "residual": resid,
            "tol": settings.tol, "quad": asdict(settings.quad), "seconds": time.perf_counter() - t0}
    log.info("refinement: %d sweeps, residual %.2e, %.1fs", it, resid, meta["seconds"])
    return RefinementSolution(ValueSurface(grid, g, meta), lam, V, cont, it, resid, max_inc)


# --------------------------------------------------------------------------
# scanning


def solve_scanning(params: ModelParams, mixed, refinement: RefinementSolution,
                   settings: SolverSettings = SolverSettings(), *,
                   horizon: Optional[int] = None) -> ScanningSolution:
    """Solve V_s = min{g, c + min{A_c, A_s}} with A_s = A_c(prior), refreshed every sweep."""
    grid = refinement.grid
    if grid.m != settings.grid_m:
        raise ConfigurationError(f"g solved on M={grid.m}, scanning requested M={settings.grid_m}")
    t0 = time.perf_counter()
    if mixed is None:
        mixed = mixed_densities(params)
    W = scanning_kernel(mixed, grid, settings.quad)
    prior = scan_prior(params)
    w0 = scanning_kernel(mixed, grid, settings.quad, points=(prior.p11, prior.pmix))
    g = refinement.g_surface.values
    c = params.c
    V = g.copy()
    ac, a_s = V, math.nan
    max_inc = -np.inf
    resid = np.inf
    limit = horizon if horizon is not None else settings.max_iter
    it = 0
    for it in range(1, limit + 1):
        ac = W @ V
        a_s = float((w0 @ V)[0])
        new = np.minimum(g, c + np.minimum(ac, a_s))
        diff = new - V
        resid = float(np.max(np.abs(diff)))
        max_inc = max(max_inc, float(np.max(diff)))
        V = new
        if horizon is None and resid < settings.tol:
            break
    else:
        if horizon is None:
            raise ConvergenceError("scanning value iteration", it, resid)
    meta = {"params_hash": params.solve_hash(), "iterations": it, "residual": resid,
            "tol": settings.tol, "seconds": time.perf_counter() - t0}
    log.info("scanning: %d sweeps, residual %.2e, A_s=%.6f", it, resid, a_s)
    return ScanningSolution(ValueSurface(grid, V, dict(meta)), ValueSurface(grid, ac, dict(meta)),
                            a_s, it, resid, max_inc)


# --------------------------------------------------------------------------
# single-observation baseline


def solve_baseline(params: ModelParams, settings: SolverSettings = SolverSettings(), *,
                   horizon: Optional[int] = None) -> BaselineSolution:
    """V_b = min{1 - p, c + min(E[V_b | continue], E[V_b | switch])} in log-odds coordinates.

    The grid is centred on logit(pi) so the reset after a switch lands on a node.
    """
    lam = LogGrid.symmetric(settings.loglr_bound, settings.loglr_points, center=_logit(params.pi))
    k0, k1 = loglr_kernels(params.pair, lam, settings.quad)
    post = _sigmoid(lam.nodes)
    stop = 1.0 - post
    c = params.c
    ci = lam.center_index
    V = stop.copy()
    e = V
    a_sw = math.nan
    max_inc = -np.inf
    resid = np.inf
    limit = horizon if horizon is not None else settings.max_iter
    it = 0
    for it in range(1, limit + 1):
        e0 = k0 @ V
        e = e0 + post * (k1 @ V - e0)
        a_sw = float(e[ci])
        new = np.minimum(stop, c + np.minimum(e, a_sw))
        diff = new - V
        resid = float(np.max(np.abs(diff)))
        max_inc = max(max_inc, float(np.max(diff)))
        V = new
        if horizon is None and resid < settings.tol:
            break
    else:
        if horizon is None:
            raise ConvergenceError("baseline value iteration", it, resid)
    go = c + np.minimum(e, a_sw)
    stopping = stop <= go
    # smallest posterior above which stopping is optimal throughout
    k = len(stopping)
    while k > 0 and stopping[k - 1]:
        k -= 1
    pi_u = float(post[k]) if k < len(post) else 1.0
    switching = (~stopping) & (e > a_sw)
    switch_below = float(post[np.nonzero(switching)[0].max()]) if switching.any() else math.nan
    return BaselineSolution(lam, V, e, a_sw, pi_u, switch_below, it, resid, max_inc)


# --------------------------------------------------------------------------
# exact finite-horizon recursions at arbitrary beliefs


def expected_next_value(surface, belief: ScanBelief, action: str, mixed, prior: ScanBelief,
                        quad: QuadratureSpec = QuadratureSpec()) -> float:
    """E[surface(next belief)] for ``action`` in {"continue", "switch"}.

    ``surface`` is a :class:`ValueSurface` or any callable of a ScanBelief.
    """
    if action not in ("continue", "switch"):
        raise ValueError(f"unknown action {action!r}")
    b = prior if action == "switch" else belief
    dens = [mixed.f00, mixed.fm, mixed.f11]
    z, w = rule_for(dens, quad)
    fz = w * (max(1.0 - b.p11 - b.pmix, 0.0) * mixed.f00.pdf(z) + b.pmix * mixed.fm.pdf(z)
              + b.p11 * mixed.f11.pdf(z))
    mass = float(fz.sum())
    if 1.0 - mass > 1e-4:
        raise QuadratureError(f"predictive mass deficit {1.0 - mass:.3g}; widen the range")
    live = np.nonzero(fz > 0)[0]
    nxt = [scan_update(b, float(z[q]), 0, b, mixed) for q in live]
    if isinstance(surface, ValueSurface):
        vals = surface(np.array([u.p11 for u in nxt]), np.array([u.pmix for u in nxt]))
    else:
        vals = np.array([surface(u) for u in nxt])
    return float(np.dot(fz[live], vals) / mass)


def refinement_value(params: ModelParams, origin: ScanBelief, log_lr: float, horizon: int,
                     quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Horizon-truncated V_r at embed(origin, log_lr), by direct recursion (no grid)."""
    pair = params.pair
    x, w = rule_for([pair.f0, pair.f1], quad)
    d0 = w * pair.f0.pdf(x)
    d1 = w * pair.f1.pdf(x)
    s = pair.log_lr(x)

    def value(lam: float, h: int) -> float:
        pa, pb = marginals(embed(origin, lam))
        stop = 1.0 - max(pa, pb)
        if h == 0:
            return stop
        dens = pa * d1 + (1.0 - pa) * d0
        nxt = sum(dens[q] * value(lam + s[q], h - 1) for q in range(len(x)) if dens[q] > 0)
        return min(stop, params.c + nxt / dens.sum())

    return value(log_lr, horizon)


def scanning_value(params: ModelParams, mixed, g: Callable[[ScanBelief], float], belief: ScanBelief,
                   horizon: int, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Horizon-truncated V_s at ``belief`` with terminal cost ``g``, by direct recursion."""
    prior = scan_prior(params)

    def value(b: ScanBelief, h: int) -> float:
        gb = g(b)
        if h == 0:
            return gb
        nxt = lambda u: value(u, h - 1)  # noqa: E731
        ac = expected_next_value(nxt, b, "continue", mixed, prior, quad)
        a_s = expected_next_value(nxt, b, "switch", mixed, prior, quad)
        return min(gb, params.c + min(ac, a_s))

    return value(belief, horizon)


def baseline_value(params: ModelParams, posterior: float, horizon: int,
                   quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Horizon-truncated V_b at ``posterior``, by direct recursion in log-odds."""
    pair = params.pair
    x, w = rule_for([pair.f0, pair.f1], quad)
    d0 = w * pair.f0.pdf(x)
    d1 = w * pair.f1.pdf(x)
    s = pair.log_lr(x)
    omega0 = _logit(params.pi)

    def expect(omega: float, h: int) -> float:
        p = float(_sigmoid(omega))
        dens = p * d1 + (1.0 - p) * d0
        return sum(dens[q] * value(omega + s[q], h) for q in range(len(x)) if dens[q] > 0) / dens.sum()

    def value(omega: float, h: int) -> float:
        stop = 1.0 - float(_sigmoid(omega))
        if h == 0:
            return stop
        return min(stop, params.c + min(expect(omega, h - 1), expect(omega0, h - 1)))

    return value(_logit(posterior), horizon)


def solve(params: ModelParams, settings: SolverSettings = SolverSettings()):
    """Refinement then scanning; returns (mixed densities, refinement, scanning)."""
    mixed = mixed_densities(params)
    ref = solve_refinement(params, mixed, settings)
    scan = solve_scanning(params, mixed, ref, settings)
    return mixed, ref, scan
