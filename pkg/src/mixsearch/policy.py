"""Decision rules built from solved value surfaces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .belief import ScanBelief, embed, marginals
from .dp import BaselineSolution, RefinementSolution, ScanningSolution
from .grid import TriangularGrid
from .model import ModelParams, MixedDensities

STOP_SCANNING = "stop_scanning"
CONTINUE = "continue"
SWITCH = "switch"
STOP_REFINING = "stop_refining"
DECLARE_A = "declare_a"
DECLARE_B = "declare_b"

EPS_EQ = 1e-9


class SolverInconsistencyError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass
class PolicyRegions:
    grid: TriangularGrid
    stop_mask: np.ndarray      # R_tau: g == V_s
    switch_mask: np.ndarray    # R_phi: A_c > A_s outside R_tau
    a_s: float
    eps_eq: float = EPS_EQ


def extract_regions(scan: ScanningSolution, ref: RefinementSolution, eps_eq: float = EPS_EQ) -> PolicyRegions:
    g = ref.g_surface.values
    vs = scan.vs_surface.values
    if ref.grid != scan.vs_surface.grid:
        raise SolverInconsistencyError("refinement and scanning grids differ")
    stop = g <= vs + eps_eq
    if not stop.any():
        raise SolverInconsistencyError("stopping region is empty; g = V_s must hold at (1, 0)")
    switch = ~stop & (scan.ac_surface.values > scan.a_s + eps_eq)
    return PolicyRegions(ref.grid, stop, switch, scan.a_s, eps_eq)


@dataclass
class MixedPolicy:
    params: ModelParams
    mixed: MixedDensities
    refinement: RefinementSolution
    scanning: ScanningSolution
    regions: PolicyRegions
    _line_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, params, mixed, ref, scan, eps_eq: float = EPS_EQ) -> "MixedPolicy":
        if ref.g_surface.meta.get("params_hash") not in (None, params.solve_hash()):
            raise SolverInconsistencyError("surfaces were solved for different parameters")
        return cls(params, mixed, ref, scan, extract_regions(scan, ref, eps_eq))

    @property
    def grid(self) -> TriangularGrid:
        return self.regions.grid

    def refine_line(self, origin: ScanBelief) -> np.ndarray:
        """Continuation cost c + E[V_r(next)] along the log-ratio grid for ``origin``.

        Off-node origins blend the three enclosing nodes' tables barycentrically.
        """
        key = (float(origin[0]), float(origin[1]))
        line = self._line_cache.get(key)
        if line is None:
            idx, w = self.grid.locate_scalar(*key)
            cont = self.refinement.continuation
            line = cont[idx[0]] * w[0] + cont[idx[1]] * w[1] + cont[idx[2]] * w[2]
            if len(self._line_cache) > 64:
                self._line_cache.clear()
            self._line_cache[key] = line
        return line


def scan_decide(policy: MixedPolicy, belief: ScanBelief) -> str:
    """Stop scanning, keep the pair, or switch to a fresh pair.

    Off-node beliefs use interpolated g and A_c with the defining inequalities
    re-applied; stopping wins ties and staying beats switching on ties.
    """
    idx, w = policy.grid.locate_scalar(belief[0], belief[1])
    g = policy.refinement.g_surface.values
    ac = policy.scanning.ac_surface.values
    gv = g[idx[0]] * w[0] + g[idx[1]] * w[1] + g[idx[2]] * w[2]
    acv = ac[idx[0]] * w[0] + ac[idx[1]] * w[1] + ac[idx[2]] * w[2]
    a_s = policy.regions.a_s
    eps = policy.regions.eps_eq
    if gv <= policy.params.c + min(acv, a_s) + eps:
        return STOP_SCANNING
    if acv > a_s + eps:
        return SWITCH
    return CONTINUE


def refine_decide(policy: MixedPolicy, origin: ScanBelief, log_lr: float) -> str:
    pa, pb = marginals(embed(origin, log_lr))
    stop = 1.0 - max(pa, pb)
    if stop <= 0.0:
        return STOP_REFINING
    line = policy.refine_line(origin)
    cont = policy.refinement.loglr.interpolate_scalar(line, log_lr)
    return STOP_REFINING if stop <= cont + policy.regions.eps_eq else CONTINUE


def final_decision(origin: ScanBelief, log_lr: float) -> str:
    """Declare the sequence with the larger posterior of being F1; ties go to b."""
    pa, pb = marginals(embed(origin, log_lr))
    return DECLARE_A if pa > pb else DECLARE_B


# --------------------------------------------------------------------------
# single-observation baseline


@dataclass(frozen=True)
class BaselinePolicy:
    """Observe one sequence at a time.

    Stop and declare the current sequence once its posterior reaches
    ``stop_threshold``; abandon it for a fresh one once the posterior falls to
    the prior or below.
    """

    pi: float
    stop_threshold: float
    solution: Optional[BaselineSolution] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.stop_threshold <= 1.0:
            raise ValueError(f"stop threshold must lie in (0, 1], got {self.stop_threshold}")

    @property
    def stop_log_odds(self) -> float:
        p = self.stop_threshold
        return math.inf if p >= 1.0 else math.log(p) - math.log1p(-p)

    @property
    def prior_log_odds(self) -> float:
        return math.log(self.pi) - math.log1p(-self.pi)

    @classmethod
    def from_solution(cls, params: ModelParams, sol: BaselineSolution) -> "BaselinePolicy":
        return cls(params.pi, sol.stop_threshold, sol)


def calibrate_baseline(params: ModelParams, target_error: float, trials: int, seed: int = 0, *,
                       workers: int = 1, max_iter: int = 40, max_obs: int = 10 ** 7) -> BaselinePolicy:
    """Bisection on the stop threshold until the simulated error rate meets ``target_error``.

    Every candidate threshold is evaluated on the same trial seeds, so the
    error estimate is a deterministic step function of the threshold.
    """
    from .sim import run_batch

    if not 0.0 < target_error < 1.0:
        raise CalibrationError(f"target error must lie in (0, 1), got {target_error}")
    pi = params.pi
    cache = {}

    def error_at(t: float):
        if t not in cache:
            p_u = 1.0 / (1.0 + math.exp(-t))
            s = run_batch(BaselinePolicy(pi, p_u), params, trials, seed, workers=workers, max_obs=max_obs)
            cache[t] = (s.error_rate, s.se_error)
        return cache[t]

    lo = math.log(pi) - math.log1p(-pi)           # immediate declaration
    hi = math.log1p(-1e-12) - math.log(1e-12)      # declare only at near-certainty
    err_hi, se_hi = error_at(hi)
    band = max(2.0 * math.sqrt(target_error * (1.0 - target_error) / trials), 1.0 / trials)
    if target_error < err_hi - band:
        raise CalibrationError(
            f"target error {target_error:.4g} is below the floor {err_hi:.4g} reachable by the baseline")
    err_lo, _ = error_at(lo)
    if target_error >= err_lo:
        return BaselinePolicy(pi, 1.0 / (1.0 + math.exp(-lo)))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        err, _ = error_at(mid)
        if err > target_error:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3:
            break
    # the endpoint whose estimate lies closer to the target
    t = min((lo, hi), key=lambda x: abs(error_at(x)[0] - target_error))
    return BaselinePolicy(pi, 1.0 / (1.0 + math.exp(-t)))
