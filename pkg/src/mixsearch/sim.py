"""Monte-Carlo evaluation of the mixed-observation and single-observation policies."""
from __future__ import annotations

import json
import math
import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .belief import embed, marginals, scan_update
from .model import F1, ModelParams, mixed_densities, sample_pair_truth, scan_prior
from .policy import (
    CONTINUE, DECLARE_A, STOP_SCANNING, SWITCH, BaselinePolicy, MixedPolicy, calibrate_baseline,
    final_decision, scan_decide,
)

MAX_OBSERVATIONS = 10 ** 7
_BLOCK = 256


class RunawayPolicyError(RuntimeError):
    def __init__(self, message: str, trial: Optional[int] = None):
        super().__init__(message if trial is None else f"trial {trial}: {message}")
        self.trial = trial


@dataclass(frozen=True)
class TrialRecord:
    tau1: int
    tau2: int
    n_switches: int
    declared_truth: int
    correct: bool


@dataclass(frozen=True)
class SimSummary:
    strategy: str
    n_trials: int
    c: float
    mean_tau1: float
    mean_tau2: float
    mean_delay: float
    error_rate: float
    mean_cost: float
    mean_switches: float
    se_tau1: float
    se_tau2: float
    se_delay: float
    se_error: float
    se_cost: float
    seed: int
    params_hash: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


class _Draws:
    """Per-trial buffered sampler; one buffer per density so draws stay i.i.d."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buffers = {}

    def __call__(self, key, density) -> float:
        buf = self.buffers.get(key)
        if not buf:
            buf = density.sample(self.rng, _BLOCK).tolist()
            buf.reverse()
            self.buffers[key] = buf
        return buf.pop()


def run_trial(policy: MixedPolicy, params: ModelParams, rng: np.random.Generator,
              max_obs: int = MAX_OBSERVATIONS) -> TrialRecord:
    mixed = policy.mixed
    pair = params.pair
    f0, f1 = pair.f0, pair.f1
    prior = scan_prior(params)
    draw = _Draws(rng)
    truth = sample_pair_truth(params, rng)
    belief = prior
    tau1 = 0
    switches = 0
    while True:
        action = scan_decide(policy, belief)
        if action == STOP_SCANNING:
            break
        switched = action == SWITCH
        if switched:
            truth = sample_pair_truth(params, rng)
            switches += 1
        n = truth[0] + truth[1]
        z = draw(("z", n), mixed.by_truth(*truth))
        belief = scan_update(belief, z, switched, prior, mixed)
        tau1 += 1
        if tau1 >= max_obs:
            raise RunawayPolicyError(f"scanning exceeded {max_obs} observations")

    origin = belief
    line = policy.refine_line(origin)
    lam_grid = policy.refinement.loglr
    eps = policy.regions.eps_eq
    dens_a = f1 if truth[0] == F1 else f0
    lam = 0.0
    tau2 = 0
    while True:
        pa, pb = marginals(embed(origin, lam))
        stop = 1.0 - max(pa, pb)
        if stop <= 0.0 or stop <= lam_grid.interpolate_scalar(line, lam) + eps:
            break
        lam += pair.log_lr(draw(("x", truth[0]), dens_a))
        tau2 += 1
        if tau1 + tau2 >= max_obs:
            raise RunawayPolicyError(f"search exceeded {max_obs} observations")
    declared = truth[0] if final_decision(origin, lam) == DECLARE_A else truth[1]
    return TrialRecord(tau1, tau2, switches, declared, declared == F1)


def run_baseline_trial(policy: BaselinePolicy, params: ModelParams, rng: np.random.Generator,
                       max_obs: int = MAX_OBSERVATIONS) -> TrialRecord:
    pair = params.pair
    dens = (pair.f0, pair.f1)
    omega0 = policy.prior_log_odds
    stop_at = policy.stop_log_odds - 1e-9
    switch_at = omega0 + 1e-9
    draw = _Draws(rng)
    truth = int(rng.random() < params.pi)
    omega = omega0
    fresh = True
    n = 0
    switches = 0
    while omega < stop_at:
        if not fresh and omega <= switch_at:
            truth = int(rng.random() < params.pi)
            omega = omega0
            switches += 1
        omega += pair.log_lr(draw(truth, dens[truth]))
        fresh = False
        n += 1
        if n >= max_obs:
            raise RunawayPolicyError(f"baseline exceeded {max_obs} observations")
    return TrialRecord(n, 0, switches, truth, truth == F1)


# --------------------------------------------------------------------------
# batches

_WORKER_STATE = {}


def trial_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(index)]))


def _run_range(start: int, stop: int):
    policy, params, base_seed, max_obs = (_WORKER_STATE[k] for k in ("policy", "params", "seed", "max_obs"))
    runner = run_baseline_trial if isinstance(policy, BaselinePolicy) else run_trial
    out = []
    for i in range(start, stop):
        try:
            out.append(runner(policy, params, trial_rng(base_seed, i), max_obs))
        except RunawayPolicyError as exc:
            raise RunawayPolicyError(str(exc), trial=i) from None
    return out


def summarize(records: Sequence[TrialRecord], params: ModelParams, seed: int, strategy: str) -> SimSummary:
    n = len(records)
    t1 = np.array([r.tau1 for r in records], dtype=float)
    t2 = np.array([r.tau2 for r in records], dtype=float)
    delay = t1 + t2
    err = np.array([0.0 if r.correct else 1.0 for r in records])
    cost = params.c * delay + err
    sw = np.array([r.n_switches for r in records], dtype=float)

    def se(x):
        return float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    return SimSummary(
        strategy=strategy, n_trials=n, c=params.c,
        mean_tau1=float(t1.mean()), mean_tau2=float(t2.mean()), mean_delay=float(delay.mean()),
        error_rate=1.0 - float(np.mean([r.correct for r in records])),
        mean_cost=float(cost.mean()), mean_switches=float(sw.mean()),
        se_tau1=se(t1), se_tau2=se(t2), se_delay=se(delay), se_error=se(err), se_cost=se(cost),
        seed=int(seed), params_hash=params.solve_hash(),
    )


def run_batch_records(policy, params: ModelParams, n_trials: int, base_seed: int, workers: int = 1,
                      max_obs: int = MAX_OBSERVATIONS) -> list[TrialRecord]:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    _WORKER_STATE.update(policy=policy, params=params, seed=base_seed, max_obs=max_obs)
    try:
        if workers <= 1 or n_trials < 2:
            return _run_range(0, n_trials)
        edges = np.linspace(0, n_trials, min(workers, n_trials) * 4 + 1).astype(int)
        chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        ctx = mp.get_context("fork")
        with ctx.Pool(workers) as pool:
            parts = pool.starmap(_run_range, chunks)
        return [r for part in parts for r in part]
    finally:
        _WORKER_STATE.clear()


def run_batch(policy, params: ModelParams, n_trials: int, base_seed: int, workers: int = 1,
              max_obs: int = MAX_OBSERVATIONS) -> SimSummary:
    """Simulate ``n_trials`` independent searches; trial i draws from seed (base_seed, i)."""
    records = run_batch_records(policy, params, n_trials, base_seed, workers, max_obs)
    strategy = "single" if isinstance(policy, BaselinePolicy) else "mixed"
    return summarize(records, params, base_seed, strategy)


# --------------------------------------------------------------------------
# experiments


@dataclass
class Comparison:
    mixed: SimSummary
    baseline: Optional[SimSummary]
    baseline_threshold: float
    delay_ratio: float
    savings: float
    savings_se: float
    uninformative: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def compare_strategies(policy: MixedPolicy, params: ModelParams, n_trials: int, seed: int, *,
                       calib_trials: Optional[int] = None, workers: int = 1) -> Comparison:
    """Mixed policy against the single-observation policy tuned to the same error rate."""
    mixed = run_batch(policy, params, n_trials, seed, workers)
    if params.pair.uninformative:
        base = run_batch(BaselinePolicy(params.pi, params.pi), params, n_trials, seed + 1, workers)
        return Comparison(mixed, base, params.pi, math.nan, math.nan, math.nan, True)
    target = min(max(mixed.error_rate, 1.0 / n_trials), 1.0 - 1.0 / n_trials)
    bpol = calibrate_baseline(params, target, calib_trials or n_trials, seed + 1, workers=workers)
    base = run_batch(bpol, params, n_trials, seed + 2, workers)
    ratio = mixed.mean_delay / base.mean_delay if base.mean_delay > 0 else math.nan
    rel = math.sqrt((mixed.se_delay / mixed.mean_delay) ** 2 + (base.se_delay / base.mean_delay) ** 2) \
        if mixed.mean_delay > 0 and base.mean_delay > 0 else math.nan
    return Comparison(mixed, base, bpol.stop_threshold, ratio, 1.0 - ratio, ratio * rel, False)


@dataclass
class SweepPoint:
    snr_db: float
    summary: Optional[SimSummary]
    v_s_prior: float = math.nan
    error: Optional[str] = None


def gaussian_at_snr(params: ModelParams, snr_db: float) -> ModelParams:
    from .model import DensityPair

    return ModelParams(params.pi, params.c, DensityPair.gaussian(params.pair.sigma2, snr_db=snr_db),
                       params.rng_seed)


def sweep_snr(params: ModelParams, snr_list_db: Sequence[float], n_trials: int, seed: int, *,
              policy_factory: Optional[Callable[[ModelParams], MixedPolicy]] = None,
              workers: int = 1) -> list[SweepPoint]:
    """Re-solve and simulate at each SNR; failures are recorded and the sweep goes on."""
    if policy_factory is None:
        from .dp import solve

        def policy_factory(p):
            mixed, ref, scan = solve(p)
            return MixedPolicy.build(p, mixed, ref, scan)

    out = []
    for snr in snr_list_db:
        try:
            p = gaussian_at_snr(params, float(snr))
            pol = policy_factory(p)
            summ = run_batch(pol, p, n_trials, seed, workers)
            prior = scan_prior(p)
            out.append(SweepPoint(float(snr), summ, pol.scanning.vs_surface.at(*prior)))
        except Exception as exc:  # per-point failures are part of the result
            out.append(SweepPoint(float(snr), None, math.nan, f"{type(exc).__name__}: {exc}"))
    return out


def cost_slope(points: Sequence[SweepPoint]) -> float:
    """Least-squares slope of mean cost against SNR over the successful points."""
    ok = [(p.snr_db, p.summary.mean_cost) for p in points if p.summary is not None]
    if len(ok) < 2:
        return math.nan
    x, y = np.array(ok).T
    return float(np.polyfit(x, y, 1)[0])
