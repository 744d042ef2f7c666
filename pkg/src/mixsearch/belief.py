"""Posterior recursions for the scanning and refinement stages."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

LOG_LR_CLAMP = 700.0


class DegenerateObservationError(ArithmeticError):
    """The observation has zero likelihood under every hypothesis."""


class ScanBelief(NamedTuple):
    p11: float
    pmix: float

    @property
    def p00(self) -> float:
        return 1.0 - self.p11 - self.pmix


@dataclass(frozen=True)
class RefineBelief:
    """(r11, r10, r01) for (s^a, s^b); iterates and compares as that triple.

    r00 is implied, but it is also carried explicitly: once the belief is
    concentrated elsewhere, 1 - r11 - r10 - r01 would lose all relative
    precision in the smallest component.
    """

    r11: float
    r10: float
    r01: float
    r00: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        if self.r00 is None:
            object.__setattr__(self, "r00", max(1.0 - self.r11 - self.r10 - self.r01, 0.0))

    def __iter__(self):
        return iter((self.r11, self.r10, self.r01))

    def __len__(self) -> int:
        return 3

    def __getitem__(self, k):
        return (self.r11, self.r10, self.r01)[k]


def scan_update(belief: ScanBelief, z: float, switched: int, prior: ScanBelief, mixed) -> ScanBelief:
    """Bayes update of the pair belief with one mixed observation ``z``.

    When ``switched`` is set the observation came from a fresh pair, so the
    prior replaces the current belief before the update.
    """
    b = prior if switched else belief
    w11 = b.p11 * mixed.f11.pdf(z)
    wm = b.pmix * mixed.fm.pdf(z)
    w00 = max(1.0 - b.p11 - b.pmix, 0.0) * mixed.f00.pdf(z)
    total = w11 + wm + w00
    if not total > 0.0 or not math.isfinite(total):
        raise DegenerateObservationError(f"predictive density vanishes at z={z!r}")
    return ScanBelief(w11 / total, wm / total)


def refine_update(belief: RefineBelief, x: float, pair) -> RefineBelief:
    f1 = float(pair.f1.pdf(x))
    f0 = float(pair.f0.pdf(x))
    if f1 + f0 <= 0.0:
        raise DegenerateObservationError(f"both densities vanish at x={x!r}")
    w11 = belief.r11 * f1
    w10 = belief.r10 * f1
    w01 = belief.r01 * f0
    w00 = belief.r00 * f0
    total = w11 + w10 + w01 + w00
    if not total > 0.0:
        raise DegenerateObservationError(f"posterior weight vanishes at x={x!r}")
    return RefineBelief(w11 / total, w10 / total, w01 / total, w00 / total)


def embed_arrays(p11, pmix, log_lr):
    """Vectorised :func:`embed`; returns (r11, r10, r01) arrays (broadcasting)."""
    p11 = np.asarray(p11, dtype=float)
    h = 0.5 * np.asarray(pmix, dtype=float)
    p00 = np.maximum(1.0 - p11 - 2.0 * h, 0.0)
    lam = np.clip(np.asarray(log_lr, dtype=float), -LOG_LR_CLAMP, LOG_LR_CLAMP)
    # weights divided through by max(1, Lambda) so nothing overflows
    a = np.exp(np.minimum(lam, 0.0))
    b = np.exp(-np.maximum(lam, 0.0))
    d = (p11 + h) * a + (h + p00) * b
    return p11 * a / d, h * a / d, h * b / d


def embed(origin: ScanBelief, log_lr: float) -> RefineBelief:
    """Refinement belief after cumulative log-likelihood ratio ``log_lr``.

    Starting from (p11, pmix/2, pmix/2) the weights of the hypotheses where
    sequence a is F1 are scaled by Lambda = exp(log_lr); everything else is
    unchanged, so the belief is a closed-form function of (origin, log_lr).
    """
    p11, pmix = origin
    h = 0.5 * pmix
    p00 = max(1.0 - p11 - pmix, 0.0)
    lam = min(max(log_lr, -LOG_LR_CLAMP), LOG_LR_CLAMP)
    if lam >= 0.0:
        a, b = 1.0, math.exp(-lam)
    else:
        a, b = math.exp(lam), 1.0
    d = (p11 + h) * a + (h + p00) * b
    return RefineBelief(p11 * a / d, h * a / d, h * b / d, p00 * b / d)


def marginals(belief: RefineBelief) -> tuple[float, float]:
    """Posterior probabilities that sequence a, resp. b, follows F1."""
    return belief.r11 + belief.r10, belief.r11 + belief.r01


def stop_cost(origin: ScanBelief, log_lr: float) -> float:
    """Error probability of the best declaration at this refinement belief."""
    pa, pb = marginals(embed(origin, log_lr))
    return 1.0 - max(pa, pb)
