import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from mixsearch.belief import (
    DegenerateObservationError, RefineBelief, ScanBelief, embed, embed_arrays, marginals, refine_update,
    scan_update, stop_cost,
)
from mixsearch.model import DensityPair, mixed_densities, scan_prior
from mixsearch.quadrature import QuadratureSpec, rule_for


def _fake_mixed(f00, fm, f11):
    const = lambda v: SimpleNamespace(pdf=lambda z: v)  # noqa: E731
    return SimpleNamespace(f00=const(f00), fm=const(fm), f11=const(f11))


PAIR = DensityPair.gaussian(1.0, snr_db=3.0)
MIXED = mixed_densities(PAIR)
PRIOR = scan_prior(0.05)

probs = st.floats(0.0, 1.0)


@st.composite
def scan_beliefs(draw):
    p11 = draw(probs)
    pmix = draw(st.floats(0.0, 1.0 - p11))
    return ScanBelief(p11, pmix)


@st.composite
def refine_beliefs(draw):
    w = np.array([draw(st.floats(0.0, 1.0)) for _ in range(4)])
    assume(w.sum() > 1e-3)
    w = w / w.sum()
    return RefineBelief(*w[:3])


def test_scan_update_uninformative_keeps_belief():
    b = ScanBelief(0.3, 0.4)
    out = scan_update(b, 0.7, 0, PRIOR, _fake_mixed(0.2, 0.2, 0.2))
    assert out == pytest.approx(b, abs=1e-15)


def test_scan_update_hand_case():
    out = scan_update(ScanBelief(0.25, 0.5), 0.0, 0, PRIOR, _fake_mixed(0.0, 1.0, 2.0))
    assert out == pytest.approx((0.5, 0.5), abs=1e-15)


def test_scan_update_switch_resets():
    out = scan_update(ScanBelief(0.9, 0.05), 1.0, 1, PRIOR, _fake_mixed(1.0, 1.0, 1.0))
    assert out == pytest.approx(PRIOR, abs=1e-15)
    a = scan_update(ScanBelief(0.9, 0.05), 1.3, 1, PRIOR, MIXED)
    b = scan_update(ScanBelief(0.0, 0.2), 1.3, 1, PRIOR, MIXED)
    assert a == b


def test_scan_update_against_scipy():
    b = ScanBelief(0.1, 0.3)
    z = 1.7
    s2, p = PAIR.sigma2, PAIR.p
    l11 = stats.norm(0, math.sqrt(2 * s2 + 2 * p)).pdf(z)
    lm = stats.norm(0, math.sqrt(2 * s2 + p)).pdf(z)
    l00 = stats.norm(0, math.sqrt(2 * s2)).pdf(z)
    tot = 0.1 * l11 + 0.3 * lm + 0.6 * l00
    assert scan_update(b, z, 0, PRIOR, MIXED) == pytest.approx((0.1 * l11 / tot, 0.3 * lm / tot), rel=1e-12)


def test_scan_update_degenerate():
    with pytest.raises(DegenerateObservationError):
        scan_update(ScanBelief(0.2, 0.2), 0.0, 0, PRIOR, _fake_mixed(0.0, 0.0, 0.0))


def test_refine_update_hand_case():
    toy = SimpleNamespace(f1=SimpleNamespace(pdf=lambda x: 0.6), f0=SimpleNamespace(pdf=lambda x: 0.2))
    out = refine_update(RefineBelief(0.25, 0.25, 0.25), 0.0, toy)
    assert out == pytest.approx((0.375, 0.375, 0.125), abs=1e-15)


def test_refine_update_vertex_absorbing():
    for x in (-3.0, 0.0, 2.5):
        assert tuple(refine_update(RefineBelief(1.0, 0.0, 0.0), x, PAIR)) == (1.0, 0.0, 0.0)


def test_refine_update_uninformative():
    flat = DensityPair.gaussian(1.0, p=0.0)
    b = RefineBelief(0.1, 0.2, 0.3)
    assert refine_update(b, 1.1, flat) == pytest.approx(b, abs=1e-15)


def test_refine_update_degenerate():
    x = np.linspace(0, 1, 32)
    left = np.where(x < 0.5, 1.0, 0.0)
    left /= np.trapezoid(left, x)
    pair = DensityPair.tabulated(x, left, left)
    with pytest.raises(DegenerateObservationError):
        refine_update(RefineBelief(0.2, 0.2, 0.2), 0.9, pair)


def test_embed_examples():
    assert embed(ScanBelief(0.3, 0.4), 0.0) == pytest.approx((0.3, 0.2, 0.2), abs=1e-15)
    assert embed(ScanBelief(0.25, 0.5), math.log(3.0)) == pytest.approx((0.375, 0.375, 0.125), abs=1e-15)
    pa, _ = marginals(embed(ScanBelief(0.0, 0.1), 1e6))
    assert pa == pytest.approx(1.0)
    assert math.isfinite(embed(ScanBelief(0.2, 0.3), -1e6).r11)


def test_marginals_examples():
    assert marginals(RefineBelief(1, 0, 0)) == (1, 1)
    assert marginals(RefineBelief(0, 0.5, 0.5)) == (0.5, 0.5)
    assert marginals(RefineBelief(0.2, 0.3, 0.1)) == pytest.approx((0.5, 0.3))


def test_stop_cost_vertices():
    assert stop_cost(ScanBelief(1.0, 0.0), 0.0) == 0.0
    assert stop_cost(ScanBelief(0.0, 0.0), 0.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(scan_beliefs(), st.floats(-30.0, 30.0))
def test_embed_arrays_matches_scalar(origin, lam):
    vec = embed_arrays(origin.p11, origin.pmix, lam)
    assert np.allclose([float(v) for v in vec], embed(origin, lam), rtol=1e-13, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(scan_beliefs(), st.lists(st.floats(-6.0, 6.0), min_size=1, max_size=25))
def test_embed_equals_iterated_updates(origin, xs):
    r = RefineBelief(origin.p11, origin.pmix / 2, origin.pmix / 2)
    total = 0.0
    for x in xs:
        r = refine_update(r, x, PAIR)
        total += float(PAIR.log_lr(x))
        assert abs(sum(r) + r.r00 - 1.0) <= 1e-12
    e = embed(origin, total)
    assert np.max(np.abs(np.subtract(r, e))) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(scan_beliefs(), st.lists(st.floats(-6.0, 6.0), min_size=1, max_size=25))
def test_ratio_invariance(origin, xs):
    r = RefineBelief(origin.p11, origin.pmix / 2, origin.pmix / 2)
    r0 = r
    for x in xs:
        r = refine_update(r, x, PAIR)
        if r.r10 > 1e-12 and r0.r10 > 1e-12:
            assert r.r11 / r.r10 == pytest.approx(r0.r11 / r0.r10, rel=1e-9)
        if r.r00 > 1e-12 and r0.r00 > 1e-12:
            assert r.r01 / r.r00 == pytest.approx(r0.r01 / r0.r00, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(scan_beliefs(), st.floats(-12.0, 12.0), st.booleans())
def test_scan_update_stays_on_simplex(b, z, switched):
    out = scan_update(b, z, int(switched), PRIOR, MIXED)
    assert out.p11 >= 0 and out.pmix >= 0
    assert out.p11 + out.pmix <= 1.0 + 1e-12


@settings(max_examples=200, deadline=None)
@given(refine_beliefs(), st.floats(-8.0, 8.0))
def test_refine_update_stays_on_simplex(b, x):
    out = refine_update(b, x, PAIR)
    assert min(out) >= 0 and out.r00 >= -1e-12
    assert abs(sum(out) + out.r00 - 1.0) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(scan_beliefs())
def test_martingale(b):
    dens = [MIXED.f00, MIXED.fm, MIXED.f11]
    z, w = rule_for(dens, QuadratureSpec())
    fz = w * (b.p00 * MIXED.f00.pdf(z) + b.pmix * MIXED.fm.pdf(z) + b.p11 * MIXED.f11.pdf(z))
    nxt = np.array([scan_update(b, float(v), 0, PRIOR, MIXED) for v in z])
    assert float(fz @ nxt[:, 0]) == pytest.approx(b.p11, abs=1e-6)
    assert float(fz @ nxt[:, 1]) == pytest.approx(b.pmix, abs=1e-6)
