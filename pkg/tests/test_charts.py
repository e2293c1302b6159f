import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsswave.charts import (
    ChartConfig,
    ChartId,
    ChartPoint,
    CotangentPointB,
    dual_metric,
    dual_metric_b,
    gamma,
    hamilton_field,
    hamilton_flow,
    pushforward_check,
    rho_coefficient_limit,
    to_chart,
    defining_function_x,
    verify_all,
)
from dsswave.errors import ChartDegenerate, OutOfDomain, OutsideOverlap
from dsswave.geometry import SpacetimeParams, beta, horizons, mu, r_of_mu


def _product(params, t, m_, side="bh", cfg=ChartConfig()):
    r = float(r_of_mu(params, horizons(params), m_, side))
    return ChartPoint(ChartId.PRODUCT, (t, r), params, config=cfg)


def test_blowup_transition_example():
    params = SpacetimeParams(1.0, 0.001)
    hz = horizons(params)
    cfg = ChartConfig(lambda_bh=hz.kappa_bh, lambda_dS=2 * hz.kappa_bh)
    p = ChartPoint(ChartId.BLOWUP_BH, (0.1, 0.5), params, config=cfg)
    q = to_chart(p, ChartId.BLOWUP_DS)
    assert_allclose(q.coords, (0.5 * 0.1**2, 0.5), rtol=1e-12)


def test_blowdown_product_identity(params, hz):
    t = 3.7
    for m_ in (1e-4, 0.05, 0.3):
        q = to_chart(_product(params, t, m_), ChartId.BLOWDOWN_BH)
        sp, sm = q.coords
        assert_allclose([sp, sm], [math.sqrt(m_) * math.exp(hz.kappa_bh * t), math.sqrt(m_) * math.exp(-hz.kappa_bh * t)], rtol=1e-12)
        # r is rounded, so compare against mu of the stored radius
        assert_allclose(sp * sm, m_, rtol=1e-11)


def test_round_trip_product_blowup(params, hz):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        m_ = math.exp(rng.uniform(math.log(1e-6), math.log(0.4)))
        p = _product(params, 1.0 + rng.uniform(0.1, 30.0), m_)
        q = to_chart(to_chart(p, ChartId.BLOWUP_BH), ChartId.PRODUCT)
        worst = max(worst, abs(q.coords[0] / p.coords[0] - 1), abs(q.coords[1] / p.coords[1] - 1))
    assert worst < 1e-10


def test_gamma_matches_difference_quotient_limit(params, hz):
    # (kappa^2 - beta^2)/mu on a geometric sequence, Richardson in delta
    d = 1e-2 * 2.0 ** -np.arange(6)
    r = hz.r_bh + d
    q = (hz.kappa_bh**2 - beta(params, r) ** 2) / mu(params, r)
    for j in range(1, 4):
        q = (2**j * q[1:] - q[:-1]) / (2**j - 1)
    assert_allclose(gamma(params, hz.r_bh), q[-1], rtol=1e-8)
    # the exact form agrees with the naive one away from the horizon
    r0 = 4.0
    assert_allclose(gamma(params, r0), (hz.kappa_bh**2 - beta(params, r0) ** 2) / mu(params, r0), rtol=1e-12)


def test_dual_metric_on_horizon(params, hz):
    G = dual_metric(ChartPoint(ChartId.BLOWUP_BH, (0.7, 0.0), params))
    c_rr, _, c_mm, _ = G.coefficients
    assert_allclose(c_rr, 4 * gamma(params, hz.r_bh), rtol=1e-14)
    assert c_mm == 0.0
    assert G.signature() == (1, 3)


def test_product_T_frame_chain_rule(params, hz):
    p = _product(params, 2.5, 0.2)
    t, r = p.coords
    T = math.exp(-2 * hz.kappa_bh * t)
    GT = dual_metric(p, frame="T").matrix
    Gt = dual_metric(p).matrix
    J = np.diag([-2 * hz.kappa_bh * T, 1.0])  # d(T, r)/d(t, r)
    assert_allclose(GT, J @ Gt @ J.T, rtol=1e-14)
    assert_allclose(np.diag(GT), [4 * hz.kappa_bh**2 * T**2 / 0.2, -0.2], rtol=1e-12)


def test_faces_characteristic(params):
    for ch in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        for s in (0.01, 0.3, 2.0):
            assert abs(dual_metric(ChartPoint(ch, (s, 0.0), params)).quad((0.0, 1.0))) < 1e-10
            assert abs(dual_metric(ChartPoint(ch, (0.0, s), params)).quad((1.0, 0.0))) < 1e-10


def test_pushforward_examples(params, hz):
    rng = np.random.default_rng(7)
    pts = [_product(params, 1.0 + rng.uniform(0.5, 10.0), math.exp(rng.uniform(math.log(1e-3), math.log(0.3)))) for _ in range(100)]
    assert pushforward_check(ChartId.PRODUCT, ChartId.BLOWUP_BH, pts).max_rel < 1e-6
    up = [to_chart(p, ChartId.BLOWUP_BH) for p in pts]
    assert pushforward_check(ChartId.BLOWUP_BH, ChartId.BLOWDOWN_BH, up).max_rel < 1e-6


def test_cancellation_and_negative_control(params, hz):
    mus, cs, table = rho_coefficient_limit(params)
    assert abs(table[-1, 4] - table[-2, 4]) < 1e-6
    assert_allclose(table[-1, 4], 4 * gamma(params, hz.r_bh), rtol=1e-8)
    bad = ChartConfig(lambda_bh=1.1 * hz.kappa_bh)
    mus_b, cs_b, _ = rho_coefficient_limit(params, bad, levels=16)
    slope = np.polyfit(np.log(mus_b[-4:]), np.log(np.abs(cs_b[-4:])), 1)[0]
    assert_allclose(slope, -1.0, atol=0.05)


def test_noncanonical_exponent_degenerate_on_face(params, hz):
    cfg = ChartConfig(lambda_bh=1.1 * hz.kappa_bh)
    with pytest.raises(ChartDegenerate):
        dual_metric(ChartPoint(ChartId.BLOWUP_BH, (0.5, 0.0), params, config=cfg))
    with pytest.raises(ChartDegenerate):
        dual_metric(ChartPoint(ChartId.PRODUCT, (1.0, hz.r_bh - 0.01), params))


def test_outside_overlap(params):
    with pytest.raises(OutsideOverlap):
        to_chart(ChartPoint(ChartId.BLOWUP_BH, (10.0, 0.2), params), ChartId.PRODUCT)


def test_hamilton_field_on_conormal(params, hz):
    kb2 = hz.kappa_bh**2
    f = hamilton_field(CotangentPointB(1.0, 0.0, 0.0, 1.0, 0.0, params))
    assert f["mu_dot"] == 0.0 and f["xi_dot"] == 0.0 and f["eta_dot"] == 0.0
    assert_allclose([f["rho_dot_over_rho"], f["zeta_dot"]], [8 * kb2, 4 * kb2], rtol=1e-12)
    f0 = hamilton_field(CotangentPointB(1.0, 0.0, 0.0, 0.0, 0.0, params))
    assert all(v == 0.0 for v in f0.values())


def test_hamilton_flow_conserves_G(params):
    q = CotangentPointB(0.5, 0.05, 0.3, -0.7, 0.4, params)
    G0 = dual_metric_b(q)
    errs = [abs(dual_metric_b(hamilton_flow(q, 0.2 / n, n)[-1]) - G0) for n in (10, 20)]
    assert errs[1] < 1e-6
    assert_allclose(errs[0] / errs[1], 16.0, rtol=0.25)


def test_defining_function(params, hz):
    for t in (2.0, 5.0, 9.0):
        for m_ in (1e-6, 1e-4):
            p = _product(params, t, m_)
            x = defining_function_x(p)
            assert_allclose(x ** (2 * hz.kappa_bh) * m_ * math.exp(2 * hz.kappa_bh * t), 1.0, rtol=1e-10)
    r = 5.0
    xs = [defining_function_x(ChartPoint(ChartId.PRODUCT, (t, r), params)) for t in (2.0, 3.0, 4.0)]
    assert xs[0] > xs[1] > xs[2]
    with pytest.raises(OutOfDomain):
        defining_function_x(ChartPoint(ChartId.PRODUCT, (0.5, r), params))


def test_interpolations_comparable(params, hz):
    c1, c2 = ChartConfig(), ChartConfig(r1_frac=0.2, r2_frac=0.8)
    r = np.linspace(hz.r_bh, hz.r_dS, 402)[1:-1]
    ratio = [defining_function_x(ChartPoint(ChartId.PRODUCT, (3.0, ri), params, config=c1))
             / defining_function_x(ChartPoint(ChartId.PRODUCT, (3.0, ri), params, config=c2)) for ri in r]
    assert 0 < min(ratio) and max(ratio) / min(ratio) < 1e3


def test_verify_all(params):
    rep = verify_all(params)
    failed = [k for k, v in rep.items() if isinstance(v, dict) and not v["passed"]]
    assert rep["all_passed"], failed
