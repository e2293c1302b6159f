import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from dsswave.errors import ExtremalOrInvalidParams, OutOfDomain
from dsswave.geometry import (
    SpacetimeParams,
    horizon_constants,
    horizons,
    mu,
    r_anchor,
    radial_grid,
    tortoise,
    tortoise_inverse,
    tortoise_inverse_offsets,
)


def test_mu_examples():
    assert_allclose(mu(SpacetimeParams(1.0, 1.0 / 9.0), 3.0), 0.0, atol=1e-15)
    assert_allclose(mu(SpacetimeParams(1.0, 0.0), 2.0), 0.0, atol=1e-15)
    assert_allclose(mu(SpacetimeParams(1.0, 0.02), 3.0), 1 - 2 / 3 - 0.06, rtol=1e-14)


@pytest.mark.parametrize("m, lam", [(1.0, 1.0 / 9.0), (1.0, 0.2), (0.0, 0.1), (1.0, 0.0), (1.0, -0.1)])
def test_invalid_params_rejected(m, lam):
    with pytest.raises(ExtremalOrInvalidParams):
        horizons(SpacetimeParams(m, lam))


def test_extremality_margin():
    lam = (1 - 1e-9) / 9.0
    with pytest.raises(ExtremalOrInvalidParams):
        horizons(SpacetimeParams(1.0, lam))
    horizons(SpacetimeParams(1.0, lam, extremality_margin=1e-12))


def test_schwarzschild_limit():
    hz = horizons(SpacetimeParams(1.0, 1e-6))
    assert abs(hz.r_bh - 2.0) < 1e-4
    assert abs(hz.kappa_bh - 0.25) < 1e-4


def test_roots_against_bisection(params, hz):
    # bisection oracle on mu between the origin-side pole and the maximiser
    ra = (3 * params.m / params.Lambda) ** (1 / 3)
    f = lambda r: mu(params, r)
    assert_allclose(hz.r_bh, brentq(f, 1.0, ra, xtol=1e-15), rtol=1e-13)
    assert_allclose(hz.r_dS, brentq(f, ra, 20.0, xtol=1e-15), rtol=1e-13)
    assert abs(hz.r_bh + hz.r_dS + hz.r_neg) < 1e-12
    assert hz.kappa_bh > 0 and hz.kappa_dS > 0


def test_factorisation(params, hz):
    r = np.linspace(0.5, 15.0, 101)
    lhs = mu(params, r) * (-3 * r / params.Lambda)
    rhs = (r - hz.r_bh) * (r - hz.r_dS) * (r - hz.r_neg)
    assert np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1.0)) < 1e-10


def test_mu_positive_exactly_in_static_region(params, hz):
    r = np.random.default_rng(0).uniform(1e-3, 30.0, 1000)
    inside = (r > hz.r_bh) & (r < hz.r_dS)
    assert np.array_equal(mu(params, r) > 0, inside)


def test_surface_gravities_decrease_toward_extremality():
    # kappa_dS also vanishes as Lambda -> 0, so the ray starts past its maximum
    lams = np.linspace(0.6, 0.9999, 25) / 9.0
    kb = [horizons(SpacetimeParams(1.0, lam)).kappa_bh for lam in lams]
    kd = [horizons(SpacetimeParams(1.0, lam)).kappa_dS for lam in lams]
    assert np.all(np.diff(kb) < 0) and np.all(np.diff(kd) < 0)
    assert kb[-1] < 0.01 and kd[-1] < 0.01 and min(kd) > 0


def test_tortoise_anchor_and_derivative(params, hz):
    ra = r_anchor(params, hz)
    assert abs(tortoise(params, hz, ra)) < 1e-13
    r0, h = 0.5 * (hz.r_bh + hz.r_dS), 1e-5
    d = (tortoise(params, hz, r0 + h) - tortoise(params, hz, r0 - h)) / (2 * h)
    assert_allclose(d, 1 / mu(params, r0), rtol=1e-8)
    with pytest.raises(OutOfDomain):
        tortoise(params, hz, hz.r_dS + 0.1)


def test_tortoise_log_divergence_at_bh(params, hz):
    r = hz.r_bh + 10.0 ** -np.arange(3, 11)
    eps = r - hz.r_bh  # exact offsets of the representable radii
    diff = tortoise(params, hz, r) - np.log(eps) / (2 * hz.kappa_bh)
    c_bh, _ = horizon_constants(params, hz)
    assert_allclose(diff[-1], c_bh, atol=1e-8)
    assert np.all(np.abs(np.diff(diff)) < 10 * eps[:-1])


def test_tortoise_round_trip(params, hz):
    r = np.random.default_rng(1).uniform(hz.r_bh + 1e-6, hz.r_dS - 1e-6, 100)
    assert_allclose(tortoise_inverse(params, hz, tortoise(params, hz, r)), r, rtol=1e-10)
    assert_allclose(tortoise_inverse(params, hz, 0.0), r_anchor(params, hz), rtol=1e-13)


def test_tortoise_inverse_deep_bh(params, hz):
    r, z_bh, _ = tortoise_inverse_offsets(params, hz, -50.0)
    c_bh, _ = horizon_constants(params, hz)
    leading = math.exp(2 * hz.kappa_bh * (-50.0 - c_bh))
    assert 0 < z_bh < 2 * math.exp(-2 * hz.kappa_bh * 50) * math.exp(-2 * hz.kappa_bh * c_bh)
    # next order of the expansion is O(leading^2)
    assert_allclose(z_bh, leading, rtol=1e-6)
    assert_allclose(r, hz.r_bh + z_bh, rtol=1e-15)


def test_radial_grid_matches_inverse(params, hz):
    g = radial_grid(params, hz, -300.0, 900.0, 0.5)
    assert_allclose(g.dr_star, 0.5)
    idx = [0, 1, 1200, len(g) - 1]
    z, zb, zd = tortoise_inverse_offsets(params, hz, g.r_star[idx])
    assert_allclose(g.z_bh[idx], zb, rtol=1e-12)
    assert_allclose(g.z_dS[idx], zd, rtol=1e-12)
    assert np.all(g.mu > 0)
    # mu from the offsets survives where 1 - 2m/r - Lambda r^2/3 cancels
    assert_allclose(g.mu[0], 2 * hz.kappa_bh * g.z_bh[0], rtol=1e-6)


def test_de_sitter_flag(ds_params):
    hz = horizons(ds_params)
    assert_allclose([hz.r_dS, hz.kappa_dS], [1.0, 1.0], rtol=1e-15)
    r = np.linspace(0.0, 0.99, 12)
    assert_allclose(tortoise(ds_params, hz, r), np.arctanh(r), rtol=1e-12, atol=1e-15)
    assert_allclose(tortoise_inverse(ds_params, hz, np.arctanh(r[1:])), r[1:], rtol=1e-12)
