import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.signal import fftconvolve

from dsswave.errors import NearResonance, ValidationError
from dsswave.geometry import horizons, radial_grid
from dsswave.modes import free_potential, potential
from dsswave.resolvent import (
    CONVENTION,
    JostShooter,
    find_resonances,
    is_conjugation_symmetric,
    residue_at_zero,
    residue_weight_closed_form,
    solve,
    solve_dense,
    solve_jost,
    strip_bound_scan,
    wronskian,
    write_resonance_csv,
)


@pytest.fixture(scope="module")
def grid(params, hz):
    return radial_grid(params, hz, -60.0, 150.0, 0.05)


def _delta(grid, x0=0.0):
    g = np.zeros(len(grid))
    g[grid.index_of(x0)] = 1.0 / grid.dr_star
    return g


def test_convention_consistent():
    CONVENTION.check()


def test_solve_delta_source(params, hz, grid):
    pot = potential(params, hz, grid, 1)
    sol = solve(-1j, 1, _delta(grid), grid, pot)
    assert sol.residual < 1e-8
    peak = np.max(np.abs(sol.w))
    assert abs(sol.w[0]) < 1e-20 * peak and abs(sol.w[-1]) < 1e-20 * peak


def test_solve_matches_dense(params, hz, grid):
    rng = np.random.default_rng(2)
    g = np.exp(-((grid.r_star - 3.0) ** 2)) * (1 + 0.1 * rng.standard_normal(len(grid)))
    for ell in (0, 1, 2):
        pot = potential(params, hz, grid, ell)
        for sigma in (0.7 - 0.3j, -0.2 - 0.05j, 1.5 - 1.0j):
            w = solve(sigma, ell, g, grid, pot).w
            wd = solve_dense(sigma, ell, g, grid, pot)
            assert np.max(np.abs(w - wd)) < 1e-6 * np.max(np.abs(wd))


def test_free_green_function(params, hz):
    # V = 0 hook: outgoing Green's function e^{-i sigma |x - s|} / (2 i sigma)
    grid = radial_grid(params, hz, -20.0, 20.0, 0.002)
    x = grid.r_star
    g = np.exp(-(x**2))
    sigma = 0.8 - 0.4j
    w = solve(sigma, 0, g, grid, free_potential(grid)).w
    n = len(grid)
    offsets = grid.dr_star * np.arange(-(n - 1), n)
    kernel = np.exp(-1j * sigma * np.abs(offsets)) / (2j * sigma)
    exact = fftconvolve(g, kernel)[n - 1 : 2 * n - 1] * grid.dr_star
    sl = slice(2000, 18001)
    assert np.max(np.abs(w[sl] - exact[sl])) < 1e-6 * np.max(np.abs(exact))


def test_self_adjoint_bound(params, hz):
    grid = radial_grid(params, hz, -100.0, 300.0, 0.1)
    pot = potential(params, hz, grid, 0)
    g = np.exp(-((grid.r_star - 2.0) ** 2 / 4.0))
    for sigma in (1.0 - 0.2j, 0.3 - 0.5j, 2.0 - 0.05j):
        w = solve(sigma, 0, g, grid, pot).w
        assert np.linalg.norm(w) <= np.linalg.norm(g) / abs((sigma**2).imag)


def test_wronskian_zero_mode(params, hz):
    scale = abs(wronskian(0.05j, 0, params, hz))
    assert abs(wronskian(0.0, 0, params, hz)) < 1e-6 * scale
    assert abs(wronskian(0.0, 1, params, hz)) > 1.0


def test_wronskian_conjugation_symmetry(params, hz):
    rng = np.random.default_rng(0)
    sig = rng.uniform(-1, 1, 20) + 1j * rng.uniform(-0.5, 0.15, 20)
    sh = JostShooter(params, hz, 1)
    W = sh.wronskian(sig)
    Wm = sh.wronskian(-np.conj(sig))
    assert_allclose(Wm, np.conj(W), rtol=1e-10)


def test_wronskian_cauchy_riemann(params, hz):
    sh = JostShooter(params, hz, 0)
    d = 1e-5
    for s0 in (0.3 - 0.1j, -0.15 + 0.05j, 0.5 + 0.08j):
        f = sh.regularized_wronskian(np.array([s0 + d, s0 - d, s0 + 1j * d, s0 - 1j * d]))
        dx = (f[0] - f[1]) / (2 * d)
        dy = (f[2] - f[3]) / (2 * d)
        assert abs(dy - 1j * dx) < 1e-6 * max(1.0, abs(dx))


def test_resonance_box_l0(params, hz):
    box = (-0.1, 0.1, -0.05, 0.3 * hz.kappa_bh)
    res = find_resonances(0, box, params, hz)
    assert len(res) == 1
    assert abs(res[0].sigma) < 1e-10 and res[0].simple and res[0].resolvent_pole
    assert is_conjugation_symmetric(res, box)


def test_no_small_resonance_l1(params, hz):
    k = 0.1 * hz.kappa_min
    assert find_resonances(1, (-k, k, -k, k), params, hz) == []


def test_lowest_resonances_symmetric(params, hz):
    box = (-0.4, 0.4, -0.02, 0.15)
    res = find_resonances(1, box, params, hz)
    assert is_conjugation_symmetric(res, box)
    # frozen from an independent run with a finer shooting step
    lowest = min(res, key=lambda r: r.sigma.imag)
    assert_allclose(lowest.sigma.imag, 0.0815654957, rtol=1e-6)
    assert abs(lowest.sigma.real) < 1e-8


def test_residue_constant_and_linear(params, hz, grid):
    pot = potential(params, hz, grid, 0)
    x = grid.r_star
    g1 = np.exp(-((x - 2.0) ** 2))
    g2 = np.exp(-((x + 5.0) ** 2) / 3.0) * np.cos(x)
    r1 = residue_at_zero(g1, grid, pot)
    r2 = residue_at_zero(g2, grid, pot)
    r12 = residue_at_zero(g1 + g2, grid, pot)
    assert r1.deviation < 1e-6 and r2.deviation < 1e-6
    assert_allclose(r12.residue, r1.residue + r2.residue, rtol=1e-12, atol=1e-14 * np.max(np.abs(r12.residue)))
    # the residue pairs g with r: c = w0 * int g r dr_*
    assert_allclose(r1.gamma_res, residue_weight_closed_form(hz), rtol=1e-3)


def test_residue_rejects_l1(params, hz, grid):
    with pytest.raises(ValidationError):
        residue_at_zero(np.ones(len(grid)), grid, potential(params, hz, grid, 1))


def test_near_resonance_raises(params, hz, grid):
    pot = potential(params, hz, grid, 0)
    with pytest.raises(NearResonance):
        solve(0.0, 0, np.ones(len(grid)), grid, pot, near_tol=1e-3)


def test_strip_scan(params, hz):
    grid = radial_grid(params, hz, -100.0, 300.0, 0.05)
    g = np.exp(-((grid.r_star - 1.0) ** 2))
    pot1 = potential(params, hz, grid, 1)
    sig, sur, raw, slope = strip_bound_scan(1, -0.5, np.geomspace(1.0, 30.0, 8), grid, pot1, g)
    assert np.all(np.isfinite(sur)) and np.isfinite(slope) and slope < 3.0
    pot0 = potential(params, hz, grid, 0)
    s = 0.2 * hz.kappa_bh
    _, sur0, raw0, _ = strip_bound_scan(0, s, np.linspace(0.05, 2.0, 8), grid, pot0, g, delta=2 * s)
    assert np.all(np.isfinite(sur0))
    # on the unphysical side w grows toward the ends; the weight tames it
    assert np.all(sur0 < raw0)


def test_solve_jost_agrees_with_discrete(params, hz, grid):
    pot = potential(params, hz, grid, 1)
    g = np.exp(-((grid.r_star - 1.0) ** 2))
    a = solve_jost(0.4 - 0.2j, 1, g, grid, pot).w
    b = solve(0.4 - 0.2j, 1, g, grid, pot).w
    assert np.max(np.abs(a - b)) < 1e-3 * np.max(np.abs(b))


def test_resonance_csv(tmp_path, params, hz):
    res = find_resonances(0, (-0.1, 0.1, -0.05, 0.05), params, hz)
    path = tmp_path / "res.csv"
    write_resonance_csv(path, res)
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["ell", "re_sigma", "im_sigma"] and len(rows) == 2
    assert b"\r" not in path.read_bytes()
