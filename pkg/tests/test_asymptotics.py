import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsswave.asymptotics import (
    fit_tail,
    gregory_weights,
    mellin_forward,
    mellin_inverse,
    uniformity_check,
    write_fit_json,
)
from dsswave.errors import ContourOutsideAnalyticity, FitUnstable, ValidationError, WindowTooShort
from dsswave.evolve import WaveState
from dsswave.geometry import radial_grid


def _damped(t, c=2.5, nu=0.3, om=1.1, ph=0.4):
    return c + np.exp(-nu * t) * np.cos(om * t + ph)


def test_fit_synthetic_noisy():
    t = np.linspace(0, 40, 2001)
    y = _damped(t) + 0.01 * np.random.default_rng(1).standard_normal(t.size)
    f = fit_tail(t, y, (0, 40), nested=False)
    assert_allclose([f.c, f.nu, f.omega], [2.5, 0.3, 1.1], rtol=0.02)
    assert_allclose(f.rms, 0.01, rtol=0.1)
    assert f.branch == "damped"


def test_fit_exact_and_nested():
    t = np.linspace(0, 40, 2001)
    f = fit_tail(t, _damped(t), (0, 40))
    assert_allclose([f.c, f.nu, f.omega, f.a], [2.5, 0.3, 1.1, 1.0], rtol=1e-8)
    assert_allclose(math.remainder(f.phase - 0.4, 2 * math.pi), 0.0, atol=1e-8)
    assert f.stable and len(f.c_windows) == 3
    assert_allclose(f.model(t), _damped(t), atol=1e-9)


def test_fit_scale_equivariance():
    t = np.linspace(0, 40, 2001)
    y = _damped(t)
    f1 = fit_tail(t, y, (0, 40))
    f2 = fit_tail(t, 2 * y, (0, 40))
    assert f2.c == 2 * f1.c and f2.a == 2 * f1.a
    assert f2.nu == f1.nu and f2.omega == f1.omega


def test_fit_constant_branch():
    t = np.linspace(0, 10, 101)
    f = fit_tail(t, np.full(t.size, 3.3))
    assert f.branch == "constant" and f.c == 3.3 and f.nu == 0.0


def test_fit_two_modes_slowest_dominates():
    t = np.linspace(0, 80, 2001)
    y = 0.2 + np.exp(-0.08 * t) + 0.7 * np.exp(-0.1 * t) * np.cos(0.9 * t)
    # seeded from approximate resonances, as the pipeline does
    f = fit_tail(t, y, (0, 80), n_modes=2, guess=[0.07j, 0.95 + 0.12j])
    assert_allclose([f.c, f.nu], [0.2, 0.08], rtol=1e-4)
    # cos(omega t) with omega -> 0 is flat to second order
    assert f.omega < 1e-3
    assert_allclose(sorted(m[0] for m in f.modes), [0.08, 0.1], rtol=1e-3)


def test_fit_window_errors():
    t = np.linspace(0, 10, 101)
    y = _damped(t, nu=0.05)
    with pytest.raises(WindowTooShort):
        fit_tail(t, y, (0, 10), nu_guess=0.05)
    with pytest.raises(WindowTooShort):
        fit_tail(t, y, (0, 0.1))
    with pytest.raises(ValidationError):
        fit_tail(t, y, (0, 20))


def test_fit_unstable_raises():
    # a slow drift is not a constant: c moves with the window
    t = np.linspace(0, 40, 2001)
    y = 1.0 + 0.01 * t + np.exp(-0.5 * t) * np.cos(t)
    with pytest.raises(FitUnstable):
        fit_tail(t, y, (0, 40))
    assert not fit_tail(t, y, (0, 40), raise_unstable=False).stable


def test_fit_json(tmp_path):
    t = np.linspace(0, 40, 2001)
    f = fit_tail(t, _damped(t), (0, 40))
    path = tmp_path / "fit.json"
    write_fit_json(path, f)
    d = json.loads(path.read_text())
    assert_allclose(d["c"], f.c, rtol=1e-15)


def test_uniformity_check(params, hz):
    g = radial_grid(params, hz, -50.0, 50.0, 0.5)
    snaps = []
    for t in (10.0, 20.0, 30.0, 40.0):
        psi = 1.5 + np.exp(-0.2 * t) * np.cos(g.r_star / 10.0)
        snaps.append(WaveState(t, g.r * psi, np.zeros(len(g)), 0, g))
    rep = uniformity_check(snaps, 1.5)
    assert rep.passed
    assert_allclose(rep.rate_deviation, 0.2, rtol=1e-6)
    assert_allclose(rep.rate_derivative, 0.2, rtol=1e-3)
    flat = [WaveState(s.t, g.r * 1.5, s.pi, 0, g) for s in snaps]
    assert uniformity_check(flat, 1.5).passed


def test_gregory_weights_exp():
    for n in (101, 1001):
        x = np.linspace(0.0, 1.0, n)
        err = gregory_weights(n, x[1] - x[0]) @ np.exp(x) - (math.e - 1.0)
        assert abs(err) < 1e-12
    assert_allclose(gregory_weights(5, 1.0, order=0), [0.5, 1, 1, 1, 0.5])


def test_mellin_of_power():
    # v = T^a with T = e^{-t}: v^(sigma) = 1 / (a + i sigma)
    a = 1.0
    t = np.arange(0.0, 60.0, 0.005)
    sig = np.linspace(-3.0, 3.0, 10) - 0.5j
    d = mellin_forward(t, np.exp(-a * t), -0.5, sigma=sig)
    assert np.max(np.abs(d.values - 1.0 / (a + 1j * sig))) < 1e-8


def _bump(t, a=2.0, b=12.0):
    u = np.clip((t - a) * (b - t) / 25.0, 1e-300, None)
    return np.where((t > a) & (t < b), np.exp(-1.0 / u), 0.0)


def test_mellin_bump_decay():
    t = np.arange(0.0, 20.0, 0.05)
    for s in (-0.2, -0.5):
        vals = np.abs(mellin_forward(t, _bump(t), s, sigma=np.array([10.0, 20.0, 40.0]) + 1j * s).values)
        # faster than any power: each doubling gains more than 2^4
        assert vals[1] < vals[0] / 16 and vals[2] < vals[1] / 16


def test_mellin_round_trip():
    t = np.arange(0.0, 20.0, 0.05)
    b = _bump(t)
    d = mellin_forward(t, b, -0.3)
    assert np.max(np.abs(mellin_inverse(d) - b)) < 1e-6
    two = np.stack([b, 2 * b], axis=1)
    assert_allclose(mellin_inverse(mellin_forward(t, two, -0.3))[:, 1], 2 * b, atol=1e-6)


def test_mellin_contour_outside_analyticity():
    t = np.arange(0.0, 10.0, 0.1)
    with pytest.raises(ContourOutsideAnalyticity):
        mellin_forward(t, np.ones_like(t), 0.1)
    with pytest.raises(ContourOutsideAnalyticity):
        mellin_forward(t, np.exp(-t), -1.5, growth=-2.0)


def _short_run(params, hz, data=True):
    from dsswave.evolve import CutoffSpec, EvolutionConfig, evolve, gaussian, initial_state
    from dsswave.modes import potential

    g = radial_grid(params, hz, -120.0, 220.0, 0.1)
    pot = potential(params, hz, g, 0)
    amp = 1.0 if data else 0.0
    st = initial_state(g, 0, gaussian(g, 5.0, 2.0, amp), gaussian(g, 5.0, 2.0, 0.5 * amp))
    cfg = EvolutionConfig(0.1, 0.9, 40.0, cadence=10)
    return evolve(st, pot, cfg, cutoff=CutoffSpec()), evolve(st, pot, cfg), pot


def test_mellin_reconstruct_zero_data(params, hz):
    from dsswave.asymptotics import mellin_reconstruct

    ser, _, pot = _short_run(params, hz, data=False)
    rec = mellin_reconstruct(ser, pot)
    assert rec.c == 0.0 and rec.rel_error == 0.0 and rec.remainder_ok
    assert np.all(rec.v_freq == 0.0)


def test_mellin_reconstruct_input_errors(params, hz):
    from dsswave.asymptotics import mellin_reconstruct

    ser, plain, pot = _short_run(params, hz)
    with pytest.raises(ValidationError):
        mellin_reconstruct(plain, pot)
    with pytest.raises(ContourOutsideAnalyticity):
        mellin_reconstruct(ser, pot, s=(0.02, -0.03))
    with pytest.raises(ValidationError):
        mellin_reconstruct(ser, pot, eps_prime=-0.1)
