import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsswave.errors import CFLViolation, NonFiniteDetected, ValidationError
from dsswave.evolve import (
    CutoffSpec,
    EvolutionConfig,
    default_grid,
    energy,
    evolve,
    evolve_3d,
    gaussian,
    initial_state,
    read_snapshot,
    write_probe_csv,
    write_snapshot,
)
from dsswave.geometry import radial_grid
from dsswave.modes import ModePotential, angular_quadrature, free_potential, potential, real_sph_harm


def _setup(params, hz, lo, hi, h, ell=1):
    g = radial_grid(params, hz, lo, hi, h)
    return g, potential(params, hz, g, ell)


def test_default_grid_scaled_by_surface_gravity(params, hz, ds_params):
    g = default_grid(params)
    assert_allclose([g.r_star_min, g.r_star_max], [-80 / hz.kappa_bh, 80 / hz.kappa_dS], atol=0.1)
    gd = default_grid(ds_params)
    assert gd.r_star_min == 0.0 and gd.r[0] == 0.0


def test_zero_data_stays_zero(params, hz):
    g, pot = _setup(params, hz, -50, 80, 0.1, ell=0)
    ser = evolve(initial_state(g, 0, np.zeros(len(g))), pot, EvolutionConfig(0.1, 0.9, 20.0))
    assert np.all(ser.phi == 0.0) and np.all(ser.final.phi == 0.0)


def test_free_translation(params, hz):
    # V = 0 at cfl = 1 propagates a right-moving pulse; only the start step errs
    g = radial_grid(params, hz, -30.0, 60.0, 0.05)
    x = g.r_star
    f = np.exp(-(x**2))
    st = initial_state(g, 0, f, 2 * x * f)
    ser = evolve(st, free_potential(g), EvolutionConfig(0.05, 1.0, 20.0, probes=(20.0,)))
    assert np.max(np.abs(ser.final.phi - np.exp(-((x - 20.0) ** 2)))) < 1e-3


def test_convergence_order(params, hz):
    finals = []
    for h in (0.2, 0.1, 0.05):
        g, pot = _setup(params, hz, -80.0, 100.0, h)
        st = initial_state(g, 1, gaussian(g, 5.0, 2.0), gaussian(g, 5.0, 2.0, 0.5))
        ser = evolve(st, pot, EvolutionConfig(h, 0.5, 30.0, cadence=1000))
        finals.append(ser.final.phi[:: int(round(0.2 / h))])
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert_allclose(math.log2(e1 / e2), 2.0, rtol=0.2)


def test_reflecting_energy(params, hz):
    g, pot = _setup(params, hz, -30.0, 50.0, 0.1)
    st = initial_state(g, 1, gaussian(g, 5.0, 2.0), gaussian(g, 5.0, 2.0, 0.5))
    cfg = EvolutionConfig(0.1, 0.5, 500.0, boundary="reflecting", cadence=10)
    ser = evolve(st, pot, cfg)
    assert cfg.steps()[0] == 10000
    assert np.max(np.abs(ser.energy / ser.energy[0] - 1.0)) < 1e-4
    assert_allclose(ser.energy[0], energy(st, pot), rtol=1e-12)


def test_domain_of_dependence(params, hz):
    h, T = 0.1, 30.0
    runs = []
    for pad in (0.0, 20.0):
        g, pot = _setup(params, hz, -60.0 - pad, 80.0 + pad, h)
        st = initial_state(g, 1, gaussian(g, 5.0, 2.0), gaussian(g, 5.0, 2.0, 0.5))
        ser = evolve(st, pot, EvolutionConfig(h, 0.9, T, probes=(-10.0, 0.0, 10.0, 25.0)))
        runs.append(ser.phi)
    # the numerical speed is 1/cfl; the probes stay outside the boundaries' range
    assert np.max(np.abs(runs[0] - runs[1])) < 1e-8


def test_local_perturbation_causality(params, hz):
    h = 0.1
    g, pot = _setup(params, hz, -60.0, 80.0, h)
    base = gaussian(g, 0.0, 1.0)
    bump = 1e-3 * gaussian(g, 40.0, 0.5) * (np.abs(g.r_star - 40.0) < 4.0)
    cfg = EvolutionConfig(h, 0.9, 10.0, probes=(0.0, 10.0))
    a = evolve(initial_state(g, 1, base), pot, cfg).phi
    b = evolve(initial_state(g, 1, base + bump), pot, cfg).phi
    # support of the bump is [36, 44]; 10 / 0.9 < 26
    assert np.max(np.abs(a - b)) == 0.0


def test_deterministic(params, hz, tmp_path):
    g, pot = _setup(params, hz, -40.0, 60.0, 0.1)
    st = initial_state(g, 1, gaussian(g, 5.0, 2.0))
    cfg = EvolutionConfig(0.1, 0.9, 20.0, probes=(-5.0, 5.0))
    paths = []
    for k in range(2):
        p = tmp_path / f"run{k}.csv"
        write_probe_csv(p, evolve(st, pot, cfg))
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert b"\r\n" not in paths[0].read_bytes()


def test_time_reversal(params, hz):
    g, pot = _setup(params, hz, -30.0, 50.0, 0.1)
    st = initial_state(g, 1, gaussian(g, 5.0, 2.0), gaussian(g, 5.0, 2.0, 0.5))
    cfg = EvolutionConfig(0.1, 0.9, 25.0, boundary="reflecting")
    fwd = evolve(st, pot, cfg).final
    back = evolve(initial_state(g, 1, fwd.phi, -fwd.pi), pot, cfg).final
    assert np.max(np.abs(back.phi - st.phi)) < 1e-10
    assert np.max(np.abs(back.pi + st.pi)) < 1e-10


def test_config_errors(params, hz):
    g, pot = _setup(params, hz, -10.0, 10.0, 0.1)
    st = initial_state(g, 1, gaussian(g, 0.0, 1.0))
    with pytest.raises(CFLViolation):
        evolve(st, pot, EvolutionConfig(0.1, 1.2, 1.0))
    with pytest.raises(ValidationError):
        evolve(st, pot, EvolutionConfig(0.2, 0.9, 1.0))
    with pytest.raises(ValidationError):
        evolve(st, pot, EvolutionConfig(0.1, 0.9, 1.0, boundary="periodic"))
    with pytest.raises(NonFiniteDetected):
        initial_state(g, 1, np.full(len(g), np.nan))
    # an absurd potential overflows within a few steps
    huge = ModePotential(1, np.full(len(g), 1e305), g)
    with pytest.raises(NonFiniteDetected), np.errstate(over="ignore", invalid="ignore"):
        evolve(st, huge, EvolutionConfig(0.1, 0.9, 1.0, check_every=1))


def test_de_sitter_origin_pinned(ds_params):
    g = default_grid(ds_params, 20.0, 0.05)
    pot = potential(ds_params, g.horizons, g, 0)
    st = initial_state(g, 0, gaussian(g, 2.0, 0.3), gaussian(g, 2.0, 0.3, 0.5))
    assert st.phi[0] == 0.0
    ser = evolve(st, pot, EvolutionConfig(0.05, 0.9, 5.0, snapshot_times=(2.5,)))
    assert ser.final.phi[0] == 0.0 and ser.snapshots[0].phi[0] == 0.0


def test_final_step_recorded(params, hz):
    g, pot = _setup(params, hz, -10.0, 10.0, 0.1)
    cfg = EvolutionConfig(0.1, 0.9, 7.0, cadence=7)
    ser = evolve(initial_state(g, 1, gaussian(g, 0.0, 1.0)), pot, cfg)
    assert_allclose(ser.t[-1], 7.0)
    assert np.all(np.diff(ser.t) > 0)


def test_cutoff_record(params, hz):
    g, pot = _setup(params, hz, -120.0, 220.0, 0.1, ell=0)
    st = initial_state(g, 0, gaussian(g, 5.0, 2.0), gaussian(g, 5.0, 2.0, 0.5))
    ser = evolve(st, pot, EvolutionConfig(0.1, 0.9, 60.0, cadence=10), cutoff=CutoffSpec())
    rec = ser.cutoff
    n_steps = EvolutionConfig(0.1, 0.9, 60.0).steps()[0]
    assert rec.F.shape[0] == n_steps + 1
    # the forcing lives where chi is switching on; it is zero before t_c
    early = np.asarray(abs(rec.F[: int(5.0 / rec.dt)]).sum())
    assert early == 0.0 and rec.F.nnz > 0


def test_evolve_3d_linearity_and_y10(params, hz):
    g = radial_grid(params, hz, -40.0, 60.0, 0.1)
    quad = angular_quadrature(2)
    TH, PH = quad.mesh()
    prof = gaussian(g, 5.0, 2.0) / g.r
    ang = 1.0 + real_sph_harm(1, 0, TH, PH)
    u0 = prof[:, None, None] * ang[None]
    u1 = 0.5 * u0
    cfg = EvolutionConfig(0.1, 0.9, 20.0, probes=(0.0,))
    pts = [(0.0, 0.3, 1.0), (0.0, 2.0, 4.0)]
    a = evolve_3d(g, quad, u0, u1, 2, cfg, pts)
    b = evolve_3d(g, quad, 2 * u0, 2 * u1, 2, cfg, pts)
    assert set(a.channels) == {(0, 0), (1, 0)}
    assert_allclose(b.point_values, 2 * a.point_values, rtol=1e-13, atol=1e-300)
    y10 = real_sph_harm(1, 0, TH, PH)[None]
    c = evolve_3d(g, quad, prof[:, None, None] * y10, 0.5 * prof[:, None, None] * y10, 2, cfg, pts)
    assert c.c == 0.0 and set(c.channels) == {(1, 0)}


def test_snapshot_round_trip(params, hz, tmp_path):
    g, pot = _setup(params, hz, -10.0, 10.0, 0.1)
    st = initial_state(g, 1, gaussian(g, 0.0, 1.0), gaussian(g, 1.0, 1.0, 0.3))
    path = tmp_path / "snap.csv"
    write_snapshot(path, st)
    header, xs, phi, pi = read_snapshot(path)
    assert header["ell"] == 1 and header["grid"]["n"] == len(g)
    assert np.array_equal(xs, g.r_star) and np.array_equal(phi, st.phi) and np.array_equal(pi, st.pi)
