"""
Time-domain evolution of ``d_t^2 phi = d_{r_*}^2 phi - V_l phi`` for one channel.

The scheme is the staggered (kick-drift) leapfrog on a uniform ``r_*`` grid::

    pi^{n+1/2}  = pi^{n-1/2} + dt (D^2 phi^n - V phi^n)
    phi^{n+1}   = phi^n + dt pi^{n+1/2}

which is the three-level scheme ``phi^{n+1} - 2 phi^n + phi^{n-1} = dt^2 L phi^n``
in the interior.  Boundary nodes use first-order upwind outgoing updates
``d_t phi = +d_{r_*} phi`` (left) and ``d_t phi = -d_{r_*} phi`` (right), or
``phi = 0`` for the reflecting test mode.  In pure de Sitter the first node
is the origin, where ``phi = 0`` always.

An optional :class:`CutoffSpec` records the discrete commutator source
``F = (d_t^2 - L)(chi phi)`` of a cutoff ``chi`` built from the temporal-face
defining function; :mod:`dsswave.asymptotics` uses it for the Mellin round trip.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .charts import ChartConfig, log_f, smooth_step
from .errors import CFLViolation, NonFiniteDetected, ValidationError
from .geometry import RadialGrid, SpacetimeParams, horizons, radial_grid
from .modes import AngularQuadrature, ModePotential, potential, project, real_sph_harm

__all__ = [
    "WaveState",
    "EvolutionConfig",
    "CutoffSpec",
    "CutoffRecord",
    "ProbeSeries",
    "Evolve3DResult",
    "initial_state",
    "gaussian",
    "default_grid",
    "evolve",
    "energy",
    "evolve_3d",
    "write_snapshot",
    "read_snapshot",
    "write_probe_csv",
]


@dataclass
class WaveState:
    """``phi = r psi`` and ``pi = d_t phi`` at time ``t`` on ``grid``."""

    t: float
    phi: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)
    ell: int
    grid: RadialGrid = field(repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        n = len(self.grid)
        if self.phi.shape != (n,) or self.pi.shape != (n,):
            raise ValidationError("state arrays must match the grid length")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.pi))):
            raise NonFiniteDetected("state contains non-finite entries")

    @property
    def psi(self) -> np.ndarray:
        """``phi / r`` (the origin node of pure de Sitter takes the limit ``d_r phi``)."""
        r = self.grid.r
        out = np.empty_like(self.phi)
        pos = r > 0
        out[pos] = self.phi[pos] / r[pos]
        if not np.all(pos):
            # phi ~ psi(0) r near the origin; one-sided slope in r
            out[~pos] = self.phi[1] / r[1]
        return out


def default_grid(params: SpacetimeParams, extent: float = 80.0, dr_star: float = 0.1) -> RadialGrid:
    """Grid ``[-extent / kappa_bh, extent / kappa_dS]`` rounded outward to whole steps.

    The extent is in surface-gravity units, so ``mu`` at either end is about
    ``e^{-2 extent}`` and the outgoing rows see a negligible potential.
    Pure de Sitter uses ``[0, extent / kappa_dS]``.
    """
    hz = horizons(params)
    hi = dr_star * math.ceil(extent / hz.kappa_dS / dr_star - 1e-9)
    lo = 0.0 if hz.de_sitter else -dr_star * math.ceil(extent / hz.kappa_bh / dr_star - 1e-9)
    return radial_grid(params, hz, lo, hi, dr_star)


def gaussian(grid: RadialGrid, center: float, width: float, amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * exp(-(r_* - center)^2 / (2 width^2))`` on the grid."""
    return amplitude * np.exp(-0.5 * ((grid.r_star - center) / width) ** 2)


def initial_state(grid: RadialGrid, ell: int, phi0, pi0=None, t0: float = 0.0) -> WaveState:
    phi0 = np.asarray(phi0, dtype=float)
    pi0 = np.zeros_like(phi0) if pi0 is None else np.asarray(pi0, dtype=float)
    if grid.horizons.de_sitter:
        phi0 = phi0.copy()
        pi0 = pi0.copy()
        phi0[0] = pi0[0] = 0.0
    return WaveState(t0, phi0, pi0, ell, grid)


@dataclass(frozen=True)
class EvolutionConfig:
    """Evolution settings.

    Parameters
    ----------
    dr_star : float
        Grid spacing; must equal the grid's.
    cfl : float
        ``dt / dr_star``; at most 1.
    t_end : float
        Final time.
    boundary : {"outgoing", "reflecting"}
        Reflecting (``phi = 0``) is for tests only.
    probes : tuple of float
        ``r_*`` positions of the probes (nearest node is used).
    cadence : int
        Record every ``cadence`` steps.
    snapshot_times : tuple of float
        Times at which full states are stored (nearest step).
    check_every : int
        Finite-value guard interval in steps.
    """

    dr_star: float = 0.1
    cfl: float = 0.9
    t_end: float = 300.0
    boundary: str = "outgoing"
    probes: tuple = (0.0,)
    cadence: int = 1
    snapshot_times: tuple = ()
    check_every: int = 100

    def validate(self, grid: RadialGrid) -> None:
        if not (0.0 < self.cfl <= 1.0):
            raise CFLViolation(f"CFL ratio {self.cfl} must lie in (0, 1] for the leapfrog scheme")
        if not math.isclose(self.dr_star, grid.dr_star, rel_tol=1e-9):
            raise ValidationError(f"dr_star {self.dr_star} does not match the grid spacing {grid.dr_star}")
        if self.boundary not in ("outgoing", "reflecting"):
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        if self.t_end <= 0 or self.cadence < 1:
            raise ValidationError("t_end must be positive and cadence at least 1")

    def steps(self):
        """``(n_steps, dt)`` with ``n_steps * dt = t_end`` and ``dt <= cfl * dr_star``."""
        n = int(math.ceil(self.t_end / (self.cfl * self.dr_star) - 1e-9))
        return n, self.t_end / n


@dataclass(frozen=True)
class CutoffSpec:
    """Cutoff ``chi = Phi((t - t_c - log f(r)) / width)`` with ``Phi`` a smooth step.

    ``chi`` is a function of the temporal-face defining function
    ``x = f(r) e^{-t}`` only (``chi = Phi((-log x - t_c)/width)``), equal to 1
    near the temporal face and 0 for early times.  The source is kept on the
    sub-grid ``[r_star_min, r_star_max]``; frames of ``chi phi`` are stored
    every ``v_every`` steps for verification.
    """

    t_c: float = 10.0
    width: float = 20.0
    r_star_min: float = -100.0
    r_star_max: float = 200.0
    v_every: int = 10
    chart_config: ChartConfig = ChartConfig()

    def log_f(self, grid: RadialGrid):
        return log_f(grid.params, grid.r, self.chart_config, mu_r=grid.mu)

    def chi(self, t, lnf):
        return smooth_step((t - self.t_c - lnf) / self.width)


@dataclass
class CutoffRecord:
    """Recorded commutator source on the sub-grid.

    ``F`` is a sparse ``(n_steps + 1, N_sub)`` matrix whose row ``n`` is the
    source at ``t_n = n dt``; ``v`` holds ``chi phi`` at ``v_steps``.
    """

    spec: CutoffSpec
    sub: slice
    dt: float
    F: sparse.csr_matrix = field(repr=False)
    v_steps: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    F_outside: float = 0.0  # max |F| outside the sub-grid (truncation diagnostic)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.F.shape[0])


@dataclass
class ProbeSeries:
    """Recorded time series of one run.

    ``phi[k, p]`` is ``phi`` at ``t[k]`` and probe ``p``; ``psi`` divides by ``r``.
    ``sup`` is ``sup_r |phi|`` and ``energy`` the discrete energy.
    """

    t: np.ndarray = field(repr=False)
    probe_r_star: np.ndarray
    probe_r: np.ndarray
    phi: np.ndarray = field(repr=False)
    sup: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    ell: int = 0
    snapshots: list = field(default_factory=list, repr=False)
    final: WaveState | None = field(default=None, repr=False)
    cutoff: CutoffRecord | None = field(default=None, repr=False)

    @property
    def psi(self) -> np.ndarray:
        return self.phi / self.probe_r[None, :]

    def channel(self, k: int = 0, use_psi: bool = True):
        """``(t, values)`` of probe ``k``."""
        return self.t, (self.psi if use_psi else self.phi)[:, k]


def energy(state: WaveState, pot: ModePotential) -> float:
    """``1/2 int (pi^2 + (d_{r_*} phi)^2 + V phi^2) dr_*``.

    ``pi^2`` and ``V phi^2`` use the trapezoid rule; the gradient term uses
    one-sided differences on cell midpoints (trapezoid on the staggered grid).
    """
    h = state.grid.dr_star
    a = np.trapezoid(state.pi**2 + pot.V * state.phi**2, dx=h)
    b = np.sum(np.diff(state.phi) ** 2) / h
    return 0.5 * float(a + b)


def _n_records(n_steps, cadence):
    return n_steps // cadence + 1 + (1 if n_steps % cadence else 0)


def _record_times(n_steps, dt, cadence):
    steps = list(range(0, n_steps + 1, cadence))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return dt * np.array(steps, dtype=float)


def _laplacian_interior(phi, V, h):
    return (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (h * h) - V[1:-1] * phi[1:-1]


def evolve(initial: WaveState, pot: ModePotential, cfg: EvolutionConfig, cutoff: CutoffSpec | None = None) -> ProbeSeries:
    """Evolve ``initial`` to ``cfg.t_end``.

    Raises
    ------
    CFLViolation
        If ``cfg.cfl`` is outside ``(0, 1]``.
    NonFiniteDetected
        If the solution becomes non-finite (checked every ``cfg.check_every`` steps).
    """
    grid = initial.grid
    cfg.validate(grid)
    if initial.ell != pot.ell:
        raise ValidationError("state and potential channels differ")
    h = grid.dr_star
    n_steps, dt = cfg.steps()
    V = pot.V
    ds = grid.horizons.de_sitter
    reflecting = cfg.boundary == "reflecting"
    lam = dt / h

    probe_idx = np.array([grid.index_of(x) for x in cfg.probes], dtype=int)
    snap_steps = {int(round(ts / dt)): ts for ts in cfg.snapshot_times if 0 <= ts <= cfg.t_end + 1e-9}

    phi = initial.phi.copy()
    pi_half = np.empty_like(phi)  # pi^{n+1/2}

    # first half kick from the Taylor start
    lap = np.zeros_like(phi)
    lap[1:-1] = _laplacian_interior(phi, V, h)
    pi_half[:] = initial.pi + 0.5 * dt * lap

    n_rec = _n_records(n_steps, cfg.cadence)
    t_rec = np.empty(n_rec)
    phi_rec = np.empty((n_rec, probe_idx.size))
    sup_rec = np.empty(n_rec)
    e_rec = np.empty(n_rec)
    snapshots: list[WaveState] = []

    # cutoff bookkeeping
    if cutoff is not None:
        lnf = cutoff.log_f(grid)
        # the de Sitter origin stays in the sub-grid (Dirichlet node)
        lo = 0 if ds and cutoff.r_star_min <= 0 else max(grid.index_of(cutoff.r_star_min), 1)
        hi = min(grid.index_of(cutoff.r_star_max), len(grid) - 2)
        sub = slice(lo, hi + 1)
        rows, cols, vals = [], [], []
        v_steps, v_frames = [], []
        F_out = 0.0
        chi_prev = cutoff.chi(-dt, lnf)
        v_prev = chi_prev * (phi - dt * initial.pi)
        chi_cur = cutoff.chi(0.0, lnf)
        v_cur = chi_cur * phi
        if np.any(chi_cur[1:-1] > 0):
            raise ValidationError("the cutoff must vanish at t = 0 (increase t_c)")

    pi_prev = initial.pi.copy()
    k_rec = 0

    def record(n, phi_n, pi_n):
        nonlocal k_rec
        t_rec[k_rec] = n * dt
        phi_rec[k_rec] = phi_n[probe_idx]
        sup_rec[k_rec] = np.max(np.abs(phi_n))
        e_rec[k_rec] = energy(WaveState(n * dt, phi_n, pi_n, initial.ell, grid), pot)
        k_rec += 1

    record(0, phi, initial.pi)
    if 0 in snap_steps:
        snapshots.append(WaveState(0.0, phi.copy(), initial.pi.copy(), initial.ell, grid))

    for n in range(n_steps):
        # drift (interior), upwind ends
        new = phi + dt * pi_half
        if reflecting:
            new[0] = new[-1] = 0.0
        else:
            new[-1] = phi[-1] - lam * (phi[-1] - phi[-2])
            if ds:
                new[0] = 0.0
            else:
                new[0] = phi[0] + lam * (phi[1] - phi[0])
        if ds:
            new[0] = 0.0
        # kick
        lap[1:-1] = _laplacian_interior(new, V, h)
        pi_next = pi_half + dt * lap
        # pi at integer step n+1 (boundary nodes: finite difference of phi)
        pi_int = 0.5 * (pi_half + pi_next)
        pi_int[0] = (new[0] - phi[0]) / dt
        pi_int[-1] = (new[-1] - phi[-1]) / dt
        if cutoff is not None:
            t_next = (n + 1) * dt
            chi_next = cutoff.chi(t_next, lnf)
            v_next = chi_next * new
            F = (v_next - 2.0 * v_cur + v_prev) / dt**2
            F[1:-1] -= _laplacian_interior(v_cur, V, h)
            F[0] = F[-1] = 0.0
            # exact zero where chi is locally constant (0 or 1) on the stencil
            flat0 = (chi_prev == 0) & (chi_cur == 0) & (chi_next == 0)
            flat1 = (chi_prev == 1) & (chi_cur == 1) & (chi_next == 1)
            flat = flat0 | flat1
            flat[1:-1] &= flat[:-2] & flat[2:]
            F[flat] = 0.0
            Fs = F[sub]
            nz = np.nonzero(Fs)[0]
            if nz.size:
                rows.append(np.full(nz.size, n))
                cols.append(nz)
                vals.append(Fs[nz])
            outside = np.abs(F)
            outside[sub] = 0.0
            F_out = max(F_out, float(outside.max()))
            if (n + 1) % cutoff.v_every == 0:
                v_steps.append(n + 1)
                v_frames.append(v_next[sub].copy())
            chi_prev, chi_cur = chi_cur, chi_next
            v_prev, v_cur = v_cur, v_next

        phi = new
        pi_half = pi_next
        if (n + 1) % cfg.check_every == 0 and not np.all(np.isfinite(phi)):
            raise NonFiniteDetected(f"non-finite solution at t = {(n + 1) * dt:.3f}")
        if (n + 1) % cfg.cadence == 0 or n + 1 == n_steps:
            record(n + 1, phi, pi_int)
        if (n + 1) in snap_steps:
            snapshots.append(WaveState((n + 1) * dt, phi.copy(), pi_int.copy(), initial.ell, grid))
        pi_prev = pi_int

    if not np.all(np.isfinite(phi)):
        raise NonFiniteDetected("non-finite solution at the final time")
    final = WaveState(n_steps * dt, phi.copy(), pi_prev.copy(), initial.ell, grid)
    rec = None
    if cutoff is not None:
        N_sub = sub.stop - sub.start
        if rows:
            F_mat = sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_steps + 1, N_sub)
            )
        else:
            F_mat = sparse.csr_matrix((n_steps + 1, N_sub))
        rec = CutoffRecord(cutoff, sub, dt, F_mat, np.array(v_steps, dtype=int), np.array(v_frames).reshape(-1, N_sub), F_out)
    return ProbeSeries(
        t_rec[:k_rec],
        grid.r_star[probe_idx],
        grid.r[probe_idx],
        phi_rec[:k_rec],
        sup_rec[:k_rec],
        e_rec[:k_rec],
        initial.ell,
        snapshots,
        final,
        rec,
    )


# ---------------------------------------------------------------------------
# three-dimensional data via the mode sum
# ---------------------------------------------------------------------------


@dataclass
class Evolve3DResult:
    """Per-channel series plus resummed point probes.

    ``point_values[k, j]`` is ``u(t_k)`` at ``points[j] = (r_*, theta, phi)``;
    ``c`` is the constant carried by the ``l = 0`` channel (``psi_00 / sqrt(4 pi)``
    evaluated at the last recorded time).
    """

    channels: dict = field(repr=False)
    t: np.ndarray = field(repr=False)
    points: list
    point_values: np.ndarray = field(repr=False)
    c: float


def evolve_3d(
    grid: RadialGrid,
    quad: AngularQuadrature,
    u0,
    u1,
    L_max: int,
    cfg: EvolutionConfig,
    points=(),
    tol: float = 1e-8,
    skip_tol: float = 1e-14,
) -> Evolve3DResult:
    """Evolve Cauchy data ``(u, d_t u)`` sampled on ``grid x quad`` through the mode sum.

    ``u0`` and ``u1`` have shape ``(n_r, n_theta, n_phi)``.  Channels whose
    coefficients are below ``skip_tol`` (relative) are not evolved.  Point
    probes ``(r_*, theta, phi)`` are resummed from the channel probes, so
    every point radius must appear in ``cfg.probes``.
    """
    params, hz = grid.params, grid.horizons
    mc0 = project(u0, quad, L_max, tol)
    mc1 = project(u1, quad, L_max, tol)
    scale = max(max(np.max(np.abs(c)) for c in mc0.coeffs.values()), max(np.max(np.abs(c)) for c in mc1.coeffs.values()), 1e-300)
    r = grid.r
    n_steps, dt = cfg.steps()
    n_rec = _n_records(n_steps, cfg.cadence)
    channels = {}
    pots = {}
    for (ell, m), c0 in mc0.coeffs.items():
        c1 = mc1.coeffs[(ell, m)]
        if max(np.max(np.abs(c0)), np.max(np.abs(c1))) < skip_tol * scale:
            continue
        if ell not in pots:
            pots[ell] = potential(params, hz, grid, ell)
        st = initial_state(grid, ell, r * c0, r * c1)
        channels[(ell, m)] = evolve(st, pots[ell], cfg)
    probe_rs = np.array([grid.r_star[grid.index_of(x)] for x in cfg.probes])
    t = next(iter(channels.values())).t if channels else _record_times(n_steps, dt, cfg.cadence)
    vals = np.zeros((n_rec, len(points)))
    for j, (xs, th, ph) in enumerate(points):
        k = int(np.argmin(np.abs(probe_rs - grid.r_star[grid.index_of(xs)])))
        if abs(probe_rs[k] - grid.r_star[grid.index_of(xs)]) > 1e-12:
            raise ValidationError("point probe radius must be one of cfg.probes")
        for (ell, m), ser in channels.items():
            vals[:, j] += ser.psi[:, k] * real_sph_harm(ell, m, th, ph)
    c = 0.0
    if (0, 0) in channels:
        c = float(channels[(0, 0)].psi[-1, 0] / math.sqrt(4 * math.pi))
    return Evolve3DResult(channels, t, list(points), vals, c)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_snapshot(path, state: WaveState) -> None:
    """CSV of ``(r_*, phi, pi)`` preceded by a ``#`` JSON header line."""
    g = state.grid
    header = {
        "params": asdict(g.params),
        "ell": state.ell,
        "t": state.t,
        "grid": {"r_star_min": float(g.r_star[0]), "r_star_max": float(g.r_star[-1]), "dr_star": g.dr_star, "n": len(g)},
    }
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r_star", "phi", "pi"])
        for row in zip(g.r_star, state.phi, state.pi):
            w.writerow([_fmt(v) for v in row])


def read_snapshot(path):
    """Returns ``(header, r_star, phi, pi)``."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline()[2:])
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    return header, data[:, 0], data[:, 1], data[:, 2]


def write_probe_csv(path, series: ProbeSeries, use_psi: bool = False) -> None:
    """Columns ``t`` then one column per probe (``phi`` or ``psi``)."""
    vals = series.psi if use_psi else series.phi
    name = "psi" if use_psi else "phi"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{name}@{_fmt(x)}" for x in series.probe_r_star])
        for k in range(series.t.size):
            w.writerow([_fmt(series.t[k])] + [_fmt(v) for v in vals[k]])
