"""
Frequency-domain solver for ``(-d_{r_*}^2 + V_l - sigma^2) w = g``.

Conventions (see :class:`FrequencyConvention`): time dependence ``e^{i sigma t}``,
physical half-plane ``Im sigma < 0``, resonances in ``Im sigma >= 0``.
Outgoing solutions behave like ``e^{+i sigma r_*}`` at the black-hole end and
``e^{-i sigma r_*}`` at the de Sitter end.

Two solvers are provided.

* :class:`JostShooter` integrates the two outgoing (Jost) solutions of the
  continuous equation from Frobenius series at the horizons to a matching
  point.  It gives the Wronskian ``W(sigma)`` used for resonance search.  The
  series converge for every ``sigma`` except at ``sigma = i kappa k`` where
  the Jost normalisation has poles, so the continuation is not restricted
  to a strip.
* :func:`solve` works on a :class:`~dsswave.geometry.RadialGrid` with the
  three-point Laplacian (the stencil used by :mod:`dsswave.evolve`) and
  builds the Green's function by discrete variation of parameters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import rgamma

from .charts import smooth_step
from .errors import ContourThroughZero, NearResonance, NoConvergence, SeriesDivergence, ValidationError
from .geometry import (
    Horizons,
    RadialGrid,
    SpacetimeParams,
    _mu_from_offsets,
    _tortoise_from_offsets,
    horizon_constants,
    horizons,
    tortoise,
    tortoise_inverse_offsets,
)
from .modes import ModePotential, potential_values
from .radial_ode import HorizonSeries

__all__ = [
    "FrequencyConvention",
    "CONVENTION",
    "JostShooter",
    "ResolventSolution",
    "Resonance",
    "ResidueData",
    "solve",
    "solve_dense",
    "solve_jost",
    "wronskian",
    "find_resonances",
    "is_conjugation_symmetric",
    "residue_at_zero",
    "residue_weight_closed_form",
    "alpha_tilde_log",
    "strip_bound_scan",
    "write_resonance_csv",
    "write_strip_csv",
]


@dataclass(frozen=True)
class FrequencyConvention:
    """Sign conventions shared by the resolvent, evolution and Mellin code.

    ``u(t) = (1/2 pi) int e^{i sigma t} u_hat(sigma) d sigma`` along
    ``Im sigma = s < 0``; ``T = e^{-t}`` so ``T^{i sigma} = e^{-i sigma t}``.
    """

    time_factor: str = "exp(+i sigma t)"
    physical_half_plane: str = "Im sigma < 0"
    outgoing_bh: int = +1  # w ~ exp(+i sigma r_*) as r_* -> -inf
    outgoing_dS: int = -1  # w ~ exp(-i sigma r_*) as r_* -> +inf

    def outgoing(self, sigma, r_star, end: str):
        sgn = self.outgoing_bh if end == "bh" else self.outgoing_dS
        return np.exp(1j * sgn * sigma * r_star)

    def check(self) -> None:
        """Outgoing solutions must decay at both ends in the physical half-plane."""
        sigma = 0.7 - 0.3j
        left = abs(self.outgoing(sigma, -60.0, "bh"))
        right = abs(self.outgoing(sigma, 60.0, "dS"))
        if not (left < 1e-6 and right < 1e-6):
            raise ValidationError("frequency convention is inconsistent: outgoing solutions grow for Im sigma < 0")


CONVENTION = FrequencyConvention()
CONVENTION.check()


# ---------------------------------------------------------------------------
# continuum Jost solutions
# ---------------------------------------------------------------------------


class JostShooter:
    """Outgoing solutions of ``-phi'' + V phi = sigma^2 phi`` by series seeding and RK4.

    The left solution is normalised like ``e^{i sigma r_*}`` as ``r_* -> -inf``
    (regular ``r^{l+1}`` at the origin in pure de Sitter) and the right one like
    ``e^{-i sigma r_*}`` as ``r_* -> +inf``.  Integration runs in ``r_*`` with a
    step resolving both the potential and the oscillation ``e^{i sigma r_*}``.

    Parameters
    ----------
    params, hz
        Geometry.
    ell
        Angular momentum.
    k_max, seed_tol
        Series length and the remainder bound that fixes the seeding offset.
    h_max, phase_step
        Step is ``min(h_max, phase_step / max|sigma|)``.
    """

    def __init__(
        self,
        params: SpacetimeParams,
        hz: Horizons | None = None,
        ell: int = 0,
        *,
        k_max: int = 20,
        seed_tol: float = 1e-12,
        h_max: float = 0.02,
        phase_step: float = 0.05,
    ):
        self.params = params
        self.hz = horizons(params) if hz is None else hz
        self.ell = ell
        self.h_max = h_max
        self.phase_step = phase_step
        self.seed_tol = seed_tol
        self.de_sitter = self.hz.de_sitter
        self.left = HorizonSeries(params, self.hz, ell, "origin" if self.de_sitter else "bh", k_max)
        self.right = HorizonSeries(params, self.hz, ell, "dS", k_max)
        self.c_bh, self.c_dS = horizon_constants(params, self.hz)
        if self.de_sitter:
            self.r_match = 0.5 * self.hz.r_dS
            self.x_match = float(tortoise(params, self.hz, self.r_match))
        else:
            self.x_match = 0.0
            self.r_match = float(tortoise_inverse_offsets(params, self.hz, 0.0)[0])

    # -- helpers -----------------------------------------------------------

    def _offsets(self, r):
        hz = self.hz
        return r - hz.r_bh, hz.r_dS - r

    def potential_at(self, xs):
        r, zb, zd = tortoise_inverse_offsets(self.params, self.hz, np.asarray(xs, dtype=float))
        m_ = _mu_from_offsets(self.params, self.hz, r, zb, zd)
        return potential_values(self.params, self.ell, r, m_)

    def _seed(self, series: HorizonSeries, sigma, side: str):
        z_lim = 0.9 * abs(self.r_match - series.r0)
        z = float(min(np.min(series.seed_offset(sigma, self.seed_tol)), z_lim))
        r0 = series.r0 + series.eps * z
        if side == "left" and self.de_sitter:
            zb, zd = r0, self.hz.r_dS - r0
        elif side == "left":
            zb, zd = z, self.hz.r_dS - r0
        else:
            zb, zd = r0 - self.hz.r_bh, z
        m_ = _mu_from_offsets(self.params, self.hz, r0, zb, zd)
        x0 = float(_tortoise_from_offsets(self.params, self.hz, r0, zb, zd))
        psi, dpsi_dz = series.evaluate(sigma, z)
        phi = r0 * psi
        dphi = m_ * (psi + r0 * series.eps * dpsi_dz)
        norm = self._norm(sigma, side)
        return x0, phi * norm, dphi * norm

    def _norm(self, sigma, side: str):
        if side == "left" and not self.de_sitter:
            return np.exp(1j * sigma * self.c_bh) / self.hz.r_bh
        if side == "right":
            return np.exp(-1j * sigma * self.c_dS) / self.hz.r_dS
        return np.ones_like(sigma)

    def _step_size(self, sigma) -> float:
        smax = float(np.max(np.abs(sigma))) if np.size(sigma) else 0.0
        return min(self.h_max, self.phase_step / max(smax, 1e-12))

    def integrate(self, sigma, side: str):
        """Integrate one Jost solution to ``x_match``; returns ``(phi, dphi)`` there."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=complex))
        series = self.left if side == "left" else self.right
        x0, phi, dphi = self._seed(series, sigma, side)
        x1 = self.x_match
        h = self._step_size(sigma)
        n = max(8, int(math.ceil(abs(x1 - x0) / h)))
        hh = (x1 - x0) / n
        V = self.potential_at(x0 + 0.5 * hh * np.arange(2 * n + 1))
        s2 = sigma**2
        y0, y1 = phi, dphi
        for k in range(n):
            va, vm, vb = V[2 * k] - s2, V[2 * k + 1] - s2, V[2 * k + 2] - s2
            k1a, k1b = y1, va * y0
            k2a, k2b = y1 + 0.5 * hh * k1b, vm * (y0 + 0.5 * hh * k1a)
            k3a, k3b = y1 + 0.5 * hh * k2b, vm * (y0 + 0.5 * hh * k2a)
            k4a, k4b = y1 + hh * k3b, vb * (y0 + hh * k3a)
            y0 = y0 + hh / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
            y1 = y1 + hh / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
        return y0, y1

    def profile(self, sigma, grid: RadialGrid, side: str):
        """One Jost solution sampled at every node of ``grid``.

        Nodes deeper in the horizon tail than the seeding point are evaluated
        from the series itself; the rest are reached by RK4 with sub-steps of
        at most ``h_max``.  Returns ``(phi, dphi/dr_*)`` of shape ``(S, N)``.
        """
        sigma = np.atleast_1d(np.asarray(sigma, dtype=complex))
        series = self.left if side == "left" else self.right
        x0, phi0, dphi0 = self._seed(series, sigma, side)
        xs = grid.r_star
        S, N = sigma.size, xs.size
        phi = np.empty((S, N), dtype=complex)
        dphi = np.empty((S, N), dtype=complex)
        if side == "left":
            tail = np.nonzero(xs <= x0)[0]
            z = grid.r[tail] if self.de_sitter else grid.z_bh[tail]
            order = np.arange(tail.size, N)
        else:
            tail = np.nonzero(xs >= x0)[0]
            z = grid.z_dS[tail]
            order = np.arange(N - tail.size - 1, -1, -1)
        if tail.size:
            coef = series.coefficients(sigma)[..., None]
            with np.errstate(divide="ignore", invalid="ignore"):
                psi, dpsi = series.evaluate(sigma[:, None], z[None, :], coef)
            rr = grid.r[tail][None, :]
            norm = self._norm(sigma, side)[:, None]
            phi[:, tail] = rr * psi * norm
            dphi[:, tail] = grid.mu[tail][None, :] * (psi + rr * series.eps * dpsi) * norm
            if self.de_sitter and side == "left":
                phi[:, tail[z == 0]] = 0.0
                dphi[:, tail[z == 0]] = 1.0 if self.ell == 0 else 0.0
        if order.size == 0:
            return phi, dphi
        # RK4 path through the remaining nodes
        targets = xs[order]
        starts = np.concatenate([[x0], targets[:-1]])
        h = self._step_size(sigma)
        nsub = np.maximum(1, np.ceil(np.abs(targets - starts) / h).astype(int))
        hs = np.repeat((targets - starts) / nsub, nsub)
        steps_start = np.concatenate([[x0], x0 + np.cumsum(hs)[:-1]])
        V = self.potential_at(np.stack([steps_start, steps_start + 0.5 * hs, steps_start + hs]).T.ravel()).reshape(-1, 3)
        s2 = sigma**2
        y0, y1 = phi0, dphi0
        ends = np.cumsum(nsub)
        k_out = 0
        for k in range(hs.size):
            hh = hs[k]
            va, vm, vb = V[k, 0] - s2, V[k, 1] - s2, V[k, 2] - s2
            k1a, k1b = y1, va * y0
            k2a, k2b = y1 + 0.5 * hh * k1b, vm * (y0 + 0.5 * hh * k1a)
            k3a, k3b = y1 + 0.5 * hh * k2b, vm * (y0 + 0.5 * hh * k2a)
            k4a, k4b = y1 + hh * k3b, vb * (y0 + hh * k3a)
            y0 = y0 + hh / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
            y1 = y1 + hh / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
            if k + 1 == ends[k_out]:
                phi[:, order[k_out]] = y0
                dphi[:, order[k_out]] = y1
                k_out += 1
        return phi, dphi

    def wronskian(self, sigma):
        """``W = w_- w_+' - w_-' w_+`` (Jost normalisation, ``'`` = ``d/dr_*``)."""
        sigma = np.asarray(sigma, dtype=complex)
        shape = sigma.shape
        sig = sigma.ravel()
        a, da = self.integrate(sig, "left")
        b, db = self.integrate(sig, "right")
        return (a * db - da * b).reshape(shape)

    def regularization(self, sigma):
        """Entire factor removing the simple poles of the Jost normalisation at ``sigma = i kappa k``."""
        sigma = np.asarray(sigma, dtype=complex)
        f = rgamma(1.0 + 1j * sigma / self.hz.kappa_dS)
        if not self.de_sitter:
            f = f * rgamma(1.0 + 1j * sigma / self.hz.kappa_bh)
        return f

    def regularized_wronskian(self, sigma):
        """Entire function of ``sigma`` whose zeros contain all resonances."""
        sigma = np.asarray(sigma, dtype=complex)
        return self.wronskian(sigma) * self.regularization(sigma)

    def green_diagonal(self, sigma):
        """``G(x_m, x_m; sigma) = w_-(x_m) w_+(x_m) / W``, independent of normalisation."""
        sigma = np.asarray(sigma, dtype=complex)
        shape = sigma.shape
        sig = sigma.ravel()
        a, da = self.integrate(sig, "left")
        b, db = self.integrate(sig, "right")
        return (-a * b / (a * db - da * b)).reshape(shape)


def wronskian(sigma, ell: int, params: SpacetimeParams, hz: Horizons | None = None, **kwargs):
    """Jost-normalised Wronskian at the matching point; see :class:`JostShooter`."""
    return JostShooter(params, hz, ell, **kwargs).wronskian(sigma)


# ---------------------------------------------------------------------------
# discrete solver on a grid
# ---------------------------------------------------------------------------


@dataclass
class ResolventSolution:
    """Solution of the discrete problem at one frequency."""

    sigma: complex
    ell: int
    w: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    residual: float
    wronskian: complex


def _free_ratio(sigma, h):
    # discrete outgoing factor per step for V = 0: 2 - 2 cos(theta) = h^2 sigma^2
    theta = 2.0 * np.arcsin(0.5 * h * np.asarray(sigma, dtype=complex))
    return np.exp(-1j * theta)


def _boundary_ratios(sigma, grid: RadialGrid, pot: ModePotential, boundary: str):
    """Ghost ratios ``u_{-1}/u_0`` (left) and ``v_{N}/v_{N-1}`` (right)."""
    h = grid.dr_star
    if boundary == "auto":
        boundary = "discrete" if pot.free else "jost"
    if boundary == "discrete":
        q = _free_ratio(sigma, h)
        left = np.zeros_like(q) if grid.horizons.de_sitter else q
        return left, q
    if boundary != "jost":
        raise ValueError(f"unknown boundary {boundary!r}")
    params, hz = grid.params, grid.horizons
    ends = []
    for end, x0, x_ghost in (("bh", grid.r_star[0], grid.r_star[0] - h), ("dS", grid.r_star[-1], grid.r_star[-1] + h)):
        if end == "bh" and hz.de_sitter:
            ends.append(np.zeros_like(np.asarray(sigma, dtype=complex)))
            continue
        series = HorizonSeries(params, hz, pot.ell, end)
        vals = []
        for x in (x_ghost, x0):
            r, zb, zd = tortoise_inverse_offsets(params, hz, x)
            z = zb if end == "bh" else zd
            if z > 0.5 * series.radius:
                raise SeriesDivergence("grid end is not in the horizon tail; use boundary='discrete'")
            psi, _ = series.evaluate(sigma, z)
            vals.append(r * psi)
        ends.append(vals[0] / vals[1])
    return ends[0], ends[1]


def _vop(q, g, h, left, right):
    """Discrete variation of parameters in ratio form (no overflow).

    Solves ``-(w_{j+1} - 2 w_j + w_{j-1})/h^2 + q_j w_j = g_j`` with ghosts
    ``w_{-1} = left * w_0`` style outgoing rows (encoded through the ratios).
    ``q`` and ``g`` have shape ``(S, N)``.
    """
    S, N = q.shape
    c = 2.0 + h * h * q
    a = np.empty((S, N), dtype=complex)  # u_{j-1}/u_j
    b = np.empty((S, N), dtype=complex)  # v_{j+1}/v_j
    a[:, 0] = left
    for j in range(N - 1):
        a[:, j + 1] = 1.0 / (c[:, j] - a[:, j])
    b[:, N - 1] = right
    for j in range(N - 1, 0, -1):
        b[:, j - 1] = 1.0 / (c[:, j] - b[:, j])
    D = a - (c - b)  # K / (u_j v_j)
    A = np.empty((S, N), dtype=complex)
    B = np.empty((S, N), dtype=complex)
    A[:, 0] = g[:, 0]
    for j in range(1, N):
        A[:, j] = g[:, j] + a[:, j] * A[:, j - 1]
    B[:, N - 1] = 0.0
    for j in range(N - 2, -1, -1):
        B[:, j] = b[:, j] * (g[:, j + 1] + B[:, j + 1])
    w = -(h * h) / D * (A + B)
    return w, D


def _apply(q, w, h, left, right):
    wl = np.concatenate([(left * w[:, 0])[:, None], w[:, :-1]], axis=1)
    wr = np.concatenate([w[:, 1:], (right * w[:, -1])[:, None]], axis=1)
    return -(wr - 2.0 * w + wl) / (h * h) + q * w


def solve(
    sigma,
    ell: int,
    g,
    grid: RadialGrid,
    pot: ModePotential,
    *,
    boundary: str = "auto",
    near_tol: float = 1e-10,
    return_all: bool = False,
):
    """Discrete resolvent ``(-D^2 + V - sigma^2)^{-1} g`` on ``grid``.

    Parameters
    ----------
    sigma : complex or array
        Spectral parameter(s); arrays are solved in one vectorised sweep.
    ell : int
        Channel, must match ``pot.ell``.
    g : array
        Source on the grid nodes (shape ``(N,)`` or ``(S, N)``).
    boundary : {"auto", "jost", "discrete"}
        Outgoing rows from the horizon series (``"jost"``) or the exact
        discrete free-space factor (``"discrete"``); ``"auto"`` picks the
        latter only for the ``V = 0`` hook.

    Returns
    -------
    ResolventSolution, or a list of them when ``return_all`` (always for array ``sigma``).

    Raises
    ------
    NearResonance
        If the scaled Casoratian is below ``near_tol`` everywhere.
    """
    if ell != pot.ell:
        raise ValidationError("ell does not match the potential")
    scalar = np.ndim(sigma) == 0
    sig = np.atleast_1d(np.asarray(sigma, dtype=complex))
    S = sig.size
    h = grid.dr_star
    V = pot.V
    dirichlet = grid.horizons.de_sitter
    sl = slice(1, None) if dirichlet else slice(None)
    Vn = V[sl]
    g = np.asarray(g, dtype=complex)
    G = np.broadcast_to(g[..., sl] if g.ndim == 1 else g[:, sl], (S, Vn.size))
    q = Vn[None, :] - (sig**2)[:, None]
    left, right = _boundary_ratios(sig, grid, pot, boundary)
    left = np.broadcast_to(left, (S,))
    right = np.broadcast_to(right, (S,))
    w, D = _vop(q, G, h, left, right)
    scale = np.max(np.abs(D), axis=1) / h
    if np.any(scale < near_tol):
        raise NearResonance(f"|W| = {np.min(scale):.3e} below {near_tol:.1e}: sigma is too close to a resonance")
    res = _apply(q, w, h, left, right) - G
    rel = np.linalg.norm(res, axis=1) / np.maximum(np.linalg.norm(G, axis=1), 1e-300)
    if dirichlet:
        w = np.concatenate([np.zeros((S, 1), dtype=complex), w], axis=1)
    mid = D.shape[1] // 2
    out = [
        ResolventSolution(complex(sig[i]), ell, w[i], np.asarray(g if g.ndim == 1 else g[i]), float(rel[i]), complex(D[i, mid] / h))
        for i in range(S)
    ]
    if scalar and not return_all:
        return out[0]
    return out


def solve_jost(sigma, ell: int, g, grid: RadialGrid, pot: ModePotential, *, shooter: JostShooter | None = None):
    """Continuum resolvent from Jost profiles: ``w = -[w_+ int_{-inf}^x w_- g + w_- int_x^inf w_+ g] / W``.

    The integrals use cumulative trapezoid sums, so ``w`` is second-order
    accurate in ``dr_*`` but built from solutions of the continuous equation;
    at ``sigma = 0``, ``l = 0`` both profiles are exactly proportional to ``r``.
    ``residual`` is the relative residual of the three-point operator.
    """
    if ell != pot.ell:
        raise ValidationError("ell does not match the potential")
    sh = shooter or JostShooter(grid.params, grid.horizons, ell)
    scalar = np.ndim(sigma) == 0
    sig = np.atleast_1d(np.asarray(sigma, dtype=complex))
    a, da = sh.profile(sig, grid, "left")
    b, db = sh.profile(sig, grid, "right")
    W = a * db - da * b
    Wm = W[:, W.shape[1] // 2]
    g = np.broadcast_to(np.asarray(g, dtype=complex), a.shape)
    h = grid.dr_star

    def cum(f):
        out = np.zeros_like(f)
        out[:, 1:] = np.cumsum(0.5 * h * (f[:, 1:] + f[:, :-1]), axis=1)
        return out

    A = cum(a * g)
    Bc = cum(b * g)
    B = Bc[:, -1:] - Bc
    w = -(b * A + a * B) / Wm[:, None]
    q = pot.V[None, :] - (sig**2)[:, None]
    inner = -(w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / h**2 + q[:, 1:-1] * w[:, 1:-1] - g[:, 1:-1]
    rel = np.linalg.norm(inner, axis=1) / np.maximum(np.linalg.norm(g, axis=1), 1e-300)
    out = [ResolventSolution(complex(sig[i]), ell, w[i], np.asarray(g[i]), float(rel[i]), complex(Wm[i])) for i in range(sig.size)]
    return out[0] if scalar else out


def solve_dense(sigma: complex, ell: int, g, grid: RadialGrid, pot: ModePotential, *, boundary: str = "auto"):
    """Banded direct solve of the same discrete problem (oracle for :func:`solve`)."""
    h = grid.dr_star
    sl = slice(1, None) if grid.horizons.de_sitter else slice(None)
    Vn = pot.V[sl]
    gn = np.asarray(g, dtype=complex)[sl]
    n = Vn.size
    left, right = _boundary_ratios(np.array([sigma]), grid, pot, boundary)
    diag = 2.0 / h**2 + Vn - sigma**2 + 0j
    diag[0] -= left[0] / h**2
    diag[-1] -= right[0] / h**2
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = -1.0 / h**2
    ab[1] = diag
    ab[2, :-1] = -1.0 / h**2
    w = solve_banded((1, 1), ab, gn)
    if grid.horizons.de_sitter:
        w = np.concatenate([[0.0], w])
    return w


# ---------------------------------------------------------------------------
# resonances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Resonance:
    """A zero of the regularised Wronskian.

    ``resolvent_pole`` is False at the degenerate points ``sigma = i kappa k``
    where the two horizon exponents differ by an integer and no logarithm
    occurs: every solution is then smooth at that horizon, so the regular
    solution at the other end is a mode solution, but the continued
    Green's function stays finite there.
    """

    sigma: complex
    ell: int
    residual: float
    simple: bool
    dW: float  # |d/dsigma| of the regularised Wronskian
    multiplicity: int = 1
    resolvent_pole: bool = True


def _box_boundary(box, n):
    x0, x1, y0, y1 = box
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    return np.concatenate(
        [
            x0 + (x1 - x0) * t + 1j * y0,
            x1 + 1j * (y0 + (y1 - y0) * t),
            x1 - (x1 - x0) * t + 1j * y1,
            x0 + 1j * (y1 - (y1 - y0) * t),
        ]
    )


def _argument_count(F, box, n_side: int, max_refine: int = 8) -> int:
    """Winding number of ``F`` around ``box`` with adaptive refinement of the boundary."""
    pts = _box_boundary(box, n_side)
    vals = F(pts)
    for _ in range(max_refine):
        nxt = np.roll(vals, -1)
        dphi = np.angle(nxt / vals)
        bad = np.abs(dphi) > np.pi / 4
        if not np.any(bad):
            break
        mids = 0.5 * (pts + np.roll(pts, -1))
        # the closing segment wraps around the corner x0+i y0
        new_pts = mids[bad]
        new_vals = F(new_pts)
        pts = np.insert(pts, np.nonzero(bad)[0] + 1, new_pts)
        vals = np.insert(vals, np.nonzero(bad)[0] + 1, new_vals)
    scale = np.max(np.abs(vals))
    if np.min(np.abs(vals)) < 1e-10 * scale:
        raise ContourThroughZero("the search contour passes through (or very near) a zero")
    total = np.sum(np.angle(np.roll(vals, -1) / vals))
    return int(round(total / (2.0 * np.pi)))


def _newton(F, s0, mult=1, tol=1e-12, max_iter=60, d=None):
    s = complex(s0)
    for _ in range(max_iter):
        dd = d if d is not None else 1e-6 * max(1.0, abs(s))
        f0, fp, fm = F(np.array([s, s + dd, s - dd]))
        df = (fp - fm) / (2 * dd)
        if df == 0 or not np.isfinite(df):
            break
        step = mult * f0 / df
        s -= step
        if abs(step) < tol * max(1.0, abs(s)):
            return s, abs(df)
    raise NoConvergence("Newton refinement of a Wronskian zero did not converge")


def _laurent(G, s0, radius, n=32):
    th = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * th)
    vals = G(s0 + radius * e)
    a_m1 = radius * np.mean(vals * e)
    a_m2 = radius**2 * np.mean(vals * e**2)
    return a_m1, a_m2, np.max(np.abs(vals))


def find_resonances(
    ell: int,
    box,
    params: SpacetimeParams,
    hz: Horizons | None = None,
    *,
    shooter: JostShooter | None = None,
    n_side: int = 64,
    max_depth: int = 10,
    newton_tol: float = 1e-12,
    jitter_seed: int = 0,
) -> list[Resonance]:
    """All resonances of channel ``ell`` inside ``box = (re_min, re_max, im_min, im_max)``.

    Zeros of the regularised Wronskian are counted by the argument principle
    and isolated by recursive subdivision, then polished by Newton's method.
    Every zero is classified by the Laurent coefficients of the diagonal
    Green's function on a small circle.  Zeros that are not poles of the
    Green's function are kept only at the degenerate points
    ``sigma = i kappa k`` (see :class:`Resonance`).

    Raises
    ------
    ContourThroughZero
        If the box edge passes through a zero even after re-jittering.
    """
    sh = shooter or JostShooter(params, hz, ell)
    if sh.ell != ell:
        raise ValidationError("shooter channel does not match ell")
    F = sh.regularized_wronskian
    rng = np.random.default_rng(jitter_seed)
    box = tuple(float(v) for v in box)
    for attempt in range(4):
        try:
            total = _argument_count(F, box, n_side)
            break
        except ContourThroughZero:
            if attempt == 3:
                raise
            w, hgt = box[1] - box[0], box[3] - box[2]
            j = rng.uniform(0.005, 0.02, 4) * np.array([w, w, hgt, hgt])
            box = (box[0] - j[0], box[1] + j[1], box[2] - j[2], box[3] + j[3])

    found: list[tuple[complex, int]] = []

    def recurse(b, count, depth):
        if count <= 0:
            return
        x0, x1, y0, y1 = b
        if count == 1 or depth >= max_depth:
            try:
                s, _ = _newton(F, complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)), mult=count, tol=newton_tol)
                slack = 1e-9 * max(1.0, abs(s))
                if x0 - slack <= s.real <= x1 + slack and y0 - slack <= s.imag <= y1 + slack:
                    found.append((s, count))
                    return
            except NoConvergence:
                pass
            if depth >= max_depth:
                raise NoConvergence("could not isolate Wronskian zeros in the search box")
        # split off-centre so symmetric zeros do not sit on a cut
        fx = 0.5 + 0.0371 * (1 + depth % 3)
        fy = 0.5 - 0.0293 * (1 + depth % 2)
        xm = x0 + fx * (x1 - x0)
        ym = y0 + fy * (y1 - y0)
        subs = [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]
        counts = [_argument_count(F, sb, max(16, n_side // 2)) for sb in subs]
        if sum(counts) != count:
            raise NoConvergence("argument-principle counts of sub-boxes are inconsistent")
        for sb, c in zip(subs, counts):
            recurse(sb, c, depth + 1)

    recurse(box, total, 0)

    kappas = [sh.hz.kappa_dS] + ([] if sh.de_sitter else [sh.hz.kappa_bh])

    def degenerate(s):
        for kap in kappas:
            k = round(s.imag / kap)
            if k >= 1 and abs(s - 1j * kap * k) < 1e-8 * max(1.0, abs(s)):
                return True
        return False

    out = []
    for s, mult in found:
        radius = 1e-3 * max(1.0, abs(s))
        a1, a2, gmax = _laurent(sh.green_diagonal, s, radius)
        pole = not (abs(a1) < 1e-6 * radius * gmax and abs(a2) < 1e-6 * radius**2 * gmax)
        if not pole and not degenerate(s):
            continue
        simple = abs(a2) < 1e-4 * radius * abs(a1) if pole else mult == 1
        f0, fp = F(np.array([s, s + 1e-7 * max(1.0, abs(s))]))
        dW = abs(fp - f0) / (1e-7 * max(1.0, abs(s)))
        out.append(Resonance(complex(s), ell, float(abs(f0)), bool(simple), float(dW), int(mult), pole))
    out.sort(key=lambda r: (r.sigma.imag, r.sigma.real))
    return out


def is_conjugation_symmetric(res: list[Resonance], box, tol: float = 1e-6) -> bool:
    """Every resonance whose mirror ``-conj(sigma)`` lies in ``box`` has a partner."""
    x0, x1, y0, y1 = box
    sig = np.array([r.sigma for r in res])
    for s in sig:
        m = -np.conj(s)
        if x0 < m.real < x1 and y0 < m.imag < y1:
            if np.min(np.abs(sig - m)) > tol * max(1.0, abs(s)):
                return False
    return True


# ---------------------------------------------------------------------------
# residue at zero
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidueData:
    """Residue of ``R(sigma) g`` at ``sigma = 0`` for ``l = 0``.

    ``residue`` is the residue of the ``phi = r psi`` solution on the grid and
    ``psi_residue = residue / r`` should be constant; ``gamma_res`` is that
    constant divided by the pairing ``int g r dr_*``.
    """

    residue: np.ndarray = field(repr=False)
    psi_residue: np.ndarray = field(repr=False)
    constant: complex
    deviation: float
    pairing: complex
    gamma_res: complex


def residue_weight_closed_form(hz: Horizons) -> complex:
    """``1 / (i (r_bh^2 + r_dS^2))`` from the small-``sigma`` Wronskian (``r_bh = 0`` in pure de Sitter)."""
    return 1.0 / (1j * (hz.r_bh**2 + hz.r_dS**2))


def residue_at_zero(
    g,
    grid: RadialGrid,
    pot: ModePotential,
    *,
    radius: float | None = None,
    n: int = 32,
    boundary: str = "auto",
    method: str = "jost",
    window=None,
) -> ResidueData:
    """Residue at ``sigma = 0`` by trapezoidal quadrature on ``|sigma| = radius``.

    ``method="jost"`` uses :func:`solve_jost` (continuum profiles, so the
    residue is ``r`` times a constant up to RK4 error); ``method="discrete"``
    uses the three-point solver, whose null vector differs from ``r`` at
    ``O(dr_*^2)``.  ``window`` (a boolean mask or slice on the grid) restricts
    where the constancy of ``psi_residue`` is measured; by default nodes
    where ``|residue|`` exceeds ``1e-8`` of its maximum are used.

    The default radius is ``min(1e-2, 2 / max|r_*|)``: on long grids the
    solutions vary like ``e^{sigma r_*}`` and a wider circle aliases.
    """
    if pot.ell != 0:
        raise ValidationError("the sigma = 0 residue only exists for l = 0")
    if radius is None:
        radius = min(1e-2, 2.0 / float(np.max(np.abs(grid.r_star))))
    th = 2 * np.pi * (np.arange(n) + 0.5) / n
    sig = radius * np.exp(1j * th)
    if method == "jost":
        sols = solve_jost(sig, 0, g, grid, pot)
    elif method == "discrete":
        sols = solve(sig, 0, g, grid, pot, boundary=boundary, return_all=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    W = np.array([s.w for s in sols])
    res = radius * np.mean(W * np.exp(1j * th)[:, None], axis=0)
    r = grid.r
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(r > 0, res / np.where(r > 0, r, 1.0), np.nan)
    if window is None:
        mask = np.isfinite(psi) & (np.abs(res) > 1e-8 * np.max(np.abs(res)))
    else:
        mask = np.zeros(r.size, bool)
        mask[window] = True
        mask &= np.isfinite(psi)
    const = complex(np.median(psi[mask].real) + 1j * np.median(psi[mask].imag))
    dev = float(np.max(np.abs(psi[mask] - const)) / abs(const))
    pairing = complex(np.trapezoid(np.asarray(g) * r, dx=grid.dr_star))
    return ResidueData(res, psi, const, dev, pairing, const / pairing if pairing != 0 else complex("nan"))


# ---------------------------------------------------------------------------
# weighted strip scan
# ---------------------------------------------------------------------------


def alpha_tilde_log(grid: RadialGrid, r1_frac: float = 0.4, r2_frac: float = 0.6):
    """``log alpha~`` with exponent ``1/lambda_bh`` near ``r_bh`` and ``1/lambda_dS`` near ``r_dS``.

    Uses the same partition of unity as :func:`dsswave.charts.log_f`, so
    ``alpha~ = f^{-1}`` away from the transition interval.
    """
    hz = grid.horizons
    log_alpha = 0.5 * np.log(grid.mu)
    if hz.de_sitter:
        return log_alpha / hz.kappa_dS
    r1 = hz.r_bh + r1_frac * (hz.r_dS - hz.r_bh)
    r2 = hz.r_bh + r2_frac * (hz.r_dS - hz.r_bh)
    S = smooth_step((grid.r - r1) / (r2 - r1))
    return log_alpha * ((1 - S) / hz.kappa_bh + S / hz.kappa_dS)


def strip_bound_scan(
    ell: int,
    s: float,
    re_sigma,
    grid: RadialGrid,
    pot: ModePotential,
    g,
    *,
    delta: float = 0.0,
):
    """Weighted sup-norm surrogate ``sup |alpha~^(delta - i sigma) w| / sup |g|`` along ``Im sigma = s``.

    Returns ``(sigma, surrogate, unweighted, slope)`` where ``slope`` is the
    least-squares log-log growth exponent in ``|sigma|`` (reported, never asserted).
    """
    re_sigma = np.asarray(re_sigma, dtype=float)
    sig = re_sigma + 1j * s
    sols = solve(sig, ell, g, grid, pot, return_all=True)
    la = alpha_tilde_log(grid)
    gnorm = np.max(np.abs(g))
    sur = np.empty(sig.size)
    raw = np.empty(sig.size)
    for i, sol in enumerate(sols):
        weight = np.exp((delta - 1j * sig[i]) * la)
        wv = sol.w
        ok = np.isfinite(weight)
        sur[i] = np.max(np.abs(weight[ok] * wv[ok])) / gnorm
        raw[i] = np.max(np.abs(wv)) / gnorm
    a = np.abs(sig)
    slope = float(np.polyfit(np.log(a), np.log(sur), 1)[0]) if sig.size > 2 and np.all(a > 0) else float("nan")
    return sig, sur, raw, slope


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_resonance_csv(path, res: list[Resonance]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "re_sigma", "im_sigma", "abs_dW", "residual", "simple", "resolvent_pole"])
        for r in res:
            w.writerow(
                [r.ell, _fmt(r.sigma.real), _fmt(r.sigma.imag), _fmt(r.dW), _fmt(r.residual), int(r.simple), int(r.resolvent_pole)]
            )


def write_strip_csv(path, sigma, surrogate) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re_sigma", "im_sigma", "surrogate"])
        for s, v in zip(np.asarray(sigma), np.asarray(surrogate)):
            w.writerow([_fmt(s.real), _fmt(s.imag), _fmt(v)])
