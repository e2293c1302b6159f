"""
Late-time analysis of evolved channels.

* :func:`fit_tail` fits ``c + sum_k a_k e^{-nu_k t} cos(omega_k t + phase_k)`` by
  variable projection and checks that ``c`` is stable across nested windows.
* :func:`uniformity_check` tracks ``sup |psi - c|`` and a b-derivative proxy
  over snapshots.
* :func:`mellin_forward` / :func:`mellin_inverse` implement the transform
  ``v^(sigma) = int T^{i sigma} v dT/T = int e^{-i sigma t} v dt`` (``T = e^{-t}``)
  along ``Im sigma = s``.
* :func:`mellin_reconstruct` rebuilds the cut-off solution ``chi phi`` of an
  evolution from frequency-domain solves of its commutator source and shifts
  the contour across ``sigma = 0`` to extract the constant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import comb

from .errors import (
    ContourOutsideAnalyticity,
    FitUnstable,
    NumericalError,
    ResidueMismatch,
    ValidationError,
    WindowTooShort,
)
from .modes import ModePotential
from .resolvent import residue_weight_closed_form, solve

__all__ = [
    "TailFit",
    "fit_tail",
    "UniformityReport",
    "uniformity_check",
    "MellinData",
    "gregory_weights",
    "mellin_forward",
    "mellin_inverse",
    "MellinReconstruction",
    "mellin_reconstruct",
    "write_fit_json",
    "write_reconstruction_csv",
]


# ---------------------------------------------------------------------------
# tail fitting
# ---------------------------------------------------------------------------


@dataclass
class TailFit:
    """Result of :func:`fit_tail`.

    ``nu``, ``omega``, ``a`` and ``phase`` describe the dominant (slowest
    decaying, non-negligible) component; ``modes`` lists all components as
    ``(nu, omega, a, phase)`` in the model ``a e^{-nu t} cos(omega t + phase)``.
    ``branch`` is ``"constant"`` when the series carries no measurable
    transient (``a = 0``, ``nu`` undefined and reported as 0).
    """

    c: float
    nu: float
    omega: float
    a: float
    phase: float
    window: tuple
    rms: float
    stable: bool
    branch: str = "damped"
    modes: list = field(default_factory=list)
    stderr: dict = field(default_factory=dict)
    c_windows: tuple = ()

    def model(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.c)
        for nu, om, a, ph in self.modes:
            out = out + a * np.exp(-nu * t) * np.cos(om * t + ph)
        return out

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "nu": self.nu,
            "omega": self.omega,
            "a": self.a,
            "phase": self.phase,
            "window": list(self.window),
            "rms": self.rms,
            "stable": self.stable,
            "branch": self.branch,
            "modes": [list(m) for m in self.modes],
            "stderr": self.stderr,
            "c_windows": list(self.c_windows),
        }


def _basis(tau, theta, n_modes, const):
    cols = [np.ones_like(tau)] if const else []
    for k in range(n_modes):
        nu, om = theta[2 * k], theta[2 * k + 1]
        e = np.exp(-nu * tau)
        cols += [e * np.cos(om * tau), e * np.sin(om * tau)]
    return np.stack(cols, axis=1)


def _project(tau, y, theta, n_modes, const):
    Phi = _basis(tau, theta, n_modes, const)
    coef, *_ = np.linalg.lstsq(Phi, y, rcond=1e-13)
    return coef, y - Phi @ coef, Phi


def _heuristic_guess(tau, y):
    """``(nu, omega)`` from the log-envelope slope and zero crossings of ``dy/dt``."""
    d = y - y[-1]
    dy = np.diff(y)
    flips = np.count_nonzero(np.signbit(dy[1:]) != np.signbit(dy[:-1]))
    span = tau[-1] - tau[0]
    omega = math.pi * flips / (2.0 * span) if flips > 1 else 0.0
    n = tau.size
    seg = max(n // 8, 2)
    env = [np.max(np.abs(d[i : i + seg])) for i in range(0, n - seg, seg)]
    mids = [tau[i + seg // 2] for i in range(0, n - seg, seg)]
    env = np.asarray(env)
    good = env > 0
    if np.count_nonzero(good) >= 2:
        slope = np.polyfit(np.asarray(mids)[good], np.log(env[good]), 1)[0]
        nu = max(-slope, 1e-3)
    else:
        nu = 1.0 / max(span, 1e-12)
    return nu, omega


def _fit_once(tau, y, n_modes, const, starts):
    best = None
    lo = np.zeros(2 * n_modes)
    for th0 in starts:
        th0 = np.maximum(np.asarray(th0, dtype=float), 1e-9)

        def resid(th):
            return _project(tau, y, th, n_modes, const)[1]

        try:
            sol = least_squares(resid, th0, bounds=(lo, np.inf), method="trf", x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=2000)
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitUnstable("no fit converged")
    return best


def _starts(tau, y, n_modes, guess, nu_guess, omega_guess):
    if guess is not None:
        g = sorted((complex(s) for s in guess), key=lambda s: s.imag)
        g = [s for s in g if s.imag > 0]
        seen, uniq = [], []
        for s in g:
            key = (round(s.imag, 8), round(abs(s.real), 8))
            if key not in seen:
                seen.append(key)
                uniq.append((s.imag, abs(s.real)))
        if len(uniq) >= n_modes:
            return [np.ravel(uniq[:n_modes])]
    nu0, om0 = _heuristic_guess(tau, y)
    if nu_guess is not None:
        nu0 = nu_guess
    if omega_guess is not None:
        om0 = omega_guess
    oms = [om0, 0.5 * om0, 2.0 * om0, 0.0] if om0 > 0 else [0.0, 0.05, 0.2, 1.0]
    starts = []
    for om in oms:
        th = []
        for k in range(n_modes):
            th += [nu0 * (1.0 + 0.5 * k), om if k == 0 else max(om, 0.1) * (1.0 + k)]
        starts.append(th)
        if n_modes > 1:
            th2 = list(th)
            th2[1], th2[3] = th2[3], th2[1]
            starts.append(th2)
    return starts


def fit_tail(
    t,
    y,
    window=None,
    *,
    n_modes: int = 1,
    guess=None,
    nu_guess: float | None = None,
    omega_guess: float | None = None,
    include_constant: bool = True,
    nested: bool = True,
    nest_fraction: float = 0.15,
    stability_tol: float = 1e-3,
    const_tol: float = 1e-12,
    negligible: float = 1e-3,
    raise_unstable: bool = True,
) -> TailFit:
    """Fit ``c + sum_k a_k e^{-nu_k t} cos(omega_k t + phase_k)`` on ``window``.

    The amplitudes and ``c`` enter linearly and are projected out; the
    nonlinear parameters ``(nu_k, omega_k)`` are found with a bounded
    trust-region solve of the projected residual.  Phases are carried by the
    cosine/sine pair.

    Parameters
    ----------
    t, y : array
        Samples (``t`` increasing).
    window : (t0, t1), optional
        Defaults to the full record.
    n_modes : int
        Number of damped components.
    guess : sequence of complex, optional
        Resonances ``sigma`` used to seed ``(nu, omega) = (Im sigma, |Re sigma|)``.
    nu_guess, omega_guess : float, optional
        Seeds overriding the heuristic; ``nu_guess`` also enforces
        ``t1 - t0 >= 5 / nu_guess``.
    include_constant : bool
        Fit ``c`` (else ``c = 0``).
    nested : bool
        Refit on ``[t0 + k d, t1]``, ``k = 1, 2``, ``d = nest_fraction (t1 - t0)``
        and require ``c`` to agree to ``stability_tol`` relative.

    Raises
    ------
    WindowTooShort
        If the window is shorter than ``5 / nu`` or holds too few samples.
    FitUnstable
        If ``c`` varies across the nested windows beyond ``stability_tol``
        (only when ``raise_unstable``).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValidationError("t and y must be 1-D arrays of equal length")
    t0, t1 = (float(t[0]), float(t[-1])) if window is None else (float(window[0]), float(window[1]))
    if t0 < t[0] - 1e-9 or t1 > t[-1] + 1e-9 or t1 <= t0:
        raise ValidationError(f"window [{t0}, {t1}] is not inside the record [{t[0]}, {t[-1]}]")
    if nu_guess is not None and nu_guess > 0 and t1 - t0 < 5.0 / nu_guess:
        raise WindowTooShort(f"window length {t1 - t0:.3g} < 5/nu_guess = {5.0 / nu_guess:.3g}")
    sel = (t >= t0 - 1e-9) & (t <= t1 + 1e-9)
    tw, yw = t[sel], y[sel]
    n_par = 2 * n_modes + 2 * n_modes + int(include_constant)
    if tw.size < 3 * n_par:
        raise WindowTooShort(f"{tw.size} samples in the window; need at least {3 * n_par}")

    scale = float(np.max(np.abs(yw)))
    if float(np.ptp(yw)) <= const_tol * max(scale, 1e-300):
        c = float(np.median(yw)) if include_constant else 0.0
        return TailFit(c, 0.0, 0.0, 0.0, 0.0, (t0, t1), float(np.sqrt(np.mean((yw - c) ** 2))), True, "constant", [], {}, (c,))
    # power-of-two normalisation: exact, so scaling the input by 2^k commutes with the fit
    p2 = math.ldexp(1.0, math.frexp(scale)[1])
    yw = yw / p2

    def one(tlo, starts):
        m = tw >= tlo - 1e-9
        tau, yy = tw[m] - tlo, yw[m]
        sol = _fit_once(tau, yy, n_modes, include_constant, starts)
        coef, res, Phi = _project(tau, yy, sol.x, n_modes, include_constant)
        return tlo, tau, yy, sol, coef, res, Phi

    tlo, tau, yy, sol, coef, res, Phi = one(t0, _starts(tw - t0, yw, n_modes, guess, nu_guess, omega_guess))
    coef = coef * p2
    res = res * p2
    c = float(coef[0]) if include_constant else 0.0
    lin = coef[1:] if include_constant else coef

    modes = []
    for k in range(n_modes):
        nu, om = float(sol.x[2 * k]), float(sol.x[2 * k + 1])
        A, B = float(lin[2 * k]), float(lin[2 * k + 1])
        R = math.hypot(A, B)
        delta = math.atan2(B, A)
        ph = math.remainder(-om * t0 - delta, 2 * math.pi)
        modes.append((nu, om, R * math.exp(nu * t0), ph, R, R * math.exp(-nu * (t1 - t0))))
    end_amp = max(m[5] for m in modes)
    live = [m for m in modes if m[5] >= negligible * end_amp] or modes
    dom = min(live, key=lambda m: m[0])

    rms = float(np.sqrt(np.mean(res**2)))
    dof = max(yy.size - n_par, 1)
    s2 = float(res @ res) / dof
    stderr = {}
    try:
        cov_lin = s2 * np.linalg.pinv(Phi.T @ Phi)
        if include_constant:
            stderr["c"] = float(math.sqrt(max(cov_lin[0, 0], 0.0)))
        J = sol.jac
        cov_nl = s2 * np.linalg.pinv(J.T @ J)
        k = modes.index(dom)
        stderr["nu"] = float(math.sqrt(max(cov_nl[2 * k, 2 * k], 0.0)))
        stderr["omega"] = float(math.sqrt(max(cov_nl[2 * k + 1, 2 * k + 1], 0.0)))
    except np.linalg.LinAlgError:
        pass

    if end_amp == 0.0 or dom[4] == 0.0:
        branch = "constant"
    else:
        branch = "damped"
    if branch == "damped" and nu_guess is None and dom[0] > 0 and t1 - t0 < 5.0 / dom[0]:
        raise WindowTooShort(f"window length {t1 - t0:.3g} < 5/nu = {5.0 / dom[0]:.3g}")

    cs = [c]
    stable = True
    if nested and include_constant:
        d = nest_fraction * (t1 - t0)
        for k in (1, 2):
            cs.append(float(one(t0 + k * d, [sol.x])[4][0]) * p2)
        ref = max(abs(c), scale)
        spread = (max(cs) - min(cs)) / ref
        stable = spread < stability_tol
        if not stable and raise_unstable:
            raise FitUnstable(f"c varies by {spread:.3e} (relative) across nested windows; tolerance {stability_tol:.1e}")
    return TailFit(
        c,
        dom[0],
        dom[1],
        dom[2],
        dom[3],
        (t0, t1),
        rms,
        stable,
        branch,
        [m[:4] for m in modes],
        stderr,
        tuple(cs),
    )


def write_fit_json(path, payload) -> None:
    """Write a fit (or any dict of fits/triangles) as sorted JSON."""
    if isinstance(payload, TailFit):
        payload = payload.to_dict()
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# uniformity in r
# ---------------------------------------------------------------------------


@dataclass
class UniformityReport:
    """Decay table for ``sup_r |psi - c|`` and ``sup_r |d_{r_*} psi|`` on a radial window."""

    t: np.ndarray
    deviation: np.ndarray
    derivative: np.ndarray
    rate_deviation: float
    rate_derivative: float
    r_star_range: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "deviation": self.deviation.tolist(),
            "derivative": self.derivative.tolist(),
            "rate_deviation": self.rate_deviation,
            "rate_derivative": self.rate_derivative,
            "r_star_range": list(self.r_star_range),
            "passed": self.passed,
        }


def _log_rate(t, v, floor):
    good = v > floor
    if np.count_nonzero(good) < 2:
        return math.inf
    return float(-np.polyfit(t[good], np.log(v[good]), 1)[0])


def uniformity_check(snapshots, c, r_star_range=(-40.0, 40.0), floor: float = 1e-300) -> UniformityReport:
    """Decay of ``psi - c`` uniformly on ``r_star_range``.

    The derivative proxy is ``sup |d_{r_*} psi|``: near either horizon
    ``d_{r_*} = mu d_r`` is a smooth multiple of ``mu d_mu``, the b-derivative
    tangent to the faces, so its decay is the first conormality check.
    Static ``t`` slices never reach the horizons, and the data's domain of
    influence grows with ``t``; the window is therefore a fixed compact
    ``r_*`` range.  Rates come from a log-linear fit over the snapshots whose
    values exceed ``floor`` (set it above the discretisation defect of the
    late-time profile).  ``c`` may be a scalar or a profile on the grid.
    """
    ts, dev, der = [], [], []
    lo, hi = r_star_range
    c_arr = np.asarray(c, dtype=float)
    for st in snapshots:
        g = st.grid
        m = (g.r_star >= lo) & (g.r_star <= hi) & (g.r > 0)
        psi = st.phi[m] / g.r[m]
        ts.append(st.t)
        dev.append(float(np.max(np.abs(psi - (c_arr[m] if c_arr.ndim else c_arr)))))
        der.append(float(np.max(np.abs(np.gradient(psi, g.dr_star)))))
    ts, dev, der = np.array(ts), np.array(dev), np.array(der)
    tiny = max(floor, 1e-13 * max(float(np.max(np.abs(c_arr))), float(np.max(dev, initial=0.0)), 1e-300))
    if np.all(dev <= tiny) and np.all(der <= tiny):
        return UniformityReport(ts, dev, der, math.inf, math.inf, (lo, hi), True)
    rd = _log_rate(ts, dev, tiny)
    rv = _log_rate(ts, der, tiny)
    return UniformityReport(ts, dev, der, rd, rv, (lo, hi), bool(rd > 0 and rv > 0))


# ---------------------------------------------------------------------------
# Mellin transform
# ---------------------------------------------------------------------------

# Gregory end-correction coefficients
_GREGORY = (1 / 12, 1 / 24, 19 / 720, 3 / 160, 863 / 60480, 275 / 24192, 33953 / 3628800)


def gregory_weights(n: int, h: float, order: int = 6) -> np.ndarray:
    """Trapezoid weights on ``n`` uniform nodes with Gregory end corrections.

    ``order`` corrections (differences up to that order) are applied at both
    ends; ``order=0`` is the plain trapezoid rule.
    """
    if n < 2:
        raise ValidationError("need at least two nodes")
    order = min(order, len(_GREGORY), n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    for k in range(1, order + 1):
        g = _GREGORY[k - 1]
        for j in range(k + 1):
            cj = comb(k, j, exact=True)
            # -h g (-1)^k Delta^k f_0  and  -h g nabla^k f_n
            w[j] -= h * g * (-1) ** k * cj * (-1) ** (k - j)
            w[n - 1 - j] -= h * g * cj * (-1) ** j
    return w


@dataclass
class MellinData:
    """Transform samples along ``Im sigma = s``.

    ``sigma`` are the nodes, ``weights`` the inverse-quadrature weights (in
    ``Re sigma``), ``values[j]`` the transform at ``sigma[j]`` (trailing axes
    are carried through), and ``t`` the sample grid of the input.
    """

    s: float
    sigma: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    real_input: bool = True
    truncation: float = 0.0  # |v| e^{s t} at the last sample, relative


def mellin_forward(
    t,
    v,
    s: float,
    *,
    sigma=None,
    d_sigma: float | None = None,
    sigma_max: float | None = None,
    order: int = 6,
    growth: float = 0.0,
    chunk: int = 256,
) -> MellinData:
    """``v^(sigma) = int T^{i sigma} v dT/T = int e^{-i sigma t} v(t) dt`` on ``Im sigma = s``.

    ``v`` is sampled on the uniform grid ``t`` (``T = e^{-t}``) and taken to
    vanish outside it.  The ``t`` integral uses trapezoid weights with
    Gregory end corrections of the given ``order``.

    Nodes are ``sigma`` if given, else ``Re sigma = j d_sigma`` for
    ``|j d_sigma| <= sigma_max``; the defaults (Nyquist ``pi / dt`` and
    ``d_sigma = pi / (n dt)``) make the pair with :func:`mellin_inverse`
    an exact discrete round trip.

    Parameters
    ----------
    growth : float
        ``v = O(T^{growth})`` as ``T -> 0``; the transform is analytic for
        ``Im sigma < growth``.  Tempered data (bounded in ``t``) use 0.

    Raises
    ------
    ContourOutsideAnalyticity
        If ``s >= growth``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v)
    if s >= growth:
        raise ContourOutsideAnalyticity(f"contour Im sigma = {s} is not below the analyticity bound {growth}")
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise ValidationError("samples must be uniform in t")
    n = t.size
    if sigma is None:
        sigma_max = math.pi / dt if sigma_max is None else sigma_max
        d_sigma = math.pi / (n * dt) if d_sigma is None else d_sigma
        J = int(math.floor(sigma_max / d_sigma + 1e-9))
        re = d_sigma * np.arange(-J, J + (0 if abs(J * d_sigma - math.pi / dt) < 1e-9 * sigma_max else 1))
        sig = re + 1j * s
        wts = np.full(re.size, d_sigma)
    else:
        sig = np.asarray(sigma, dtype=complex).ravel()
        if np.any(np.abs(sig.imag - s) > 1e-12 * max(1.0, abs(s))):
            raise ValidationError("nodes must lie on Im sigma = s")
        wts = np.full(sig.size, d_sigma if d_sigma is not None else np.nan)
    w = gregory_weights(n, dt, order) if order > 0 else gregory_weights(n, dt, 0)
    flat = v.reshape(n, -1)
    out = np.empty((sig.size, flat.shape[1]), dtype=complex)
    for a in range(0, sig.size, chunk):
        E = np.exp(-1j * np.outer(sig[a : a + chunk], t)) * w[None, :]
        out[a : a + chunk] = E @ flat
    vmax = float(np.max(np.abs(flat))) if flat.size else 0.0
    trunc = float(np.max(np.abs(flat[-1])) * math.exp(s * t[-1]) / vmax) if vmax > 0 else 0.0
    return MellinData(s, sig, wts, out.reshape((sig.size,) + v.shape[1:]), t, bool(np.isrealobj(v)), trunc)


def mellin_inverse(data: MellinData, t=None, chunk: int = 256):
    """``v(t) = (1/2 pi) int_{Im sigma = s} e^{i sigma t} v^(sigma) d sigma`` by the stored quadrature."""
    t = data.t if t is None else np.asarray(t, dtype=float)
    if np.any(~np.isfinite(data.weights)):
        raise ValidationError("nodes without quadrature weights cannot be inverted")
    vals = data.values.reshape(data.sigma.size, -1)
    out = np.zeros((t.size, vals.shape[1]), dtype=complex)
    for a in range(0, data.sigma.size, chunk):
        sg = data.sigma[a : a + chunk]
        E = np.exp(1j * np.outer(t, sg)) * data.weights[a : a + chunk][None, :]
        out += E @ vals[a : a + chunk]
    out /= 2 * math.pi
    out = out.reshape((t.size,) + data.values.shape[1:])
    return out.real if data.real_input else out


# ---------------------------------------------------------------------------
# reconstruction of an evolution
# ---------------------------------------------------------------------------


@dataclass
class MellinReconstruction:
    """Outcome of :func:`mellin_reconstruct`.

    ``v_time`` and ``v_freq`` hold ``chi phi`` on the sub-grid at the
    verification times ``t``; ``rel_error`` is their relative sup-norm
    difference and ``contour_dev`` the relative sup-norm difference between
    reconstructions on two contour heights.  ``c`` is the constant from the
    ``sigma = 0`` residue, ``c_gamma`` the pairing ``i gamma_res int F^(0) r dr_*``
    and ``c_fit`` the externally supplied tail-fit constant.  ``remainder``
    is ``sup_x |v_time - c r|`` at each verification time and ``bound`` is
    ``A e^{-eps' t}``.
    """

    t: np.ndarray = field(repr=False)
    r_star: np.ndarray = field(repr=False)
    v_time: np.ndarray = field(repr=False)
    v_freq: np.ndarray = field(repr=False)
    rel_error: float
    contour_dev: float
    s: tuple
    eps_prime: float
    sigma_max: float
    d_sigma: float
    c: float
    c_deviation: float
    c_gamma: float
    c_fit: float | None
    A: float
    remainder: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    remainder_ok: bool
    F_outside: float
    triangle: dict

    def to_dict(self) -> dict:
        return {
            "rel_error": self.rel_error,
            "contour_dev": self.contour_dev,
            "s": list(self.s),
            "eps_prime": self.eps_prime,
            "sigma_max": self.sigma_max,
            "d_sigma": self.d_sigma,
            "c": self.c,
            "c_deviation": self.c_deviation,
            "c_gamma": self.c_gamma,
            "c_fit": self.c_fit,
            "A": self.A,
            "remainder_ok": self.remainder_ok,
            "F_outside": self.F_outside,
            "triangle": self.triangle,
        }


def _source_transform(rec, sig, chunk=128):
    """``F^(sigma) = dt sum_n e^{-i sigma t_n} F^n`` for each node (shape ``(S, N_sub)``)."""
    F = rec.F.tocsr()
    rows = np.unique(F.nonzero()[0])
    N = F.shape[1]
    out = np.zeros((sig.size, N), dtype=complex)
    if rows.size == 0:
        return out
    Fr = F[rows].toarray()
    tn = rec.dt * rows
    for a in range(0, sig.size, chunk):
        E = np.exp(-1j * np.outer(sig[a : a + chunk], tn))
        out[a : a + chunk] = rec.dt * (E @ Fr)
    return out


def _resolve(sig, Fh, ell, grid, pot, boundary, dt, chunk=128):
    """``R(sigma~) F^`` with the leapfrog symbol ``sigma~ = (2/dt) sin(sigma dt / 2)``."""
    st = (2.0 / dt) * np.sin(0.5 * dt * sig)
    out = np.empty_like(Fh)
    for a in range(0, sig.size, chunk):
        sols = solve(st[a : a + chunk], ell, Fh[a : a + chunk], grid, pot, boundary=boundary, return_all=True)
        out[a : a + chunk] = np.array([x.w for x in sols])
    return out


def _pick_sigma_max(rec, s, dt, h, tol, step=0.25):
    # stay inside the lattice pass band: h sigma~ / 2 < 1
    nyq = 0.9 * (2.0 / dt) * math.asin(min(1.0, dt / h))
    xs = np.arange(0.0, nyq, step)
    norms = np.linalg.norm(_source_transform(rec, xs + 1j * s), axis=1)
    peak = float(np.max(norms)) if norms.size else 0.0
    if peak == 0.0:
        return step
    above = np.nonzero(norms > tol * peak)[0]
    return float(min(xs[above[-1]] + 2 * step, nyq)) if above.size else step


def mellin_reconstruct(
    series,
    pot: ModePotential,
    *,
    s=(-0.03, -0.05),
    eps_prime: float = 0.05,
    d_sigma: float = 0.0075,
    sigma_max: float | None = None,
    decay_tol: float = 1e-7,
    verify_window=None,
    c_fit: float | None = None,
    residue_radius: float | None = None,
    residue_nodes: int = 32,
    boundary: str = "discrete",
    residue_tol: float = 0.01,
    remainder_range=(-40.0, 40.0),
) -> MellinReconstruction:
    """Rebuild ``chi phi`` from frequency-domain solves and extract the constant.

    The evolution's cutoff record supplies the discrete commutator source
    ``F^n``.  Its transform ``F^(sigma)`` is fed to the discrete resolvent
    at the leapfrog symbol ``sigma~ = (2/dt) sin(sigma dt/2)`` on the record's
    sub-grid with discrete outgoing rows, so the time-stepping and the
    frequency solves describe the same discrete problem.  The inverse
    transform on ``Im sigma = s[0]`` is compared with the recorded
    ``chi phi`` frames, and ``s[1]`` gives the contour-independence check.

    Moving the contour to ``Im sigma = eps_prime`` crosses the pole at 0:
    ``chi phi = i Res_0 v^ + remainder`` with
    ``|remainder| <= A e^{-eps' t}``, ``A = sup_x (1/2 pi) int |v^(sigma + i eps', x)| d sigma``.
    The bound is checked for ``x`` in ``remainder_range``: on the shifted
    contour outgoing solutions grow like ``e^{eps' |r_*|}``, so ``A`` over
    the whole sub-grid is needlessly large.

    Raises
    ------
    ResidueMismatch
        If ``c_fit`` is given and the residue constant differs from it by
        more than ``residue_tol`` (relative).
    """
    rec = series.cutoff
    if rec is None:
        raise ValidationError("the evolution was run without a cutoff record")
    if not all(x < 0 for x in s):
        raise ContourOutsideAnalyticity("reconstruction contours must lie in Im sigma < 0")
    if eps_prime <= 0:
        raise ValidationError("eps_prime must be positive")
    dt = rec.dt
    ell = pot.ell
    sub_grid = pot.grid.restrict(rec.sub)
    sub_pot = pot.restrict(rec.sub)
    r = sub_grid.r
    x = sub_grid.r_star

    # verification frames
    tv = rec.v_steps * dt
    if verify_window is not None:
        keep = (tv >= verify_window[0] - 1e-9) & (tv <= verify_window[1] + 1e-9)
    else:
        keep = np.ones(tv.size, bool)
    tv = tv[keep]
    v_time = rec.v[keep]
    vscale = max(float(np.max(np.abs(v_time))) if v_time.size else 0.0, 1e-300)

    if rec.F.nnz == 0:
        zeros = np.zeros_like(v_time)
        tri = {"c_fit": c_fit, "c_residue": 0.0, "c_gamma": 0.0}
        return MellinReconstruction(
            tv, x, v_time, zeros, float(np.max(np.abs(v_time), initial=0.0)) / vscale if v_time.size else 0.0, 0.0,
            tuple(s), eps_prime, 0.0, d_sigma, 0.0, 0.0, 0.0, c_fit, 0.0, np.max(np.abs(v_time), axis=1, initial=0.0),
            np.zeros(tv.size), True, rec.F_outside, tri,
        )

    if sigma_max is None:
        sigma_max = _pick_sigma_max(rec, s[0], dt, sub_grid.dr_star, decay_tol)
    J = int(math.ceil(sigma_max / d_sigma))
    re = d_sigma * np.arange(-J, J + 1)

    def reconstruct(height, times):
        sig = re + 1j * height
        Fh = _source_transform(rec, sig)
        vh = _resolve(sig, Fh, ell, sub_grid, sub_pot, boundary, dt)
        E = np.exp(1j * np.outer(times, sig)) * (d_sigma / (2 * math.pi))
        return (E @ vh).real, vh

    v_freq, _ = reconstruct(s[0], tv)
    v_freq2, _ = reconstruct(s[1], tv)
    rel_error = float(np.max(np.abs(v_freq - v_time)) / vscale)
    contour_dev = float(np.max(np.abs(v_freq - v_freq2)) / vscale)

    # residue at sigma = 0 (circle well inside |Im sigma| < min(|s|, eps'))
    if residue_radius is None:
        residue_radius = min(0.5 * abs(s[0]), 0.5 * eps_prime, 2.0 / float(np.max(np.abs(x))))
    th = 2 * math.pi * (np.arange(residue_nodes) + 0.5) / residue_nodes
    circ = residue_radius * np.exp(1j * th)
    vh_c = _resolve(circ, _source_transform(rec, circ), ell, sub_grid, sub_pot, boundary, dt)
    res = residue_radius * np.mean(vh_c * np.exp(1j * th)[:, None], axis=0)
    c_phi = 1j * res
    mask = r > 0
    psi_c = c_phi[mask] / r[mask]
    c = float(np.median(psi_c.real))
    c_dev = float(np.max(np.abs(psi_c - c)) / max(abs(c), 1e-300)) if c != 0 else float(np.max(np.abs(psi_c)))

    # shifted contour: remainder bound
    sig_e = re + 1j * eps_prime
    vh_e = _resolve(sig_e, _source_transform(rec, sig_e), ell, sub_grid, sub_pot, boundary, dt)
    if not np.all(np.isfinite(vh_e)):
        raise NumericalError("non-finite resolvent values on the shifted contour (reduce sigma_max)")
    xm = (x >= remainder_range[0]) & (x <= remainder_range[1])
    A = float(np.max(np.sum(np.abs(vh_e[:, xm]), axis=0)) * d_sigma / (2 * math.pi))
    const_part = (c_phi.real if ell == 0 else np.zeros_like(r))[None, :]
    remainder = np.max(np.abs(v_time - const_part)[:, xm], axis=1)
    bound = A * np.exp(-eps_prime * tv)
    remainder_ok = bool(np.all(remainder <= bound * (1.0 + 1e-9)))

    # gamma_res pairing with F^(0)
    F0 = _source_transform(rec, np.array([0.0 + 0.0j]))[0]
    if ell == 0:
        gamma = residue_weight_closed_form(sub_grid.horizons)
        c_gamma = float((1j * gamma * np.trapezoid(F0 * r, dx=sub_grid.dr_star)).real)
    else:
        c_gamma = 0.0

    def rel(a, b):
        den = max(abs(a), abs(b))
        return abs(a - b) / den if den > 0 else 0.0

    tri = {"c_residue": c, "c_gamma": c_gamma, "residue_vs_gamma": rel(c, c_gamma)}
    if c_fit is not None:
        tri.update({"c_fit": c_fit, "fit_vs_residue": rel(c_fit, c), "fit_vs_gamma": rel(c_fit, c_gamma)})
        if ell == 0 and rel(c_fit, c) > residue_tol:
            raise ResidueMismatch(f"residue constant {c:.8g} differs from the fitted {c_fit:.8g} by more than {residue_tol:.0%}")
    return MellinReconstruction(
        tv, x, v_time, v_freq, rel_error, contour_dev, tuple(s), eps_prime, sigma_max, d_sigma,
        c, c_dev, c_gamma, c_fit, A, remainder, bound, remainder_ok, rec.F_outside, tri,
    )


def write_reconstruction_csv(path, rec: MellinReconstruction, probes=(0.0,)) -> None:
    """Long-format CSV: ``t, r_star, time_domain, frequency_domain, difference``."""
    idx = [int(np.argmin(np.abs(rec.r_star - p))) for p in probes]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "r_star", "time_domain", "frequency_domain", "difference"])
        for k in range(rec.t.size):
            for i in idx:
                a, b = rec.v_time[k, i], rec.v_freq[k, i]
                w.writerow([format(float(v), ".17g") for v in (rec.t[k], rec.r_star[i], a, b, a - b)])
