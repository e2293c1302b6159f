"""
Static de Sitter-Schwarzschild geometry.

The metric function is ``mu(r) = 1 - 2m/r - Lambda r^2/3``.  Its two positive
roots ``r_bh < r_dS`` bound the static region, and the tortoise coordinate
``r_*`` with ``dr_*/dr = 1/mu`` maps ``(r_bh, r_dS)`` onto the real line.

Near a horizon the radius itself carries no information in double precision
(at ``r_* = -80`` the offset ``r - r_bh`` is ~1e-15), so every routine that
works in the tails keeps the horizon offsets ``z_bh = r - r_bh`` and
``z_dS = r_dS - r`` as primary quantities and evaluates ``mu`` in factored
form from them.

Pure de Sitter space (``m = 0``) is supported through ``de_sitter=True``: the
black-hole end is replaced by the regular origin ``r = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtremalOrInvalidParams, NoConvergence, OutOfDomain

__all__ = [
    "SpacetimeParams",
    "Horizons",
    "RadialGrid",
    "mu",
    "mu_prime",
    "beta",
    "horizons",
    "tortoise",
    "tortoise_inverse",
    "tortoise_inverse_offsets",
    "radial_grid",
    "r_anchor",
    "horizon_constants",
    "r_of_mu",
    "DEFAULT_EXTREMALITY_MARGIN",
]

DEFAULT_EXTREMALITY_MARGIN = 1e-8


@dataclass(frozen=True)
class SpacetimeParams:
    """Mass ``m`` and cosmological constant ``Lambda`` (geometric units).

    Validity (``m > 0``, ``Lambda > 0``, ``9 m^2 Lambda < 1``) is enforced by
    :func:`horizons`, so that an invalid pair can still be carried around and
    reported.  ``de_sitter=True`` requires ``m == 0``.
    """

    m: float
    Lambda: float
    de_sitter: bool = False
    extremality_margin: float = DEFAULT_EXTREMALITY_MARGIN

    @property
    def extremality(self) -> float:
        return 9.0 * self.m**2 * self.Lambda

    def validate(self) -> None:
        if self.de_sitter:
            if self.m != 0:
                raise ExtremalOrInvalidParams("de Sitter flag requires m = 0")
            if not self.Lambda > 0:
                raise ExtremalOrInvalidParams("Lambda must be positive")
            return
        if not self.m > 0:
            raise ExtremalOrInvalidParams(f"m must be positive, got {self.m!r}")
        if not self.Lambda > 0:
            raise ExtremalOrInvalidParams(f"Lambda must be positive, got {self.Lambda!r}")
        if self.extremality > 1.0 - self.extremality_margin:
            raise ExtremalOrInvalidParams(
                f"9 m^2 Lambda = {self.extremality:.17g} is not below 1 - {self.extremality_margin:g}: "
                "the black-hole and cosmological horizons merge or disappear"
            )


@dataclass(frozen=True)
class Horizons:
    """Roots of ``mu`` and the surface gravities at the two horizons.

    For pure de Sitter ``r_bh`` is the origin and ``kappa_bh`` is NaN.
    """

    r_bh: float
    r_dS: float
    r_neg: float
    kappa_bh: float
    kappa_dS: float
    de_sitter: bool = False

    @property
    def kappa_min(self) -> float:
        if self.de_sitter:
            return self.kappa_dS
        return min(self.kappa_bh, self.kappa_dS)


def mu(params: SpacetimeParams, r):
    """``1 - 2m/r - Lambda r^2/3``; accepts scalars or arrays (complex allowed)."""
    return 1.0 - 2.0 * params.m / r - params.Lambda * r**2 / 3.0


def mu_prime(params: SpacetimeParams, r):
    return 2.0 * params.m / r**2 - 2.0 * params.Lambda * r / 3.0


def beta(params: SpacetimeParams, r):
    """Half the radial derivative of ``mu``."""
    return 0.5 * mu_prime(params, r)


def _cubic_roots(m: float, Lam: float) -> tuple[float, float, float]:
    # r^3 - (3/Lam) r + 6m/Lam = 0, depressed cubic with three real roots
    amp = 2.0 / math.sqrt(Lam)
    theta = math.acos(-3.0 * m * math.sqrt(Lam)) / 3.0
    roots = [amp * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]

    def poly(r):  # r * mu(r)
        return r - 2.0 * m - Lam * r**3 / 3.0

    def dpoly(r):
        return 1.0 - Lam * r**2

    polished = [r - poly(r) / dpoly(r) for r in roots]
    r_dS, r_bh, r_neg = polished
    return r_bh, r_dS, r_neg


def horizons(params: SpacetimeParams) -> Horizons:
    """Horizon radii and surface gravities.

    Raises
    ------
    ExtremalOrInvalidParams
        If ``m <= 0``, ``Lambda <= 0`` or ``9 m^2 Lambda`` is within the
        configured margin of 1.
    """
    params.validate()
    if params.de_sitter:
        r_dS = math.sqrt(3.0 / params.Lambda)
        kappa_dS = -beta(params, r_dS)
        return Horizons(0.0, r_dS, -r_dS, math.nan, kappa_dS, de_sitter=True)
    r_bh, r_dS, r_neg = _cubic_roots(params.m, params.Lambda)
    return Horizons(
        r_bh=r_bh,
        r_dS=r_dS,
        r_neg=r_neg,
        kappa_bh=beta(params, r_bh),
        kappa_dS=-beta(params, r_dS),
    )


# ---------------------------------------------------------------------------
# Tortoise coordinate
# ---------------------------------------------------------------------------


def _roots_and_slopes(params: SpacetimeParams, hz: Horizons):
    if hz.de_sitter:
        roots = (hz.r_dS, -hz.r_dS)
    else:
        roots = (hz.r_bh, hz.r_dS, hz.r_neg)
    return [(ri, mu_prime(params, ri)) for ri in roots]


def r_anchor(params: SpacetimeParams, hz: Horizons) -> float:
    """Maximiser of ``mu`` on the static region; ``r_*`` vanishes there."""
    if hz.de_sitter:
        return 0.0
    return (3.0 * params.m / params.Lambda) ** (1.0 / 3.0)


def _raw_tortoise(params, hz, r):
    return sum(np.log(np.abs(r - ri)) / dmu for ri, dmu in _roots_and_slopes(params, hz))


def _anchor_offset(params, hz) -> float:
    return float(_raw_tortoise(params, hz, r_anchor(params, hz)))


def tortoise(params: SpacetimeParams, hz: Horizons, r):
    """Tortoise coordinate, normalised to vanish at :func:`r_anchor`.

    Raises
    ------
    OutOfDomain
        If any ``r`` lies outside the open static interval.
    """
    r_arr = np.asarray(r, dtype=float)
    if hz.de_sitter:
        bad = (r_arr < 0.0) | (r_arr >= hz.r_dS)
    else:
        bad = (r_arr <= hz.r_bh) | (r_arr >= hz.r_dS)
    if np.any(bad):
        raise OutOfDomain(f"r must lie in the static region ({hz.r_bh}, {hz.r_dS})")
    out = _raw_tortoise(params, hz, r_arr) - _anchor_offset(params, hz)
    return float(out) if np.ndim(out) == 0 else out


def horizon_constants(params: SpacetimeParams, hz: Horizons) -> tuple[float, float]:
    """Limits ``C_bh``, ``C_dS`` of ``r_* - log|r - r_h| / mu'(r_h)`` at the two horizons.

    For pure de Sitter ``C_bh`` is NaN.
    """
    anchor = _anchor_offset(params, hz)
    pairs = _roots_and_slopes(params, hz)
    c_dS = sum(math.log(abs(hz.r_dS - ri)) / d for ri, d in pairs if ri != hz.r_dS) - anchor
    if hz.de_sitter:
        return math.nan, c_dS
    c_bh = sum(math.log(abs(hz.r_bh - ri)) / d for ri, d in pairs if ri != hz.r_bh) - anchor
    return c_bh, c_dS


def r_of_mu(params: SpacetimeParams, hz: Horizons, mu_value, side: str, n_iter: int = 60):
    """Radius with ``mu(r) = mu_value`` on the black-hole or de Sitter branch.

    ``mu_value`` may be slightly negative (the extension across a horizon) or
    complex (complex-step differentiation); Newton's method is started from
    the horizon linearisation and run for a fixed number of steps so the
    result is an analytic function of the input.
    """
    if side not in ("bh", "dS"):
        raise ValueError(f"side must be 'bh' or 'dS', got {side!r}")
    if side == "bh" and hz.de_sitter:
        raise ValueError("pure de Sitter has no black-hole branch")
    r_h = hz.r_bh if side == "bh" else hz.r_dS
    target = np.asarray(mu_value)
    r = r_h + target / mu_prime(params, r_h)
    ra = r_anchor(params, hz)
    for _ in range(n_iter):
        # P(r) - r mu = 0 avoids the 1/r in mu
        f = r - 2.0 * params.m - params.Lambda * r**3 / 3.0 - r * target
        df = 1.0 - params.Lambda * r**2 - target
        step = f / df
        r = r - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(r)):
            break
    if np.any(np.abs(np.real(r) - r_h) > abs(ra - r_h) + 1e-9):
        raise OutOfDomain("mu value is not attained on the requested branch")
    return r


def _mu_from_offsets(params, hz, r, z_bh, z_dS):
    if hz.de_sitter:
        return params.Lambda / 3.0 * z_dS * (r + hz.r_dS)
    return params.Lambda / 3.0 * z_bh * z_dS * (r - hz.r_neg) / r


def _tortoise_from_offsets(params, hz, r, z_bh, z_dS):
    out = -_anchor_offset(params, hz)
    if hz.de_sitter:
        pairs = ((z_dS, hz.r_dS), (r + hz.r_dS, -hz.r_dS))
    else:
        pairs = ((z_bh, hz.r_bh), (z_dS, hz.r_dS), (r - hz.r_neg, hz.r_neg))
    for dist, ri in pairs:
        out = out + np.log(dist) / mu_prime(params, ri)
    return out


def tortoise_inverse_offsets(
    params: SpacetimeParams,
    hz: Horizons,
    r_star,
    *,
    tol: float = 1e-13,
    max_iter: int = 200,
):
    """Invert the tortoise map, returning ``(r, r - r_bh, r_dS - r)``.

    The offsets keep full relative precision in the tails.  Newton iteration
    runs in ``u = log(offset to the nearer horizon)`` with a bisection
    safeguard, and stops once the ``r_*`` residual is below
    ``tol * (1 + |r_*|)``.

    Raises
    ------
    NoConvergence
        If the iteration budget is exhausted.
    """
    xs = np.atleast_1d(np.asarray(r_star, dtype=float))
    if hz.de_sitter:
        if np.any(xs < 0):
            raise OutOfDomain("pure de Sitter tortoise coordinate is non-negative")
        a = hz.r_dS
        y = np.exp(-2.0 * xs / a)
        r = a * (1.0 - y) / (1.0 + y)
        z_dS = 2.0 * a * y / (1.0 + y)
        return _squeeze(xs, r, r.copy(), z_dS, r_star)

    ra = r_anchor(params, hz)
    left = xs <= 0.0
    # horizon of reference, sign of dr/du and anchor bound for each node
    r_ref = np.where(left, hz.r_bh, hz.r_dS)
    sgn = np.where(left, 1.0, -1.0)
    kappa = np.where(left, hz.kappa_bh, hz.kappa_dS)
    u_hi = np.where(left, math.log(ra - hz.r_bh), math.log(hz.r_dS - ra))

    # asymptotic constants: r_* ~ +-log(offset)/(2 kappa) + C near each horizon
    anchor = _anchor_offset(params, hz)
    pairs = _roots_and_slopes(params, hz)
    c_bh = sum(math.log(abs(hz.r_bh - ri)) / d for ri, d in pairs if ri != hz.r_bh) - anchor
    c_dS = sum(math.log(abs(hz.r_dS - ri)) / d for ri, d in pairs if ri != hz.r_dS) - anchor
    u = np.where(left, 2.0 * kappa * (xs - c_bh), -2.0 * kappa * (xs - c_dS))
    u = np.minimum(u, u_hi - 1e-3)
    lo = np.minimum(u, u_hi) - 50.0
    hi = u_hi.copy()

    def evaluate(u):
        z = np.exp(u)
        r = r_ref + sgn * z
        z_bh = np.where(left, z, r - hz.r_bh)
        z_dS = np.where(left, hz.r_dS - r, z)
        f = _tortoise_from_offsets(params, hz, r, z_bh, z_dS) - xs
        m_ = _mu_from_offsets(params, hz, r, z_bh, z_dS)
        return r, z_bh, z_dS, f, sgn * z / m_

    for _ in range(max_iter):
        r, z_bh, z_dS, f, df = evaluate(u)
        done = np.abs(f) < tol * (1.0 + np.abs(xs))
        if np.all(done):
            return _squeeze(xs, r, z_bh, z_dS, r_star)
        # r_* is increasing (bh side) or decreasing (dS side) in u
        too_big = (f * sgn) > 0
        hi = np.where(too_big, np.minimum(hi, u), hi)
        lo = np.where(too_big, lo, np.maximum(lo, u))
        step = u - f / df
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        u = np.where(done, u, np.where(bad, 0.5 * (lo + hi), step))
    raise NoConvergence(f"tortoise inversion did not converge in {max_iter} iterations")


def _squeeze(xs, r, z_bh, z_dS, like):
    if np.ndim(like) == 0:
        return float(r[0]), float(z_bh[0]), float(z_dS[0])
    return r, z_bh, z_dS


def tortoise_inverse(params: SpacetimeParams, hz: Horizons, r_star, **kwargs):
    """Radius ``r`` with ``tortoise(r) == r_star`` (see :func:`tortoise_inverse_offsets`)."""
    return tortoise_inverse_offsets(params, hz, r_star, **kwargs)[0]


# ---------------------------------------------------------------------------
# Radial grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in ``r_*`` with the matching radii and accurate ``mu``."""

    params: SpacetimeParams
    horizons: Horizons
    r_star: np.ndarray
    r: np.ndarray
    z_bh: np.ndarray
    z_dS: np.ndarray
    mu: np.ndarray = field(repr=False)

    @property
    def dr_star(self) -> float:
        return float(self.r_star[1] - self.r_star[0])

    @property
    def r_star_min(self) -> float:
        return float(self.r_star[0])

    @property
    def r_star_max(self) -> float:
        return float(self.r_star[-1])

    def __len__(self) -> int:
        return self.r_star.size

    def index_of(self, r_star: float) -> int:
        """Index of the node nearest to ``r_star``."""
        return int(np.argmin(np.abs(self.r_star - r_star)))

    def restrict(self, sl: slice) -> "RadialGrid":
        """Contiguous sub-grid (node values are copied, not recomputed)."""
        return RadialGrid(self.params, self.horizons, self.r_star[sl], self.r[sl], self.z_bh[sl], self.z_dS[sl], self.mu[sl])


def radial_grid(
    params: SpacetimeParams,
    hz: Horizons,
    r_star_min: float,
    r_star_max: float,
    dr_star: float,
) -> RadialGrid:
    """Uniform ``r_*`` grid from ``r_star_min`` to ``r_star_max`` (inclusive).

    For pure de Sitter ``r_star_min`` must be ``0`` (the origin node).
    """
    n = int(round((r_star_max - r_star_min) / dr_star))
    if n < 2 or not math.isclose(n * dr_star, r_star_max - r_star_min, rel_tol=1e-9, abs_tol=1e-12):
        raise OutOfDomain("grid bounds must be an integer number of steps apart")
    xs = r_star_min + dr_star * np.arange(n + 1)
    r, z_bh, z_dS = tortoise_inverse_offsets(params, hz, xs)
    if hz.de_sitter:
        r[0] = 0.0
        z_bh[0] = 0.0
    m_ = _mu_from_offsets(params, hz, r, z_bh, z_dS)
    return RadialGrid(params, hz, xs, r, z_bh, z_dS, m_)
