"""
Spherical-harmonic reduction of the wave operator.

Writing ``u = sum_lm r^{-1} phi_lm(t, r) Y_lm(omega)`` turns ``Box u = 0`` into

    d_t^2 phi - d_{r_*}^2 phi + V_l phi = 0,
    V_l(r) = mu(r) (l(l+1)/r^2 + mu'(r)/r),

and the spatial Laplacian into ``Delta_X (r^{-1} phi) = r^{-1}(-d_{r_*}^2 phi + V_l phi)``.
The direct (un-reduced) radial form of ``Delta_X`` is kept here as an
independent check of that identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre, sph_harm_y

from .errors import QuadratureUnderResolved
from .geometry import Horizons, RadialGrid, SpacetimeParams, mu, mu_prime

__all__ = [
    "ModePotential",
    "ModeCoefficients",
    "AngularQuadrature",
    "potential",
    "potential_values",
    "free_potential",
    "laplacian_direct",
    "laplacian_reduced",
    "real_sph_harm",
    "angular_quadrature",
    "project",
    "resum",
]


def potential_values(params: SpacetimeParams, ell: int, r, mu_r=None):
    """``V_l`` at radii ``r``; pass ``mu_r`` when ``mu`` is known more accurately (tails)."""
    r = np.asarray(r, dtype=float)
    m_ = mu(params, r) if mu_r is None else mu_r
    with np.errstate(divide="ignore", invalid="ignore"):
        v = m_ * (ell * (ell + 1) / r**2 + mu_prime(params, r) / r)
    if params.de_sitter:
        # regular origin: mu -> 1, V ~ l(l+1)/r^2 - 2 Lambda/3
        v = np.where(r == 0.0, 0.0, v)
    return v


@dataclass(frozen=True)
class ModePotential:
    """Effective potential of one angular channel on a radial grid.

    ``free=True`` marks the ``V = 0`` test hook; solvers then use exact
    free-space boundary rows instead of horizon series.
    """

    ell: int
    V: np.ndarray = field(repr=False)
    grid: RadialGrid = field(repr=False)
    free: bool = False

    @property
    def params(self) -> SpacetimeParams:
        return self.grid.params

    def restrict(self, sl: slice) -> "ModePotential":
        return ModePotential(self.ell, self.V[sl], self.grid.restrict(sl), self.free)

    @property
    def horizons(self) -> Horizons:
        return self.grid.horizons


def potential(params: SpacetimeParams, hz: Horizons, grid: RadialGrid, ell: int) -> ModePotential:
    """Potential ``V_l`` on ``grid`` (evaluated with the grid's accurate ``mu``)."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return ModePotential(ell, potential_values(params, ell, grid.r, grid.mu), grid)


def free_potential(grid: RadialGrid, ell: int = 0) -> ModePotential:
    """``V = 0`` on ``grid``; test hook for free-space comparisons."""
    return ModePotential(ell, np.zeros(len(grid)), grid, free=True)


# ---------------------------------------------------------------------------
# operator-equivalence check
# ---------------------------------------------------------------------------


def laplacian_direct(params: SpacetimeParams, ell: int, psi, r, h: float = 1e-20):
    """Mode-reduced ``Delta_X psi`` from the radial form of the d'Alembertian.

    ``Delta_X psi = -mu r^{-2} (r^2 mu psi')' + mu l(l+1) r^{-2} psi`` with
    ``psi`` a callable accepting complex radii.  The inner derivative is a
    complex step and the outer one a central difference of the flux
    ``r^2 mu psi'``, so no tortoise coordinate or potential enters.
    """
    r = np.asarray(r, dtype=float)

    def flux(x):
        dpsi = np.imag(psi(x + 1j * h)) / h
        return x**2 * mu(params, x) * dpsi

    d = 2e-3
    dflux = (-flux(r + 2 * d) + 8 * flux(r + d) - 8 * flux(r - d) + flux(r - 2 * d)) / (12 * d)
    m_ = mu(params, r)
    return -m_ / r**2 * dflux + m_ * ell * (ell + 1) / r**2 * np.real(psi(r + 0j))


def laplacian_reduced(params: SpacetimeParams, ell: int, psi, r, h: float = 1e-20):
    """``r^{-1}(-d_{r_*}^2 phi + V_l phi)`` with ``phi = r psi``.

    ``d_{r_*} = mu d_r``; both derivatives are taken analytically in ``r``
    via a complex step on ``phi`` and a central difference of ``mu phi'``.
    """
    r = np.asarray(r, dtype=float)

    def phi(x):
        return x * psi(x)

    def dphi_star(x):
        return mu(params, x) * np.imag(phi(x + 1j * h)) / h

    d = 2e-3
    d2 = (-dphi_star(r + 2 * d) + 8 * dphi_star(r + d) - 8 * dphi_star(r - d) + dphi_star(r - 2 * d)) / (12 * d)
    d2 = mu(params, r) * d2
    return (-d2 + potential_values(params, ell, r) * np.real(phi(r + 0j))) / r


# ---------------------------------------------------------------------------
# angular projection
# ---------------------------------------------------------------------------


def real_sph_harm(ell: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic ``Y_lm`` (``theta`` polar, ``phi`` azimuth)."""
    if m == 0:
        return np.real(sph_harm_y(ell, 0, theta, phi))
    y = sph_harm_y(ell, abs(m), theta, phi)
    sign = (-1.0) ** m
    if m > 0:
        return np.sqrt(2.0) * sign * np.real(y)
    return np.sqrt(2.0) * sign * np.imag(y)


@dataclass(frozen=True)
class AngularQuadrature:
    """Gauss-Legendre in ``cos theta`` times uniform ``phi``; exact to degree ``2 n_theta - 1``."""

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray  # shape (n_theta, n_phi)

    @property
    def shape(self):
        return self.weights.shape

    def mesh(self):
        return np.meshgrid(self.theta, self.phi, indexing="ij")


def angular_quadrature(L_max: int, oversample: int = 2) -> AngularQuadrature:
    n_theta = oversample * (L_max + 1)
    n_phi = 2 * n_theta
    x, w = roots_legendre(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    weights = np.outer(w, np.full(n_phi, 2.0 * np.pi / n_phi))
    return AngularQuadrature(theta, phi, weights)


@dataclass(frozen=True)
class ModeCoefficients:
    """Projection of data onto real harmonics: ``coeffs[(l, m)]`` is a radial array."""

    L_max: int
    coeffs: dict
    parseval_defect: float

    def channel(self, ell: int) -> dict:
        return {m: c for (l_, m), c in self.coeffs.items() if l_ == ell}


def project(data, quad: AngularQuadrature, L_max: int, tol: float = 1e-8) -> ModeCoefficients:
    """Project ``data`` (shape ``(n_r, n_theta, n_phi)`` or ``(n_theta, n_phi)``) onto ``Y_lm``, ``l <= L_max``.

    The Parseval defect compares ``sum |c_lm|^2`` with the quadrature
    integral of ``|data|^2`` for the band-limited part; it is measured after
    resumming so that data with content above ``L_max`` is reported rather
    than silently truncated.

    Raises
    ------
    QuadratureUnderResolved
        If the relative defect exceeds ``tol``.
    """
    data = np.asarray(data, dtype=float)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[None]
    TH, PH = quad.mesh()
    coeffs = {}
    recon = np.zeros_like(data)
    for ell in range(L_max + 1):
        for m in range(-ell, ell + 1):
            y = real_sph_harm(ell, m, TH, PH)
            c = np.einsum("rij,ij->r", data, y * quad.weights)
            coeffs[(ell, m)] = c[0] if squeeze else c
            recon += c[:, None, None] * y[None]
    total = np.einsum("rij,ij->", data**2, quad.weights)
    captured = sum(float(np.sum(np.atleast_1d(c) ** 2)) for c in coeffs.values())
    resid = np.einsum("rij,ij->", (data - recon) ** 2, quad.weights)
    scale = max(total, 1e-300)
    # energy outside the band plus any loss of discrete orthogonality
    defect = (resid + abs(total - captured - resid)) / scale
    if defect > tol:
        raise QuadratureUnderResolved(f"Parseval defect {defect:.3e} exceeds {tol:.1e}")
    return ModeCoefficients(L_max, coeffs, defect)


def resum(mc: ModeCoefficients, theta, phi):
    """Evaluate ``sum c_lm Y_lm`` at angles (broadcast against the radial axis)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = 0.0
    for (ell, m), c in mc.coeffs.items():
        y = real_sph_harm(ell, m, theta, phi)
        c = np.asarray(c)
        out = out + (c.reshape(c.shape + (1,) * y.ndim) * y if c.ndim else c * y)
    return out
