"""
Polynomial form of the per-mode stationary equation and its horizon series.

For ``psi(r)`` the equation ``(Delta_X - sigma^2) psi = 0`` with angular
momentum ``ell`` reads, after multiplying by ``-r^3``,

    r P^2 psi'' + P (P + r P') psi' + (sigma^2 r^3 - ell(ell+1) P) psi = 0,

where ``P(r) = r mu(r) = r - 2m - Lambda r^3/3``.  All coefficients are
polynomials, so the horizons (and the origin in pure de Sitter) are regular
singular points and the outgoing solutions are Frobenius series with a finite
recurrence.  Near ``r_bh`` the outgoing exponent is ``i sigma / (2 kappa_bh)``
in ``z = r - r_bh``; near ``r_dS`` it is ``i sigma / (2 kappa_dS)`` in
``z = r_dS - r``.  The recurrence denominators vanish at ``sigma = i kappa k``,
which are the poles of the normalised horizon solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import SeriesDivergence
from .geometry import Horizons, SpacetimeParams

__all__ = ["RadialPolynomials", "HorizonSeries"]


@dataclass(frozen=True)
class RadialPolynomials:
    """Coefficient polynomials (ascending powers of ``r``) for channel ``ell``."""

    params: SpacetimeParams
    ell: int

    @property
    def P(self) -> np.ndarray:
        return np.array([-2.0 * self.params.m, 1.0, 0.0, -self.params.Lambda / 3.0])

    def coefficients(self):
        """Return ``(A, B, C_sigma2, C_const)`` with ``C = sigma^2 C_sigma2 + C_const``."""
        P = self.P
        dP = npoly.polyder(P)
        r = np.array([0.0, 1.0])
        A = npoly.polymul(r, npoly.polymul(P, P))
        B = npoly.polymul(P, npoly.polyadd(P, npoly.polymul(r, dP)))
        C2 = np.array([0.0, 0.0, 0.0, 1.0])
        C0 = -self.ell * (self.ell + 1) * P
        return A, B, C2, C0


def _shift(coefs: np.ndarray, r0: float, eps: float) -> np.ndarray:
    """Coefficients of ``p(r0 + eps z)`` in ascending powers of ``z``."""
    out = np.zeros(len(coefs))
    lin = np.array([r0, eps])
    acc = np.array([coefs[-1]])
    for c in coefs[-2::-1]:
        acc = npoly.polyadd(npoly.polymul(acc, lin), np.array([c]))
    out[: len(acc)] = acc
    return out


def _valuation(c: np.ndarray, tol: float) -> int:
    scale = max(np.max(np.abs(c)), 1.0)
    for j, v in enumerate(c):
        if abs(v) > tol * scale:
            return j
    return len(c)


class HorizonSeries:
    """Frobenius series ``psi = z^s sum_k c_k z^k`` about a regular singular point.

    Parameters
    ----------
    params, hz
        Geometry.
    ell
        Angular momentum.
    end
        ``"bh"``, ``"dS"`` or ``"origin"`` (pure de Sitter regular solution).
    k_max
        Number of series terms.
    """

    def __init__(self, params: SpacetimeParams, hz: Horizons, ell: int, end: str, k_max: int = 20):
        self.params = params
        self.hz = hz
        self.ell = ell
        self.end = end
        self.k_max = k_max
        if end == "bh":
            if hz.de_sitter:
                raise ValueError("pure de Sitter has no black-hole horizon; use end='origin'")
            self.r0, self.eps, self.kappa = hz.r_bh, 1.0, hz.kappa_bh
        elif end == "dS":
            self.r0, self.eps, self.kappa = hz.r_dS, -1.0, hz.kappa_dS
        elif end == "origin":
            if not hz.de_sitter:
                raise ValueError("origin series only applies to pure de Sitter")
            self.r0, self.eps, self.kappa = 0.0, 1.0, math.nan
        else:
            raise ValueError(f"unknown end {end!r}")

        A, B, C2, C0 = RadialPolynomials(params, ell).coefficients()
        a = _shift(A, self.r0, self.eps)
        b = self.eps * _shift(B, self.r0, self.eps)
        c2 = _shift(C2, self.r0, self.eps)
        c0 = _shift(C0, self.r0, self.eps)
        # strip the common power of z so the leading recurrence term is the indicial one
        q = min(_valuation(a, 1e-13) - 2, _valuation(b, 1e-13) - 1, min(_valuation(c2, 1e-13), _valuation(c0, 1e-13)))
        size = k_max + 8
        self._a = _pad(a[q + 2 :], size)
        self._b = _pad(b[q + 1 :], size)
        self._c2 = _pad(c2[q:], size)
        self._c0 = _pad(c0[q:], size)
        # radius of convergence: distance to the nearest other zero of A
        sing = [0.0, hz.r_dS, hz.r_neg] + ([] if hz.de_sitter else [hz.r_bh])
        if hz.de_sitter:
            sing.append(-hz.r_dS)
        self.radius = min(abs(s - self.r0) for s in sing if abs(s - self.r0) > 1e-12)

    def exponent(self, sigma):
        """Outgoing (or regular, at the origin) exponent for each ``sigma``."""
        sigma = np.asarray(sigma, dtype=complex)
        if self.end == "origin":
            return np.full(sigma.shape, float(self.ell), dtype=complex)
        return 1j * sigma / (2.0 * self.kappa)

    def coefficients(self, sigma) -> np.ndarray:
        """Series coefficients, shape ``(k_max + 1,) + sigma.shape``."""
        sigma = np.asarray(sigma, dtype=complex)
        s = self.exponent(sigma)
        s2 = sigma**2
        a, b = self._a, self._b
        cc = self._c2[:, None] * s2.reshape(1, -1) + self._c0[:, None]
        cc = cc.reshape((-1,) + sigma.shape)
        coef = np.zeros((self.k_max + 1,) + sigma.shape, dtype=complex)
        coef[0] = 1.0
        for n in range(1, self.k_max + 1):
            acc = np.zeros(sigma.shape, dtype=complex)
            for k in range(max(0, n - len(a) + 1), n):
                j = n - k
                x = k + s
                acc += coef[k] * (a[j] * x * (x - 1.0) + b[j] * x + cc[j])
            x = n + s
            denom = a[0] * x * (x - 1.0) + b[0] * x + cc[0]
            coef[n] = -acc / denom
        return coef

    def seed_offset(self, sigma, tol: float = 1e-12) -> np.ndarray:
        """Largest ``z`` where the tail after ``k_max`` terms is estimated below ``tol``.

        The remainder is bounded geometrically from the last computed
        coefficients.  Raises :class:`SeriesDivergence` when the usable offset
        collapses (``sigma`` too close to a pole of the series).
        """
        coef = self.coefficients(sigma)
        K = self.k_max
        mags = np.abs(coef[K // 2 :]) + 1e-300
        ks = np.arange(K // 2, K + 1).reshape((-1,) + (1,) * np.ndim(sigma))
        # effective radius from the growth of the coefficients
        rad = np.min(mags ** (-1.0 / np.maximum(ks, 1)), axis=0)
        rad = np.minimum(rad, self.radius)
        z = rad * tol ** (1.0 / (K + 1))
        if np.any(z < 1e-8 * self.radius):
            raise SeriesDivergence("horizon series coefficients blow up; sigma is too close to a series pole")
        return z

    def evaluate(self, sigma, z, coef=None):
        """Return ``(psi, dpsi/dz)`` at offsets ``z`` (broadcast against ``sigma``)."""
        sigma = np.asarray(sigma, dtype=complex)
        if coef is None:
            coef = self.coefficients(sigma)
        s = self.exponent(sigma)
        z = np.asarray(z, dtype=float)
        series = np.zeros(np.broadcast(sigma, z).shape, dtype=complex)
        for k in range(self.k_max, -1, -1):
            series = series * z + coef[k]
        dseries = _horner_derivative(coef, z)
        zs = z.astype(complex) ** s
        psi = zs * series
        dpsi = zs * (s * series / z + dseries)
        return psi, dpsi


def _horner_derivative(coef, z):
    K = coef.shape[0] - 1
    out = np.zeros(np.broadcast(coef[0], z).shape, dtype=complex)
    for k in range(K, 0, -1):
        out = out * z + k * coef[k]
    return out


def _pad(c: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    n = min(len(c), size)
    out[:n] = c[:n]
    return out
