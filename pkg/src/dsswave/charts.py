"""
Compactification charts of the static patch and the dual metric in each.

Charts (angular variables suppressed by spherical symmetry):

=============  ======================  ==========================================
tag            coordinates             definition
=============  ======================  ==========================================
product        ``(t, r)``              static coordinates
blowup_bh      ``(rho, mu)``           ``rho = e^{-2 lam_bh t} / mu``
blowup_dS      ``(rho, mu)``           ``rho = e^{-2 lam_dS t} / mu``
blowdown_bh    ``(s_+, s_-)``          ``s_pm = mu^{1/2} e^{pm lam_bh t}``
blowdown_dS    ``(s_+, s_-)``          ``s_pm = mu^{1/2} e^{pm lam_dS t}``
tf_defining    ``(x, r)``              ``x = f(r) e^{-t}``
=============  ======================  ==========================================

The dual metric of ``g = mu dt^2 - mu^{-1} dr^2 - r^2 d omega^2`` is
``G = mu^{-1} tau^2 - mu p_r^2 - r^{-2} |eta|^2``.  Blown-up charts are
read in the b-frame, i.e. against the coordinates ``(log rho, mu)``, and
the ``tf_defining`` chart against ``(log x, r)``.

With ``lam = kappa`` the coefficient ``gamma = mu^{-1} (kappa^2 - beta^2)``
has a removable singularity at the horizon.  It is evaluated from the exact
factorisation ``beta - beta_h = (r - r_h) d_beta`` and ``mu = (r - r_h) d_mu``,
so no digits are lost as ``mu -> 0``.

Transition maps accept complex arguments; Jacobians for the pushforward
checks are taken by complex-step differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ChartDegenerate, OutOfDomain, OutsideOverlap
from .geometry import Horizons, SpacetimeParams, beta, horizons, mu, r_anchor, r_of_mu

__all__ = [
    "ChartId",
    "ChartConfig",
    "ChartPoint",
    "DualMetricBlock",
    "CotangentPointB",
    "PushforwardReport",
    "smooth_step",
    "to_chart",
    "dual_metric",
    "pushforward_check",
    "hamilton_field",
    "hamilton_flow",
    "dual_metric_b",
    "gamma",
    "defining_function_x",
    "log_f",
    "rho_coefficient_limit",
    "verify_all",
]

_H = 1e-20  # complex step


class ChartId(str, Enum):
    PRODUCT = "product"
    BLOWUP_BH = "blowup_bh"
    BLOWUP_DS = "blowup_dS"
    BLOWDOWN_BH = "blowdown_bh"
    BLOWDOWN_DS = "blowdown_dS"
    TF_DEFINING = "tf_defining"

    @property
    def end(self) -> str | None:
        if self.value.endswith("_bh"):
            return "bh"
        if self.value.endswith("_dS"):
            return "dS"
        return None

    @property
    def domain(self) -> tuple[str, ...]:
        """Validity domain as explicit inequalities (``C`` from :class:`ChartConfig`)."""
        return _DOMAINS[self]


_DOMAINS = {
    ChartId.PRODUCT: ("r_bh < r < r_dS",),
    ChartId.BLOWUP_BH: ("rho > 0", "0 < mu <= mu_max", "rho * mu < exp(-2 lam_bh C)"),
    ChartId.BLOWUP_DS: ("rho > 0", "0 < mu <= mu_max", "rho * mu < exp(-2 lam_dS C)"),
    ChartId.BLOWDOWN_BH: ("s_+ > 0", "s_- > 0", "s_+ s_- <= mu_max"),
    ChartId.BLOWDOWN_DS: ("s_+ > 0", "s_- > 0", "s_+ s_- <= mu_max"),
    ChartId.TF_DEFINING: ("x > 0", "r_bh < r < r_dS", "x < f(r) exp(-C)"),
}


@dataclass(frozen=True)
class ChartConfig:
    """Free choices of the compactification.

    ``C`` is the time threshold of the ``T_{lam,+}`` charts, ``r1_frac`` and
    ``r2_frac`` place the transition interval of ``f`` inside
    ``(r_bh, r_dS)``, and ``lambda_bh``/``lambda_dS`` override the
    exponents (default: the surface gravities).
    """

    C: float = 1.0
    r1_frac: float = 0.4
    r2_frac: float = 0.6
    lambda_bh: float | None = None
    lambda_dS: float | None = None


DEFAULT_CONFIG = ChartConfig()


@lru_cache(maxsize=64)
def _hz(params: SpacetimeParams) -> Horizons:
    return horizons(params)


def _lam(params, cfg: ChartConfig, end: str) -> float:
    hz = _hz(params)
    if end == "bh":
        return hz.kappa_bh if cfg.lambda_bh is None else cfg.lambda_bh
    return hz.kappa_dS if cfg.lambda_dS is None else cfg.lambda_dS


def _canonical(params, cfg: ChartConfig, end: str) -> bool:
    hz = _hz(params)
    kap = hz.kappa_bh if end == "bh" else hz.kappa_dS
    return math.isclose(_lam(params, cfg, end), kap, rel_tol=1e-14)


def _mu_max(params) -> float:
    hz = _hz(params)
    return float(mu(params, r_anchor(params, hz)))


@dataclass(frozen=True)
class ChartPoint:
    """An event in one chart.

    ``side`` selects the radial branch (``"bh"``: ``r < r_anchor``) where the
    chart coordinates only fix ``mu``; it defaults to the chart's own end and
    is ignored by charts that carry ``r``.
    """

    chart: ChartId
    coords: tuple
    params: SpacetimeParams
    side: str | None = None
    config: ChartConfig = DEFAULT_CONFIG

    def __post_init__(self):
        object.__setattr__(self, "chart", ChartId(self.chart))
        object.__setattr__(self, "coords", tuple(self.coords))
        if self.side is None and self.chart.end is not None:
            object.__setattr__(self, "side", self.chart.end)

    @property
    def radius(self):
        return _to_product(self)[1]


# ---------------------------------------------------------------------------
# smooth partition of unity and the function f
# ---------------------------------------------------------------------------


def smooth_step(u):
    """C-infinity step from 0 (``u <= 0``) to 1 (``u >= 1``); analytic in the interior.

    Complex arguments are allowed (for complex-step derivatives); the branch
    is chosen from the real part.
    """
    u = np.asarray(u)
    ur = np.real(u)
    inside = (ur > 0) & (ur < 1)
    safe = np.where(inside, u, 0.5)
    a = np.exp(-1.0 / safe)
    b = np.exp(-1.0 / (1.0 - safe))
    out = np.where(inside, a / (a + b), np.where(ur >= 1, 1.0, 0.0))
    return out if np.iscomplexobj(u) else np.real(out)


def log_f(params: SpacetimeParams, r, cfg: ChartConfig = DEFAULT_CONFIG, mu_r=None):
    """``log f(r)`` with ``f = mu^{-1/(2 lam_bh)}`` near ``r_bh`` and ``mu^{-1/(2 lam_dS)}`` near ``r_dS``.

    Pass ``mu_r`` when ``mu`` is known more accurately than ``mu(r)`` (grid tails).
    """
    hz = _hz(params)
    if hz.de_sitter:
        return -np.log(mu(params, r) if mu_r is None else mu_r) / (2.0 * _lam(params, cfg, "dS"))
    r1 = hz.r_bh + cfg.r1_frac * (hz.r_dS - hz.r_bh)
    r2 = hz.r_bh + cfg.r2_frac * (hz.r_dS - hz.r_bh)
    S = smooth_step((r - r1) / (r2 - r1))
    lb, ld = _lam(params, cfg, "bh"), _lam(params, cfg, "dS")
    m_ = mu(params, r) if mu_r is None else mu_r
    return -np.log(m_) * ((1.0 - S) / (2.0 * lb) + S / (2.0 * ld))


# ---------------------------------------------------------------------------
# coordinate maps (all complex-analytic)
# ---------------------------------------------------------------------------


def _r_from_mu(params, m_, side):
    return r_of_mu(params, _hz(params), m_, side)


def _frame_to_product(chart: ChartId, a, b, params, side, cfg):
    """Frame coordinates -> ``(t, r)``; frames are (t,r), (log rho, mu), (s+, s-), (log x, r)."""
    if chart is ChartId.PRODUCT:
        return a, b
    if chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS):
        lam = _lam(params, cfg, chart.end)
        r = _r_from_mu(params, b, side)
        return -(a + np.log(b)) / (2.0 * lam), r
    if chart in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        lam = _lam(params, cfg, chart.end)
        r = _r_from_mu(params, a * b, side)
        return np.log(a / b) / (2.0 * lam), r
    if chart is ChartId.TF_DEFINING:
        return log_f(params, b, cfg) - a, b
    raise ValueError(chart)


def _product_to_frame(chart: ChartId, t, r, params, cfg):
    if chart is ChartId.PRODUCT:
        return t, r
    m_ = mu(params, r)
    if chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS):
        lam = _lam(params, cfg, chart.end)
        return -2.0 * lam * t - np.log(m_), m_
    if chart in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        lam = _lam(params, cfg, chart.end)
        root = np.sqrt(m_)
        return root * np.exp(lam * t), root * np.exp(-lam * t)
    if chart is ChartId.TF_DEFINING:
        return log_f(params, r, cfg) - t, r
    raise ValueError(chart)


def _coords_to_frame(chart: ChartId, coords):
    a, b = coords
    if chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS, ChartId.TF_DEFINING):
        return np.log(a), b
    return a, b


def _frame_to_coords(chart: ChartId, a, b):
    if chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS, ChartId.TF_DEFINING):
        return np.exp(a), b
    return a, b


def _check_domain(chart: ChartId, coords, params, cfg, exc=OutsideOverlap):
    hz = _hz(params)
    a, b = (float(np.real(c)) for c in coords)
    C = cfg.C
    if chart is ChartId.PRODUCT:
        ok = hz.r_bh < b < hz.r_dS
    elif chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS):
        lam = _lam(params, cfg, chart.end)
        ok = a > 0 and 0 < b <= _mu_max(params) * (1 + 1e-12) and a * b < math.exp(-2 * lam * C)
    elif chart in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        ok = a > 0 and b > 0 and a * b <= _mu_max(params) * (1 + 1e-12)
    else:
        ok = a > 0 and hz.r_bh < b < hz.r_dS and a < math.exp(float(log_f(params, b, cfg)) - C)
    if not ok:
        raise exc(f"point {coords} is outside the {chart.value} chart ({'; '.join(chart.domain)})")


def _side_of(params, r) -> str:
    return "bh" if float(np.real(r)) < r_anchor(params, _hz(params)) else "dS"


def _to_product(p: ChartPoint):
    a, b = _coords_to_frame(p.chart, p.coords)
    return _frame_to_product(p.chart, a, b, p.params, p.side, p.config)


def to_chart(p: ChartPoint, target: ChartId | str) -> ChartPoint:
    """Coordinates of the event ``p`` in ``target``.

    ``blowup_bh <-> blowup_dS`` uses the direct transition
    ``rho_dS = mu^{lam_dS/lam_bh - 1} rho_bh^{lam_dS/lam_bh}``; every other
    pair goes through the product chart.

    Raises
    ------
    OutsideOverlap
        If ``p`` is outside its own chart or the event is not covered by ``target``.
    """
    target = ChartId(target)
    _check_domain(p.chart, p.coords, p.params, p.config)
    if {p.chart, target} == {ChartId.BLOWUP_BH, ChartId.BLOWUP_DS}:
        k = _lam(p.params, p.config, "dS") / _lam(p.params, p.config, "bh")
        if p.chart is ChartId.BLOWUP_DS:
            k = 1.0 / k
        rho, m_ = p.coords
        coords = (m_ ** (k - 1.0) * rho**k, m_)
        side = p.side
    else:
        t, r = _to_product(p)
        fa, fb = _product_to_frame(target, t, r, p.params, p.config)
        coords = _frame_to_coords(target, fa, fb)
        side = _side_of(p.params, r) if target.end is not None else None
        if target is ChartId.PRODUCT:
            side = None
    coords = tuple(float(c) if np.isrealobj(c) else c for c in coords)
    _check_domain(target, coords, p.params, p.config)
    return ChartPoint(target, coords, p.params, side, p.config)


# ---------------------------------------------------------------------------
# dual metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualMetricBlock:
    """Non-angular block of ``G`` plus the angular coefficient.

    ``matrix[i, j] = G(dq_i, dq_j)`` for the frame coordinates ``q`` listed
    in ``frame``; for blown-up charts ``q_0 = log rho`` so the entries are
    the coefficients against ``(rho d_rho, d_mu)``.
    """

    chart: ChartId
    frame: tuple[str, str]
    matrix: np.ndarray
    angular: float

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        """``(G_00, 2 G_01, G_11, angular)``: coefficients of the quadratic form."""
        M = self.matrix
        return float(M[0, 0]), float(2 * M[0, 1]), float(M[1, 1]), float(self.angular)

    def signature(self) -> tuple[int, int]:
        """(number of positive, number of negative) eigenvalues of the full 4x4 form."""
        ev = np.linalg.eigvalsh(self.matrix)
        pos = int(np.sum(ev > 0))
        neg = int(np.sum(ev < 0)) + (2 if self.angular < 0 else 0)
        return pos, neg

    def quad(self, covector) -> float:
        v = np.asarray(covector, dtype=float)
        return float(v @ self.matrix @ v)


def _other_roots(hz: Horizons, end: str):
    if end == "bh":
        return hz.r_dS, hz.r_neg
    return hz.r_bh, hz.r_neg


def gamma(params: SpacetimeParams, r, end: str = "bh", lam: float | None = None):
    """``mu^{-1} (lam^2 - beta^2)``; exact removable-singularity form when ``lam = kappa_end``.

    Accepts complex ``r``.
    """
    hz = _hz(params)
    r_h = hz.r_bh if end == "bh" else hz.r_dS
    kap = hz.kappa_bh if end == "bh" else hz.kappa_dS
    if lam is not None and not math.isclose(lam, kap, rel_tol=1e-14):
        m_ = mu(params, r)
        if np.any(m_ == 0):
            raise ChartDegenerate("gamma is singular at mu = 0 unless lambda equals the surface gravity")
        return (lam**2 - beta(params, r) ** 2) / m_
    m, L = params.m, params.Lambda
    b_h = beta(params, r_h)
    d_beta = -m * (r + r_h) / (r**2 * r_h**2) - L / 3.0
    o1, o2 = _other_roots(hz, end)
    d_mu = -(L / 3.0) * (r - o1) * (r - o2) / r
    return -(beta(params, r) + b_h) * d_beta / d_mu


def dual_metric(p: ChartPoint, frame: str | None = None) -> DualMetricBlock:
    """Dual metric ``G`` at ``p`` in the chart's frame.

    ``frame="T"`` (product chart only) returns the block against
    ``(d_T, d_r)`` with ``T = e^{-2 lam_bh t}``.

    Raises
    ------
    ChartDegenerate
        Product or ``tf_defining`` frame at ``mu <= 0``, or a blown-up chart
        at ``mu = 0`` with a non-canonical exponent.
    """
    params, cfg, chart = p.params, p.config, p.chart
    if chart is ChartId.PRODUCT:
        t, r = p.coords
        m_ = mu(params, r)
        if np.real(m_) <= 0:
            raise ChartDegenerate("the product frame degenerates at mu = 0")
        ang = -1.0 / r**2
        if frame == "T":
            lam = _lam(params, cfg, "bh")
            T = np.exp(-2 * lam * t)
            M = np.array([[4 * lam**2 * T**2 / m_, 0.0], [0.0, -m_]])
            return DualMetricBlock(chart, ("T", "r"), M, ang)
        return DualMetricBlock(chart, ("t", "r"), np.array([[1.0 / m_, 0.0], [0.0, -m_]]), ang)
    if chart in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS):
        rho, m_ = p.coords
        r = _r_from_mu(params, m_, p.side)
        lam = _lam(params, cfg, chart.end)
        if m_ == 0 and not _canonical(params, cfg, chart.end):
            raise ChartDegenerate("gamma is singular at mu = 0 unless lambda equals the surface gravity")
        bb = beta(params, r) ** 2
        g = gamma(params, r, chart.end, lam)
        M = np.array([[4 * g, 4 * bb], [4 * bb, -4 * bb * m_]])
        return DualMetricBlock(chart, ("log rho", "mu"), M, -1.0 / r**2)
    if chart in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        sp, sm = p.coords
        r = _r_from_mu(params, sp * sm, p.side)
        lam = _lam(params, cfg, chart.end)
        if sp * sm == 0 and not _canonical(params, cfg, chart.end):
            raise ChartDegenerate("gamma is singular at mu = 0 unless lambda equals the surface gravity")
        g = gamma(params, r, chart.end, lam)
        off = -(lam**2 + beta(params, r) ** 2)
        M = np.array([[g * sp**2, off], [off, g * sm**2]])
        return DualMetricBlock(chart, ("s_+", "s_-"), M, -1.0 / r**2)
    if chart is ChartId.TF_DEFINING:
        x, r = p.coords
        m_ = mu(params, r)
        if m_ <= 0:
            raise ChartDegenerate("the tf_defining frame needs mu > 0")
        dlf = np.imag(log_f(params, r + 1j * _H, cfg)) / _H
        M = np.array([[1.0 / m_ - m_ * dlf**2, -m_ * dlf], [-m_ * dlf, -m_]])
        return DualMetricBlock(chart, ("log x", "r"), M, -1.0 / r**2)
    raise ValueError(chart)


# ---------------------------------------------------------------------------
# pushforward check
# ---------------------------------------------------------------------------


@dataclass
class PushforwardReport:
    source: ChartId
    target: ChartId
    max_abs: float
    max_rel: float
    discrepancies: np.ndarray = field(repr=False)


def _jacobian(source: ChartId, target: ChartId, p: ChartPoint):
    """``d(target frame) / d(source frame)`` at ``p`` by complex step."""
    a0, b0 = _coords_to_frame(source, p.coords)
    J = np.empty((2, 2))
    for j, (da, db) in enumerate(((1j * _H, 0.0), (0.0, 1j * _H))):
        t, r = _frame_to_product(source, a0 + da, b0 + db, p.params, p.side, p.config)
        fa, fb = _product_to_frame(target, t, r, p.params, p.config)
        J[0, j] = np.imag(fa) / _H
        J[1, j] = np.imag(fb) / _H
    return J


def pushforward_check(source, target, samples) -> PushforwardReport:
    """Transport ``G`` from ``source`` by the Jacobian of the transition map.

    Each sample's source-frame block is pushed forward as ``J G J^T`` and
    compared with :func:`dual_metric` evaluated directly in ``target``.
    """
    source, target = ChartId(source), ChartId(target)
    disc = []
    rel = []
    for p in samples:
        if p.chart is not source:
            raise ValueError("sample is not in the source chart")
        q = to_chart(p, target)
        J = _jacobian(source, target, p)
        pushed = J @ dual_metric(p).matrix @ J.T
        direct = dual_metric(q).matrix
        d = float(np.max(np.abs(pushed - direct)))
        disc.append(d)
        rel.append(d / max(float(np.max(np.abs(direct))), 1e-300))
    disc = np.array(disc)
    return PushforwardReport(source, target, float(disc.max()), float(max(rel)), disc)


def rho_coefficient_limit(
    params: SpacetimeParams, cfg: ChartConfig = DEFAULT_CONFIG, levels: int = 9, mu0: float | None = None, t: float | None = None
):
    """Pushforward ``(rho d_rho)^2`` coefficient on ``mu_k = mu0 2^{-k}`` and its Richardson table.

    The coefficient is computed numerically (product chart -> ``blowup_bh``
    Jacobian), never from the closed form.  Returns ``(mu_k, c_k, table)``
    where ``table[k, j]`` is the ``j``-th Richardson extrapolant ending at
    level ``k``.
    """
    t = 2.0 * cfg.C if t is None else t
    mu0 = min(0.1, 0.5 * _mu_max(params)) if mu0 is None else mu0
    mus = mu0 * 2.0 ** (-np.arange(levels))
    cs = np.empty(levels)
    for k, mk in enumerate(mus):
        r = float(np.real(_r_from_mu(params, mk, "bh")))
        p = ChartPoint(ChartId.PRODUCT, (t, r), params, config=cfg)
        J = _jacobian(ChartId.PRODUCT, ChartId.BLOWUP_BH, p)
        cs[k] = (J @ dual_metric(p).matrix @ J.T)[0, 0]
    table = np.full((levels, levels), np.nan)
    table[:, 0] = cs
    for j in range(1, levels):
        for k in range(j, levels):
            table[k, j] = (2**j * table[k, j - 1] - table[k - 1, j - 1]) / (2**j - 1)
    return mus, cs, table


# ---------------------------------------------------------------------------
# Hamilton vector field in the b-cotangent bundle of blowup_bh
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CotangentPointB:
    """Point ``(rho, mu; xi, zeta, |eta|)`` with covector ``xi drho/rho + zeta dmu + eta domega``."""

    rho: float
    mu: float
    xi: float
    zeta: float
    eta: float
    params: SpacetimeParams
    side: str = "bh"


def _geom_b(params, m_, side):
    """``(beta, gamma, d gamma/d mu, d beta/d mu, d r^{-2}/d mu, r)`` at ``mu`` on branch ``side``."""
    r = _r_from_mu(params, m_, side)
    b = beta(params, r)
    g = gamma(params, r, side)
    dg_dr = np.imag(gamma(params, r + 1j * _H, side)) / _H
    db_dr = -2.0 * params.m / r**3 - params.Lambda / 3.0
    dmu_dr = 2.0 * b
    return b, g, dg_dr / dmu_dr, db_dr / dmu_dr, (-2.0 / r**3) / dmu_dr, r


def dual_metric_b(q: CotangentPointB) -> float:
    """``G = 4 gamma xi^2 + 8 beta^2 xi zeta - 4 beta^2 mu zeta^2 - r^{-2} |eta|^2``."""
    b, g, _, _, _, r = _geom_b(q.params, q.mu, q.side)
    return float(4 * g * q.xi**2 + 8 * b**2 * q.xi * q.zeta - 4 * b**2 * q.mu * q.zeta**2 - q.eta**2 / r**2)


def hamilton_field(q: CotangentPointB) -> dict:
    """Components of ``H_G`` at ``q`` (canonical exponent ``lam = kappa``).

    Returns a dict with ``rho_dot_over_rho``, ``mu_dot``, ``xi_dot``,
    ``zeta_dot``, ``eta_dot`` and ``angular_speed`` (``|omega_dot|`` on the unit sphere).
    """
    b, g, g_mu, b_mu, rm2_mu, r = _geom_b(q.params, q.mu, q.side)
    xi, ze, et, m_ = q.xi, q.zeta, q.eta, q.mu
    b2 = b * b
    return {
        "rho_dot_over_rho": float(8 * (g * xi + b2 * ze)),
        "mu_dot": float(-8 * b2 * (m_ * ze - xi)),
        "xi_dot": 0.0,
        "zeta_dot": float(-(4 * g_mu * xi**2 + 8 * b * b_mu * (2 * xi * ze - m_ * ze**2) - 4 * b2 * ze**2 - rm2_mu * et**2)),
        "eta_dot": 0.0,
        "angular_speed": float(2 * et / r**2),
    }


def hamilton_flow(q: CotangentPointB, h: float, n_steps: int) -> list[CotangentPointB]:
    """RK4 integration of ``H_G`` (in ``log rho``); returns the trajectory including ``q``."""

    def rhs(y):
        lr, m_, xi, ze, et = y
        f = hamilton_field(CotangentPointB(math.exp(lr), m_, xi, ze, et, q.params, q.side))
        return np.array([f["rho_dot_over_rho"], f["mu_dot"], 0.0, f["zeta_dot"], 0.0])

    y = np.array([math.log(q.rho), q.mu, q.xi, q.zeta, q.eta])
    out = [q]
    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(CotangentPointB(math.exp(y[0]), y[1], y[2], y[3], y[4], q.params, q.side))
    return out


# ---------------------------------------------------------------------------
# temporal-face defining function
# ---------------------------------------------------------------------------


def defining_function_x(p: ChartPoint) -> float:
    """``x = f(r) e^{-t}`` for a product-chart point with ``t > C``.

    Raises
    ------
    OutOfDomain
        If ``p`` is not a product-chart point in ``t > C``, ``r_bh < r < r_dS``.
    """
    if p.chart is not ChartId.PRODUCT:
        raise OutOfDomain("defining_function_x expects a product-chart point")
    t, r = p.coords
    hz = _hz(p.params)
    if not (t > p.config.C and hz.r_bh < r < hz.r_dS):
        raise OutOfDomain("x is defined for t > C inside the static region")
    return float(np.exp(log_f(p.params, r, p.config) - t))


# ---------------------------------------------------------------------------
# invariant battery
# ---------------------------------------------------------------------------


def _sample_product(params, cfg, rng, n, mu_range=(1e-3, None), side=None):
    lo, hi = mu_range
    hi = 0.9 * _mu_max(params) if hi is None else min(hi, 0.9 * _mu_max(params))
    pts = []
    for _ in range(n):
        m_ = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        s = side or ("bh" if rng.random() < 0.5 else "dS")
        r = float(np.real(_r_from_mu(params, m_, s)))
        t = cfg.C + rng.uniform(0.5, 20.0)
        pts.append(ChartPoint(ChartId.PRODUCT, (t, r), params, config=cfg))
    return pts


def verify_all(params: SpacetimeParams, cfg: ChartConfig = DEFAULT_CONFIG, seed: int = 0, n_samples: int = 100) -> dict:
    """Run the chart invariant battery; returns a JSON-serialisable report.

    Every entry carries ``value``, ``tol`` and ``passed``.
    """
    rng = np.random.default_rng(seed)
    hz = _hz(params)
    report: dict = {}

    def put(name, value, tol, passed=None):
        value = float(value)
        report[name] = {"value": value, "tol": tol, "passed": bool(value < tol if passed is None else passed)}

    # round trips through every chart
    samples = _sample_product(params, cfg, rng, n_samples)
    worst = 0.0
    for p in samples:
        for ch in ChartId:
            if ch is ChartId.PRODUCT:
                continue
            side = _side_of(params, p.coords[1])
            if ch.end is not None and ch.end != side:
                continue
            q = to_chart(to_chart(p, ch), ChartId.PRODUCT)
            worst = max(worst, abs(q.coords[0] - p.coords[0]) / abs(p.coords[0]), abs(q.coords[1] - p.coords[1]) / p.coords[1])
    put("round_trip_product", worst, 1e-10)

    # triple overlaps: product -> blowup -> blowdown -> product, and bh -> dS blowups directly
    worst = 0.0
    for p in samples:
        e = _side_of(params, p.coords[1])
        up = ChartId.BLOWUP_BH if e == "bh" else ChartId.BLOWUP_DS
        down = ChartId.BLOWDOWN_BH if e == "bh" else ChartId.BLOWDOWN_DS
        q = to_chart(to_chart(to_chart(p, up), down), ChartId.PRODUCT)
        worst = max(worst, abs(q.coords[0] - p.coords[0]) / abs(p.coords[0]), abs(q.coords[1] - p.coords[1]) / p.coords[1])
        try:
            a = to_chart(to_chart(p, ChartId.BLOWUP_BH), ChartId.BLOWUP_DS)
            b = to_chart(p, ChartId.BLOWUP_DS)
        except OutsideOverlap:
            continue
        worst = max(worst, abs(a.coords[0] - b.coords[0]) / b.coords[0])
    put("triple_overlap", worst, 1e-10)

    # cancellation with lam = kappa_bh and the negative control
    mus, cs, table = rho_coefficient_limit(params, cfg)
    diag = [abs(table[-1, j] - table[-2, j]) for j in range(1, len(mus) - 1)]
    put("cancellation_richardson", min(diag), 1e-6)
    report["cancellation_richardson"]["limit"] = float(table[-1, len(mus) - 2])
    report["cancellation_richardson"]["gamma0_times_4"] = float(4 * gamma(params, hz.r_bh, "bh"))
    bad = ChartConfig(cfg.C, cfg.r1_frac, cfg.r2_frac, 1.1 * hz.kappa_bh, cfg.lambda_dS)
    mus_b, cs_b, _ = rho_coefficient_limit(params, bad, levels=16)
    slope = float(np.polyfit(np.log(mus_b[-4:]), np.log(np.abs(cs_b[-4:])), 1)[0])
    put("negative_control_slope", slope, None, passed=abs(slope + 1.0) < 0.05)

    # pushforward checks
    pairs = [
        (ChartId.PRODUCT, ChartId.BLOWUP_BH, "bh"),
        (ChartId.PRODUCT, ChartId.BLOWUP_DS, "dS"),
        (ChartId.PRODUCT, ChartId.BLOWDOWN_BH, "bh"),
        (ChartId.PRODUCT, ChartId.BLOWDOWN_DS, "dS"),
        (ChartId.BLOWUP_BH, ChartId.BLOWDOWN_BH, "bh"),
        (ChartId.BLOWUP_DS, ChartId.BLOWDOWN_DS, "dS"),
        (ChartId.PRODUCT, ChartId.TF_DEFINING, None),
    ]
    for src, tgt, side in pairs:
        pts = _sample_product(params, cfg, rng, n_samples, (1e-3, 0.3 if side else None), side)
        if src is not ChartId.PRODUCT:
            pts = [to_chart(p, src) for p in pts]
        rep = pushforward_check(src, tgt, pts)
        put(f"pushforward_{src.value}_to_{tgt.value}", rep.max_rel, 1e-6)

    # signature on interior points of every chart
    ok = True
    for p in samples:
        for ch in ChartId:
            side = _side_of(params, p.coords[1])
            if ch.end is not None and ch.end != side:
                continue
            ok &= dual_metric(to_chart(p, ch)).signature() == (1, 3)
    put("lorentzian_signature", 0.0 if ok else 1.0, 0.5)

    # characteristic faces in blow-down coordinates, and d mu on mu = 0
    worst = 0.0
    ok = True
    try:
        for ch in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
            for s in np.exp(rng.uniform(-3, 3, 20)):
                for coords, cov in (((s, 0.0), (0.0, 1.0)), ((0.0, s), (1.0, 0.0))):
                    G = dual_metric(ChartPoint(ch, coords, params, config=cfg))
                    worst = max(worst, abs(G.quad(cov)))
        for ch in (ChartId.BLOWUP_BH, ChartId.BLOWUP_DS):
            for rho in np.exp(rng.uniform(-5, 2, 20)):
                G = dual_metric(ChartPoint(ch, (rho, 0.0), params, config=cfg))
                worst = max(worst, abs(G.quad((0.0, 1.0))))
                # the b-metric stays Lorentzian on the face
                ok &= G.signature() == (1, 3)
    except ChartDegenerate:
        # a non-canonical exponent has no smooth extension to the faces
        worst = math.inf
        ok = False
    # approach each face from the static region with a numerical Jacobian
    for ch in (ChartId.BLOWDOWN_BH, ChartId.BLOWDOWN_DS):
        lam = _lam(params, cfg, ch.end)
        for s_face in (1e-6, 1e-7, 1e-8):
            # mu = s_face and |t| chosen so the other coordinate is 1
            t = math.log(1.0 / s_face) / (2.0 * lam)
            r = float(np.real(_r_from_mu(params, s_face, ch.end)))
            for idx, tt in ((1, t), (0, -t)):
                p = ChartPoint(ChartId.PRODUCT, (tt, r), params, config=cfg)
                J = _jacobian(ChartId.PRODUCT, ch, p)
                worst = max(worst, abs((J @ dual_metric(p).matrix @ J.T)[idx, idx]))
    put("characteristic_faces", worst, 1e-10)
    put("face_signature", 0.0 if ok else 1.0, 0.5)

    # s+ s- = mu
    worst = 0.0
    for p in samples:
        ch = ChartId.BLOWDOWN_BH if _side_of(params, p.coords[1]) == "bh" else ChartId.BLOWDOWN_DS
        q = to_chart(p, ch)
        m_ = mu(params, p.coords[1])
        worst = max(worst, abs(q.coords[0] * q.coords[1] - m_) / m_)
    put("s_plus_s_minus_equals_mu", worst, 1e-13)

    # Hamilton field tangent to the conormal bundle of mu = 0
    f = hamilton_field(CotangentPointB(1.0, 0.0, 0.0, 1.0, 0.0, params))
    kb2 = hz.kappa_bh**2
    dev = max(abs(f["mu_dot"]), abs(f["rho_dot_over_rho"] - 8 * kb2) / kb2, abs(f["zeta_dot"] - 4 * kb2) / kb2)
    put("hamilton_tangent_conormal", dev, 1e-12)

    # defining function near the black-hole end
    worst = 0.0
    for p in _sample_product(params, cfg, rng, 20, (1e-6, 1e-3), "bh"):
        x = defining_function_x(p)
        rho = to_chart(p, ChartId.BLOWUP_BH).coords[0]
        worst = max(worst, abs(x ** (2 * _lam(params, cfg, "bh")) / rho - 1.0))
    put("defining_function_bh", worst, 1e-10)
    report["all_passed"] = all(v["passed"] for v in report.values() if isinstance(v, dict))
    return report
