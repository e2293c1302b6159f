"""
Scalar waves on de Sitter-Schwarzschild space.

Modules
-------
geometry     metric function, horizons, tortoise coordinate, radial grids
charts       compactification charts, dual metric, invariant battery
modes        effective potentials and spherical-harmonic projection
evolve       leapfrog evolution of single channels and mode sums
resolvent    stationary solves, Jost solutions, resonances, residue at zero
asymptotics  tail fits, uniformity in r, Mellin transform and reconstruction
cli          scenario runner (``dsswave`` console script)
"""

from .errors import (
    CFLViolation,
    ChartDegenerate,
    ContourOutsideAnalyticity,
    ContourThroughZero,
    DSSWaveError,
    ExtremalOrInvalidParams,
    FitUnstable,
    NearResonance,
    NoConvergence,
    NonFiniteDetected,
    NumericalError,
    OutOfDomain,
    OutsideOverlap,
    QuadratureUnderResolved,
    ResidueMismatch,
    SeriesDivergence,
    ValidationError,
    WindowTooShort,
)
from .geometry import Horizons, RadialGrid, SpacetimeParams, horizons, mu, radial_grid, tortoise, tortoise_inverse

__version__ = "0.1.0"

__all__ = [
    "CFLViolation",
    "ChartDegenerate",
    "ContourOutsideAnalyticity",
    "ContourThroughZero",
    "DSSWaveError",
    "ExtremalOrInvalidParams",
    "FitUnstable",
    "NearResonance",
    "NoConvergence",
    "NonFiniteDetected",
    "NumericalError",
    "OutOfDomain",
    "OutsideOverlap",
    "QuadratureUnderResolved",
    "ResidueMismatch",
    "SeriesDivergence",
    "ValidationError",
    "WindowTooShort",
    "Horizons",
    "RadialGrid",
    "SpacetimeParams",
    "horizons",
    "mu",
    "radial_grid",
    "tortoise",
    "tortoise_inverse",
]
