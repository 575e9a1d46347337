"""Random Cantor-type cube measures, their Fourier transforms, and L_p norm checks."""

from .checks import CheckResult
from .config import ConfigError, RunConfig
from .fourier import Spectrum, envelope, expected_envelope, expected_mu_hat, lambda0_hat, mu_hat
from .measure import Construction, CubeMeasure, ShiftSample, construct, select_omega
from .quadrature import (
    NonConvergenceError,
    NormReport,
    QuadratureSpec,
    deviation_expectation,
    fit_powerlaw,
    lp_power_integral,
)
from .tree import BranchingSequence, GeometryError, Tree, build_tree

__version__ = "0.1.0"

__all__ = [
    "BranchingSequence",
    "CheckResult",
    "ConfigError",
    "Construction",
    "CubeMeasure",
    "GeometryError",
    "NonConvergenceError",
    "NormReport",
    "QuadratureSpec",
    "RunConfig",
    "ShiftSample",
    "Spectrum",
    "Tree",
    "build_tree",
    "construct",
    "deviation_expectation",
    "envelope",
    "expected_envelope",
    "expected_mu_hat",
    "fit_powerlaw",
    "lambda0_hat",
    "lp_power_integral",
    "mu_hat",
    "select_omega",
]
