"""Monte Carlo Laplace solvers for media perforated by Poisson Boolean model particles."""

from .boundary import ConstantBC, CosProduct, GaussianShell, LinearBC, SplitCos
from .density import Constant, DensityField, GaussianSum, GaussianTerm, TrilinearGrid
from .geometry import Box, MediumShape, Sphere, TriangleSoup, ball_medium, box_medium
from .memory import Memory, MemoryMode
from .pbm import ParticleConfiguration, sample_configuration
from .solvers import (
    DIRICHLET,
    NEUMANN,
    Estimate,
    PbmParams,
    Problem,
    SolverConfig,
    ensemble_average,
    estimate,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Constant",
    "ConstantBC",
    "CosProduct",
    "DIRICHLET",
    "DensityField",
    "Estimate",
    "GaussianShell",
    "GaussianSum",
    "GaussianTerm",
    "LinearBC",
    "MediumShape",
    "Memory",
    "MemoryMode",
    "NEUMANN",
    "ParticleConfiguration",
    "PbmParams",
    "Problem",
    "SolverConfig",
    "Sphere",
    "SplitCos",
    "TriangleSoup",
    "TrilinearGrid",
    "ball_medium",
    "box_medium",
    "ensemble_average",
    "estimate",
    "sample_configuration",
]
