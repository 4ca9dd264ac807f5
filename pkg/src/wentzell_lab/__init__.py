"""Gradient flows of anisotropic variable-exponent energies with dynamic
(Wentzell) boundary conditions on boxes, with property checks and the
constants of the associated ultracontractivity estimates."""

from .constants import BranchInputs, ConstantBundle, UnknownConstants, compute_bundle
from .energy import CoefficientField, WentzellEnergy
from .flow import FlowConfig, Trajectory, evolve, proximal_step
from .grid import BoundaryAtlas, BoxDomain, build_grid
from .varexp import ExponentField, PairFunction, VectorExponent, luxemburg_norm, pair_norm

__version__ = "0.1.0"

__all__ = [
    "BoundaryAtlas",
    "BoxDomain",
    "BranchInputs",
    "CoefficientField",
    "ConstantBundle",
    "ExponentField",
    "FlowConfig",
    "PairFunction",
    "Trajectory",
    "UnknownConstants",
    "VectorExponent",
    "WentzellEnergy",
    "build_grid",
    "compute_bundle",
    "evolve",
    "luxemburg_norm",
    "pair_norm",
    "proximal_step",
]
