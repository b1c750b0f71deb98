"""Exact simulation and statistical verification of a zero-temperature
linear Boltzmann jump process for a tracer slowed down by quantum friction."""

__version__ = "0.1.0"

from .constants import Constants, RateFunction, closed_form_constants
from .errors import (
    DomainError,
    FrictionWalkError,
    InsufficientData,
    InsufficientTail,
    OutOfRange,
    ResourceLimit,
    ZeroMomentum,
)
from .kernel import PhysParams
from .rng import RandomStream
from .simulate import SkeletonPath, Trajectory, run_ensemble, simulate_skeleton, simulate_trajectory

__all__ = [
    "Constants",
    "DomainError",
    "FrictionWalkError",
    "InsufficientData",
    "InsufficientTail",
    "OutOfRange",
    "PhysParams",
    "RandomStream",
    "RateFunction",
    "ResourceLimit",
    "SkeletonPath",
    "Trajectory",
    "ZeroMomentum",
    "closed_form_constants",
    "run_ensemble",
    "simulate_skeleton",
    "simulate_trajectory",
]
