"""Tomographic reconstruction from projections at unknown angles and shifts."""

from .core import (
    Image,
    InvalidArgumentError,
    OutlierClass,
    Pose,
    PoseTruth,
    Projection,
    ProjectionSet,
    RngSeed,
    UnsupportedOperationError,
    canonicalize_angle,
    derive_rng,
)

__all__ = [
    "Image",
    "InvalidArgumentError",
    "OutlierClass",
    "Pose",
    "PoseTruth",
    "Projection",
    "ProjectionSet",
    "RngSeed",
    "UnsupportedOperationError",
    "canonicalize_angle",
    "derive_rng",
]

__version__ = "0.1.0"
