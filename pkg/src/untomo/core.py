"""Shared domain types, angle arithmetic and deterministic RNG derivation.

Every stage of the pipeline works on the same few objects: a square
``Image``, 1D ``Projection`` vectors grouped into a ``ProjectionSet``
(optionally carrying hidden ground truth for evaluation), and per-projection
``Pose`` estimates.  All arrays are float64; all types are immutable after
construction and safe to share between parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedOperationError(RuntimeError):
    """The operation needs data (e.g. ground truth) that is not present."""


def canonicalize_angle(a):
    """Reduce an angle (radians) to the canonical interval [0, pi).

    A parallel-beam projection at ``theta + pi`` is the bin-reversed
    projection at ``theta``, so poses live on [0, pi).  Idempotent.
    """
    a = float(a)
    if not np.isfinite(a):
        raise InvalidArgumentError(f"angle must be finite, got {a!r}")
    out = float(np.mod(a, np.pi))
    # np.mod can return pi itself when a is a tiny negative number.
    if out >= np.pi:
        out -= np.pi
    return out


def _as_readonly(arr, dtype=np.float64):
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Image:
    """Square grid of real intensities (row-major, arbitrary units)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = _as_readonly(self.pixels)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise InvalidArgumentError(f"image must be square 2D, got shape {px.shape}")
        if px.shape[0] < 2:
            raise InvalidArgumentError("image side must be >= 2")
        if not np.all(np.isfinite(px)):
            raise InvalidArgumentError("image pixels must all be finite")
        object.__setattr__(self, "pixels", px)

    @property
    def side(self):
        return self.pixels.shape[0]

    @property
    def mass(self):
        return float(self.pixels.sum())


@dataclass(frozen=True)
class Projection:
    """1D vector of line integrals (one detector read-out)."""

    bins: np.ndarray

    def __post_init__(self):
        b = _as_readonly(self.bins)
        if b.ndim != 1 or b.shape[0] < 1:
            raise InvalidArgumentError(f"projection must be a non-empty 1D vector, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise InvalidArgumentError("projection bins must all be finite")
        object.__setattr__(self, "bins", b)

    def __len__(self):
        return self.bins.shape[0]


class OutlierClass(IntEnum):
    NONE = 0
    CLASS1 = 1
    CLASS2 = 2


@dataclass(frozen=True)
class PoseTruth:
    """Hidden per-projection ground truth retained by the synthesizer."""

    angles: np.ndarray      # radians in [0, pi)
    shifts: np.ndarray      # detector bins
    outlier_class: np.ndarray  # OutlierClass values, int8

    def __post_init__(self):
        ang = _as_readonly(self.angles)
        sh = _as_readonly(self.shifts)
        oc = _as_readonly(self.outlier_class, dtype=np.int8)
        if not (ang.shape == sh.shape == oc.shape) or ang.ndim != 1:
            raise InvalidArgumentError("truth arrays must be 1D and of equal length")
        if ang.size and (ang.min() < 0 or ang.max() >= np.pi):
            raise InvalidArgumentError("truth angles must lie in [0, pi)")
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "shifts", sh)
        object.__setattr__(self, "outlier_class", oc)

    def __len__(self):
        return self.angles.shape[0]


@dataclass(frozen=True)
class ProjectionSet:
    """A stack of projections with a common detector length.

    ``data`` is the (count, L) matrix of bins; ``truth`` is optional and, if
    present, has exactly one record per projection.
    """

    data: np.ndarray
    truth: PoseTruth | None = None

    def __post_init__(self):
        d = _as_readonly(self.data)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise InvalidArgumentError(f"projection set must be a non-empty 2D array, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidArgumentError("projection set must be finite")
        if self.truth is not None and len(self.truth) != d.shape[0]:
            raise InvalidArgumentError("truth must have exactly one record per projection")
        object.__setattr__(self, "data", d)

    @property
    def count(self):
        return self.data.shape[0]

    @property
    def length(self):
        return self.data.shape[1]

    def projection(self, i):
        return Projection(self.data[i])

    def __len__(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class Pose:
    """(angle, shift) acquisition parameters of one projection.

    The angle is canonicalized to [0, pi); the shift is in detector-bin
    units and uses the same sign convention as the synthesizer (a pose
    shift of ``s`` means the projection content sits ``s`` bins off
    center, and is undone by reverse-shifting by ``s``).
    """

    angle: float
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "angle", canonicalize_angle(self.angle))
        s = float(self.shift)
        if not np.isfinite(s):
            raise InvalidArgumentError("pose shift must be finite")
        object.__setattr__(self, "shift", s)


@dataclass(frozen=True)
class RngSeed:
    """64-bit master seed; all randomness in a run derives from it."""

    seed: int

    def __post_init__(self):
        s = int(self.seed)
        if not (0 <= s < 2 ** 64):
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", s)


def _coerce_seed(seed) -> int:
    if isinstance(seed, RngSeed):
        return seed.seed
    return RngSeed(int(seed)).seed


def derive_rng(seed, *stream) -> np.random.Generator:
    """Deterministic child generator for (master seed, stream key).

    Parallel and serial runs agree bit-for-bit as long as every task
    derives its own generator from the master seed and its task key,
    instead of sharing one stream.
    """
    key = tuple(int(k) for k in stream)
    return np.random.default_rng(np.random.SeedSequence(entropy=_coerce_seed(seed), spawn_key=key))
