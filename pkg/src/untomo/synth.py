"""Synthetic dataset generation: angles, shifts, noise and outliers.

Produces the corrupted projection sets used in the experiments: projections
of the object at random angles drawn from a configurable segment mixture,
with a fraction of class-1 outliers (projections of unrelated structures),
a fraction of class-2 outliers (projections of the object with a few pixels
zeroed), random sub-bin detector shifts, and white Gaussian noise whose
standard deviation is a percentage of the mean noiseless bin value.
Hidden ground truth (angle, shift, outlier class) rides along for
evaluation only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Image,
    InvalidArgumentError,
    OutlierClass,
    PoseTruth,
    ProjectionSet,
    derive_rng,
)
from .radon import disk_support, project_angles, shift_bins

# sub-stream keys (master seed, key, ...) so that toggling one corruption
# never perturbs the draws of another
_STREAM_ANGLES = 1
_STREAM_LABELS = 2
_STREAM_ALIEN = 3
_STREAM_CLASS2 = 4
_STREAM_SHIFTS = 5
_STREAM_NOISE = 6


@dataclass(frozen=True)
class AngleDistribution:
    """Mixture of uniform angle segments on [0, pi]."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((float(lo), float(hi), float(w)) for lo, hi, w in self.segments)
        if not segs:
            raise InvalidArgumentError("angle distribution needs at least one segment")
        for lo, hi, w in segs:
            if not (0.0 <= lo < hi <= np.pi + 1e-12):
                raise InvalidArgumentError(f"segment ({lo}, {hi}) must satisfy 0 <= lo < hi <= pi")
            if w < 0 or not np.isfinite(w):
                raise InvalidArgumentError("segment weights must be non-negative and finite")
        if sum(w for _, _, w in segs) <= 0:
            raise InvalidArgumentError("segment weights must not all be zero")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def uniform(cls):
        return cls(((0.0, np.pi, 1.0),))

    @classmethod
    def parse(cls, text):
        """Parse "lo:hi:w,lo:hi:w,..." (radians) into a distribution."""
        segs = []
        for part in text.split(","):
            lo, hi, w = (float(tok) for tok in part.split(":"))
            segs.append((lo, hi, w))
        return cls(tuple(segs))

    @classmethod
    def four_segment(cls):
        """The non-uniform benchmark mixture of four equal-weight bands."""
        return cls((
            (0.0, np.pi / 9, 1.0),
            (2 * np.pi / 9, np.pi / 3, 1.0),
            (4 * np.pi / 9, 2 * np.pi / 3, 1.0),
            (7 * np.pi / 9, 8 * np.pi / 9, 1.0),
        ))


@dataclass(frozen=True)
class CorruptionConfig:
    """Noise and outlier settings, all as percentages of the dataset."""

    noise_pct: float = 0.0
    f1_pct: float = 0.0      # class-1 outliers: projections of alien images
    f2_pct: float = 0.0      # class-2 outliers: object with pixels zeroed
    f3_pct: float = 10.0     # % of pixels zeroed in each class-2 source
    max_shift: float = 0.0   # bins, shifts are Uniform(-max_shift, max_shift)
    alien_images: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.noise_pct < 0:
            raise InvalidArgumentError("noise_pct must be >= 0")
        if self.f1_pct < 0 or self.f2_pct < 0 or self.f1_pct + self.f2_pct > 100:
            raise InvalidArgumentError("outlier fractions must be >= 0 and sum to <= 100")
        if not (0.0 <= self.f3_pct <= 100.0):
            raise InvalidArgumentError("f3_pct must lie in [0, 100]")
        if self.max_shift < 0:
            raise InvalidArgumentError("max_shift must be >= 0")
        object.__setattr__(self, "alien_images", tuple(self.alien_images))


def sample_angles(count, dist: AngleDistribution, seed):
    """Draw ``count`` angles: segment by weight, then uniform within it."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    rng = derive_rng(seed, _STREAM_ANGLES)
    lo = np.array([s[0] for s in dist.segments])
    hi = np.array([s[1] for s in dist.segments])
    w = np.array([s[2] for s in dist.segments])
    idx = rng.choice(len(dist.segments), size=count, p=w / w.sum())
    u = rng.uniform(0.0, 1.0, size=count)
    angles = lo[idx] + u * (hi - lo)[idx]
    return np.mod(angles, np.pi)


def _scaled_to_mass(alien: Image, target_mass, side):
    px = np.where(disk_support(side), alien.pixels, 0.0)
    mass = px.sum()
    if mass <= 0:
        raise InvalidArgumentError("alien image must have positive mass inside the disk")
    return px * (target_mass / mass)


def generate_dataset(img: Image, count, dist: AngleDistribution,
                     corrupt: CorruptionConfig, seed) -> ProjectionSet:
    """Simulate a full corrupted dataset with hidden ground truth.

    The exact class counts are round(count * f / 100); noise sigma is
    noise_pct / 100 times the grand mean over all bins of the noiseless
    (but shifted) dataset, and is added i.i.d. to every bin.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    side = img.side
    if corrupt.max_shift > side / 4.0:
        raise InvalidArgumentError("max_shift exceeds the L/4 shift bound")
    n1 = int(round(count * corrupt.f1_pct / 100.0))
    n2 = int(round(count * corrupt.f2_pct / 100.0))
    if n1 + n2 > count:
        raise InvalidArgumentError("outlier fractions exceed the dataset size")
    if n1 > 0 and not corrupt.alien_images:
        raise InvalidArgumentError("class-1 outliers requested but no alien images supplied")

    angles = sample_angles(count, dist, seed)

    # which projections are outliers; positions are a seeded permutation
    perm = derive_rng(seed, _STREAM_LABELS).permutation(count)
    classes = np.zeros(count, dtype=np.int8)
    classes[perm[:n1]] = int(OutlierClass.CLASS1)
    classes[perm[n1:n1 + n2]] = int(OutlierClass.CLASS2)

    base = np.where(disk_support(side), img.pixels, 0.0)
    target_mass = base.sum()

    data = np.empty((count, side), dtype=np.float64)
    inlier_idx = np.flatnonzero(classes == int(OutlierClass.NONE))
    if inlier_idx.size:
        data[inlier_idx] = project_angles(base, angles[inlier_idx])

    c1_idx = np.flatnonzero(classes == int(OutlierClass.CLASS1))
    if c1_idx.size:
        rng_alien = derive_rng(seed, _STREAM_ALIEN)
        scaled = [_scaled_to_mass(a, target_mass, side) for a in corrupt.alien_images]
        pick = rng_alien.integers(0, len(scaled), size=c1_idx.size)
        for which in range(len(scaled)):
            sel = c1_idx[pick == which]
            if sel.size:
                data[sel] = project_angles(scaled[which], angles[sel])

    c2_idx = np.flatnonzero(classes == int(OutlierClass.CLASS2))
    if c2_idx.size:
        rng_c2 = derive_rng(seed, _STREAM_CLASS2)
        n_zero = int(round(corrupt.f3_pct / 100.0 * side * side))
        for i in c2_idx:
            corrupted = img.pixels.copy()
            kill = rng_c2.choice(side * side, size=n_zero, replace=False)
            corrupted.flat[kill] = 0.0
            data[i] = project_angles(corrupted, angles[i])[0]

    if corrupt.max_shift > 0:
        shifts = derive_rng(seed, _STREAM_SHIFTS).uniform(-corrupt.max_shift, corrupt.max_shift, count)
        for i in range(count):
            data[i] = shift_bins(data[i], shifts[i])
    else:
        shifts = np.zeros(count)

    if corrupt.noise_pct > 0:
        sigma = corrupt.noise_pct / 100.0 * data.mean()
        data = data + sigma * derive_rng(seed, _STREAM_NOISE).standard_normal(data.shape)

    truth = PoseTruth(angles=angles, shifts=shifts, outlier_class=classes)
    return ProjectionSet(data=data, truth=truth)


def dataset_noise_sigma(img: Image, count, dist, corrupt: CorruptionConfig, seed):
    """The sigma that generate_dataset used (regenerates the clean data)."""
    if corrupt.noise_pct == 0:
        return 0.0
    from dataclasses import replace
    clean = generate_dataset(img, count, dist, replace(corrupt, noise_pct=0.0), seed)
    return corrupt.noise_pct / 100.0 * clean.data.mean()
