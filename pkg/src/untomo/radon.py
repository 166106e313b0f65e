"""Discrete parallel-beam Radon transform, detector shifts, and FBP.

Conventions used throughout the package:

* pixel (i, j) sits at x = j - c, y = i - c with c = (side - 1) / 2;
* a projection at angle ``theta`` integrates the image along the lines
  rho = x * cos(theta) + y * sin(theta), one detector bin per integer rho,
  so the detector length L equals the image side and rho = 0 is the
  central bin;
* the forward projector is pixel driven: rotate the image by ``-theta``
  with bilinear interpolation about the center, then sum columns;
* image support is assumed inside the inscribed disk; pixels outside it
  are zeroed before projection so no mass can leave the detector under
  rotation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Image, InvalidArgumentError, Pose, Projection, ProjectionSet

_FILTER_KINDS = ("ram_lak", "shepp_logan")


@dataclass(frozen=True)
class FbpFilter:
    """Reconstruction filter: kind plus cutoff as a fraction of Nyquist."""

    kind: str = "ram_lak"
    cutoff: float = 1.0

    def __post_init__(self):
        if self.kind not in _FILTER_KINDS:
            raise InvalidArgumentError(f"unknown filter kind {self.kind!r}; expected one of {_FILTER_KINDS}")
        if not (0.0 < self.cutoff <= 1.0):
            raise InvalidArgumentError("filter cutoff must lie in (0, 1]")


@lru_cache(maxsize=32)
def _disk_mask(side):
    c = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    mask = (yy - c) ** 2 + (xx - c) ** 2 <= c ** 2 + 1e-9
    mask.flags.writeable = False
    return mask


def disk_support(side):
    """Boolean mask of the inscribed disk (the assumed image support)."""
    return _disk_mask(side)


@lru_cache(maxsize=32)
def _pixel_coords(side):
    c = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    u = (xx - c).astype(np.float64).ravel()
    v = (yy - c).astype(np.float64).ravel()
    u.flags.writeable = False
    v.flags.writeable = False
    return u, v


def _gather_bilinear(img, rows, cols):
    """Sample ``img`` at fractional (row, col) locations, zero outside."""
    side = img.shape[0]
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros(rows.shape, dtype=np.float64)
    for dr, dc, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        ok = (rr >= 0) & (rr < side) & (cc >= 0) & (cc < side)
        out[ok] += w[ok] * img[rr[ok], cc[ok]]
    return out


def _scatter_bilinear(values, rows, cols, side):
    """Exact transpose of :func:`_gather_bilinear` (splat accumulation)."""
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    acc = np.zeros(side * side, dtype=np.float64)
    for dr, dc, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        ok = (rr >= 0) & (rr < side) & (cc >= 0) & (cc < side)
        idx = rr[ok] * side + cc[ok]
        acc += np.bincount(idx, weights=w[ok] * values[ok], minlength=side * side)
    return acc.reshape(side, side)


def _rotated_sample_coords(side, angle):
    # Output pixel (i, j) of the image rotated by -angle samples the input
    # at x = u cos - v sin, y = u sin + v cos with u = j - c, v = i - c.
    u, v = _pixel_coords(side)
    c = (side - 1) / 2.0
    ca, sa = np.cos(angle), np.sin(angle)
    rows = u * sa + v * ca + c
    cols = u * ca - v * sa + c
    return rows, cols


def project_angles(pixels, angles):
    """Forward-project a pixel array at many angles at once.

    Parameters
    ----------
    pixels : ndarray, shape (side, side)
    angles : array_like of radians

    Returns
    -------
    ndarray, shape (len(angles), side)
        One projection per row.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    side = pixels.shape[0]
    masked = np.where(_disk_mask(side), pixels, 0.0)
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    out = np.empty((angles.size, side), dtype=np.float64)
    for k, a in enumerate(angles):
        rows, cols = _rotated_sample_coords(side, a)
        rot = _gather_bilinear(masked, rows, cols).reshape(side, side)
        out[k] = rot.sum(axis=0)
    return out


def forward_project(img: Image, angle) -> Projection:
    """Line integrals of ``img`` along direction ``angle`` (L = side bins)."""
    if not np.isfinite(angle):
        raise InvalidArgumentError("projection angle must be finite")
    return Projection(project_angles(img.pixels, float(angle))[0])


def backproject_angles(sino, angles, side, weights=None):
    """Weighted sum of exact per-view adjoints of :func:`project_angles`.

    This is the unfiltered adjoint: for any image A and sinogram B,
    ``<project_angles(A), B> == <A, backproject_angles(B)>`` up to
    rounding.  Used by adjointness tests and gradient-based updates.
    """
    sino = np.atleast_2d(np.asarray(sino, dtype=np.float64))
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    if sino.shape[0] != angles.size:
        raise InvalidArgumentError("one angle per projection required")
    if weights is None:
        weights = np.ones(angles.size)
    acc = np.zeros((side, side), dtype=np.float64)
    for k, a in enumerate(angles):
        rows, cols = _rotated_sample_coords(side, a)
        # adjoint of column summation: broadcast bins along the v axis
        vals = np.tile(sino[k], (side, 1)).ravel()
        acc += weights[k] * _scatter_bilinear(vals, rows, cols, side)
    return np.where(_disk_mask(side), acc, 0.0)


def backproject(sino: ProjectionSet, angles, side, weights=None) -> Image:
    """Typed wrapper over :func:`backproject_angles`."""
    data = sino.data if isinstance(sino, ProjectionSet) else np.asarray(sino)
    return Image(backproject_angles(data, angles, side, weights))


def shift_bins(bins, s):
    """Translate a 1D signal by ``s`` bins with linear interpolation.

    Content moves toward larger indices for s > 0; bins shifted in from
    outside the detector are zero.
    """
    bins = np.asarray(bins, dtype=np.float64)
    L = bins.shape[0]
    if abs(s) > L / 4.0:
        raise InvalidArgumentError(f"|shift| = {abs(s)} exceeds the L/4 = {L / 4} safety bound")
    if s == 0.0:
        return bins.copy()
    grid = np.arange(L, dtype=np.float64)
    return np.interp(grid - s, grid, bins, left=0.0, right=0.0)


def shift_projection(p: Projection, s) -> Projection:
    if not np.isfinite(s):
        raise InvalidArgumentError("shift must be finite")
    return Projection(shift_bins(p.bins, float(s)))


def _real_space_kernel(n):
    # Band-limited ramp: inverse DFT of |nu| on [-1/2, 1/2] at unit spacing.
    kernel = np.zeros(n, dtype=np.float64)
    kernel[0] = 0.25
    odd = np.arange(1, n // 2 + 1, 2)
    kernel[odd] = -1.0 / (np.pi * odd) ** 2
    kernel[-odd] = -1.0 / (np.pi * odd) ** 2
    return kernel


def filter_frequency_response(n_pad, filt: FbpFilter):
    """Non-negative frequency response of the reconstruction filter."""
    resp = np.fft.rfft(_real_space_kernel(n_pad)).real
    freqs = np.fft.rfftfreq(n_pad)  # cycles per bin, Nyquist = 0.5
    if filt.kind == "shepp_logan":
        # Ram-Lak tapered by a sinc over the pass band.
        with np.errstate(invalid="ignore", divide="ignore"):
            taper = np.sinc(freqs)
        resp = resp * taper
    resp[freqs > 0.5 * filt.cutoff + 1e-12] = 0.0
    return resp


def filter_sinogram(sino, filt: FbpFilter):
    """Apply the ramp filter row-wise with zero padding to >= 2L."""
    sino = np.atleast_2d(np.asarray(sino, dtype=np.float64))
    L = sino.shape[1]
    n_pad = 1 << int(np.ceil(np.log2(2 * L)))
    resp = filter_frequency_response(n_pad, filt)
    spec = np.fft.rfft(sino, n=n_pad, axis=1)
    filtered = np.fft.irfft(spec * resp[None, :], n=n_pad, axis=1)
    return filtered[:, :L]


def view_weights(angles):
    """Angular Voronoi gaps modulo pi; they always sum to pi.

    Equispaced angles get the familiar pi/N each; views that bunch up
    share their angular measure, which keeps FBP sensible when the pose
    estimates are non-uniform.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    n = angles.size
    if n == 1:
        return np.array([np.pi])
    order = np.argsort(angles, kind="stable")
    a = np.mod(angles[order], np.pi)
    gaps = np.diff(a, append=a[0] + np.pi)  # wrap-around gap
    w = np.empty(n)
    w[order] = 0.5 * (gaps + np.roll(gaps, 1))
    return w


def fbp_reconstruct(sino, poses, filt: FbpFilter | None = None, side=None, weighting="voronoi") -> Image:
    """Filtered backprojection at the given poses.

    Each projection is reverse-shifted by its pose shift, ramp filtered in
    the frequency domain, and backprojected pixel-driven along its pose
    angle.  ``weighting`` is either "voronoi" (angular gaps, default) or
    "uniform" (pi/N per view).
    """
    data = sino.data if isinstance(sino, ProjectionSet) else np.atleast_2d(np.asarray(sino, dtype=np.float64))
    if data.shape[0] == 0:
        raise InvalidArgumentError("cannot reconstruct from an empty projection set")
    angles = np.array([p.angle for p in poses]) if isinstance(poses[0], Pose) else np.asarray(poses, dtype=np.float64)
    shifts = np.array([p.shift for p in poses]) if isinstance(poses[0], Pose) else np.zeros(angles.size)
    if angles.size != data.shape[0]:
        raise InvalidArgumentError("poses length must equal the projection count")
    if side is None:
        side = data.shape[1]
    if filt is None:
        filt = FbpFilter()

    corrected = np.empty_like(data)
    for i in range(data.shape[0]):
        corrected[i] = shift_bins(data[i], -shifts[i]) if shifts[i] != 0.0 else data[i]
    filtered = filter_sinogram(corrected, filt)

    if weighting == "voronoi":
        w = view_weights(angles)
    elif weighting == "uniform":
        w = np.full(angles.size, np.pi / angles.size)
    else:
        raise InvalidArgumentError(f"unknown weighting {weighting!r}")

    # Pixel-driven BP: interpolate each filtered view at rho = x cos + y sin.
    u, v = _pixel_coords(side)
    c_det = (data.shape[1] - 1) / 2.0
    grid = np.arange(data.shape[1], dtype=np.float64)
    acc = np.zeros(side * side, dtype=np.float64)
    for i in range(angles.size):
        rho = u * np.cos(angles[i]) + v * np.sin(angles[i]) + c_det
        acc += w[i] * np.interp(rho, grid, filtered[i], left=0.0, right=0.0)
    out = acc.reshape(side, side)
    return Image(np.where(_disk_mask(side), out, 0.0))
