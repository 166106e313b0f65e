"""Test images: the Shepp-Logan head phantom and seeded random phantoms.

The random phantoms are sums of ellipses with random positions, axes,
orientations and amplitudes, lightly smoothed, clamped non-negative and
supported inside the inscribed disk.  They are almost surely asymmetric,
which matters when checking angle recovery (a mirror-symmetric image makes
poses ambiguous beyond the global gauge).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import Image, derive_rng
from .radon import disk_support

# (amplitude, a, b, x0, y0, phi_degrees) on the [-1, 1]^2 square,
# modified (Toft) contrast so the interior stays non-negative.
_SHEPP_LOGAN = [
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]


def _render_ellipses(side, ellipses):
    c = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    x = (xx - c) / c
    y = (yy - c) / c
    out = np.zeros((side, side), dtype=np.float64)
    for amp, a, b, x0, y0, phi_deg in ellipses:
        phi = np.deg2rad(phi_deg)
        xr = (x - x0) * np.cos(phi) + (y - y0) * np.sin(phi)
        yr = -(x - x0) * np.sin(phi) + (y - y0) * np.cos(phi)
        out[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    return out


def shepp_logan(side=100) -> Image:
    """The classic head phantom at the requested resolution."""
    return Image(np.clip(_render_ellipses(side, _SHEPP_LOGAN), 0.0, None))


def random_phantom(side=100, seed=0, n_ellipses=None, smooth=0.8) -> Image:
    """Seeded random piecewise-smooth phantom inside the inscribed disk."""
    rng = derive_rng(seed, 90)
    n = int(n_ellipses) if n_ellipses is not None else int(rng.integers(6, 11))
    ellipses = []
    for _ in range(n):
        a = rng.uniform(0.08, 0.35)
        b = rng.uniform(0.08, 0.35)
        r_max = 0.88 - max(a, b)
        r = rng.uniform(0.0, max(r_max, 0.05))
        ang = rng.uniform(0.0, 2 * np.pi)
        x0, y0 = r * np.cos(ang), r * np.sin(ang)
        amp = rng.uniform(0.25, 1.0) * rng.choice([1.0, 1.0, 1.0, -0.5])
        phi = rng.uniform(0.0, 180.0)
        ellipses.append((amp, a, b, x0, y0, phi))
    img = _render_ellipses(side, ellipses)
    if smooth:
        img = gaussian_filter(img, sigma=smooth, mode="constant")
    img = np.clip(img, 0.0, None)
    img = np.where(disk_support(side), img, 0.0)
    if img.sum() <= 0:  # all-negative draw; retry with a shifted seed
        return random_phantom(side, seed + 104729, n_ellipses, smooth)
    return Image(img)


def alien_phantoms(side=100, seed=0, count=3) -> list[Image]:
    """Unrelated structures used as class-1 outlier sources."""
    return [random_phantom(side, seed=(seed * 1009 + 7919 * (i + 1)) % (2 ** 63)) for i in range(count)]
