"""Geometric moments, projection-moment consistency, and pose initialization.

The n-th moment of a projection is a degree-n trigonometric polynomial in
the view angle whose coefficients are image moments.  Summing the squared
mismatch between measured projection moments (after undoing the candidate
shift) and the polynomial prediction over all orders n <= k and all views
gives a joint energy in (angles, shifts, image moments).  Coordinate
descent with random multi-starts minimizes it and yields initial poses.

Detector coordinates are centered and rescaled to [-1, 1] before raising
to powers (rho_hat = (bin - c) / c with c = (L - 1) / 2), and the image
moments use matching rescaled x, y; without this the order-7 terms span
~14 decades on a 100-bin detector and destroy least-squares conditioning.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .core import Image, InvalidArgumentError, Pose, Projection, derive_rng
from .radon import disk_support, shift_bins


def moment_scale(L):
    """Half-width used to normalize detector and image coordinates."""
    return (L - 1) / 2.0


def _triangular_size(k):
    return (k + 1) * (k + 2) // 2


def _index_pairs(k):
    """(n, j) pairs in energy order: n = 0..k outer, j = 0..n inner."""
    return [(n, j) for n in range(k + 1) for j in range(n + 1)]


@dataclass(frozen=True)
class ImageMoments:
    """Triangular array of image moments v[p, q] for p + q <= order."""

    order: int
    v: np.ndarray  # (order+1, order+1), entries with p + q > order are zero

    def __post_init__(self):
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if v.shape != (self.order + 1, self.order + 1):
            raise InvalidArgumentError("moment array must be (order+1, order+1)")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("moments must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "v", v)

    def vector(self):
        """Flatten to the (n, j) -> v[n-j, j] ordering used by the solver."""
        return np.array([self.v[n - j, j] for n, j in _index_pairs(self.order)])

    @classmethod
    def from_vector(cls, order, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (_triangular_size(order),):
            raise InvalidArgumentError("wrong moment vector length")
        v = np.zeros((order + 1, order + 1))
        for idx, (n, j) in enumerate(_index_pairs(order)):
            v[n - j, j] = vec[idx]
        return cls(order, v)


@dataclass(frozen=True)
class ProjectionMoments:
    """Moments m[n] of one projection, n = 0..k, in normalized coordinates."""

    m: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.m, dtype=np.float64)
        if m.ndim != 1 or m.size < 1 or not np.all(np.isfinite(m)):
            raise InvalidArgumentError("projection moments must be a finite 1D vector")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @property
    def order(self):
        return self.m.size - 1


def _rho_powers(L, k):
    rho = (np.arange(L) - moment_scale(L)) / moment_scale(L)
    return np.vander(rho, k + 1, increasing=True).T  # (k+1, L)


def image_moments(img: Image, k=7) -> ImageMoments:
    """Moments of the disk-supported part of the image, orders p + q <= k."""
    if k < 0:
        raise InvalidArgumentError("moment order must be >= 0")
    side = img.side
    px = np.where(disk_support(side), img.pixels, 0.0)
    c = moment_scale(side)
    coords = (np.arange(side) - c) / c
    xp = np.vander(coords, k + 1, increasing=True)  # (side, k+1) powers of x (columns)
    yp = xp  # same grid in y (rows)
    v = np.zeros((k + 1, k + 1))
    for p in range(k + 1):
        for q in range(k + 1 - p):
            v[p, q] = float(yp[:, q] @ px @ xp[:, p])
    return ImageMoments(k, v)


def projection_moments(p: Projection | np.ndarray, reverse_shift=0.0, k=7) -> ProjectionMoments:
    """Moments of a projection after reverse-shifting by ``reverse_shift``.

    If ``reverse_shift`` equals the acquisition shift, these match the
    unshifted projection's moments up to interpolation error.
    """
    bins = p.bins if isinstance(p, Projection) else np.asarray(p, dtype=np.float64)
    if k < 0:
        raise InvalidArgumentError("moment order must be >= 0")
    shifted = shift_bins(bins, -float(reverse_shift)) if reverse_shift != 0.0 else bins
    return ProjectionMoments(_rho_powers(bins.size, k) @ shifted)


def hlcc_coefficients(angle, n):
    """Binomial-trigonometric weights tying image moments to order n."""
    if n < 0:
        raise InvalidArgumentError("moment order must be >= 0")
    j = np.arange(n + 1)
    return comb(n, j) * np.cos(angle) ** (n - j) * np.sin(angle) ** j


def hlcc_predict(moments: ImageMoments, angle, n):
    """Predicted n-th projection moment at the given angle."""
    if n > moments.order:
        raise InvalidArgumentError(f"order {n} exceeds available moments (k={moments.order})")
    coeffs = hlcc_coefficients(angle, n)
    vals = np.array([moments.v[n - j, j] for j in range(n + 1)])
    return float(coeffs @ vals)


def energy(poses, moments: ImageMoments, projections, k=None) -> float:
    """Exact consistency energy at the given poses and image moments."""
    if k is None:
        k = moments.order
    data = _as_matrix(projections)
    if len(poses) != data.shape[0]:
        raise InvalidArgumentError("one pose per projection required")
    total = 0.0
    for i, pose in enumerate(poses):
        m = projection_moments(data[i], reverse_shift=pose.shift, k=k).m
        for n in range(k + 1):
            total += (m[n] - hlcc_predict(moments, pose.angle, n)) ** 2
    return float(total)


def _as_matrix(projections):
    if isinstance(projections, np.ndarray):
        return np.atleast_2d(np.asarray(projections, dtype=np.float64))
    return np.vstack([p.bins if isinstance(p, Projection) else np.asarray(p, dtype=np.float64) for p in projections])


@dataclass(frozen=True)
class HlccSolution:
    poses: tuple
    moments: ImageMoments
    energy: float
    restarts_used: int
    sweeps: tuple = ()


# ---------------------------------------------------------------------------
# coordinate-descent solver


from functools import lru_cache


@lru_cache(maxsize=8)
def _comb_table(k):
    C = np.zeros((k + 1, k + 1))
    for n in range(k + 1):
        C[n, :n + 1] = comb(n, np.arange(n + 1))
    C.flags.writeable = False
    return C


class _PredEvaluator:
    """Predicted projection moments as a function of angle, for fixed v.

    The per-order weight vectors C(n, j) * v[n-j, j] only depend on the
    image moments, so they are precomputed once per coordinate block.
    """

    def __init__(self, vmat, k):
        C = _comb_table(k)
        self.k = k
        self.w = [C[n, :n + 1] * vmat[np.arange(n, -1, -1), np.arange(n + 1)] for n in range(k + 1)]

    def __call__(self, angles):
        angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
        k = self.k
        cosp = np.vander(np.cos(angles), k + 1, increasing=True)
        sinp = np.vander(np.sin(angles), k + 1, increasing=True)
        pred = np.empty((angles.size, k + 1))
        for n in range(k + 1):
            # sum_j C(n,j) cos^(n-j) sin^j v[n-j, j]
            pred[:, n] = (cosp[:, :n + 1][:, ::-1] * sinp[:, :n + 1]) @ self.w[n]
        return pred


def _predicted_moments_table(angles, vmat, k):
    """Predicted moments for every angle in ``angles``: (len(angles), k+1)."""
    return _PredEvaluator(vmat, k)(angles)


def _design_rows(angle, k):
    """One block of the least-squares matrix for the moment update."""
    rows = np.zeros((k + 1, _triangular_size(k)))
    idx = 0
    for n in range(k + 1):
        rows[n, idx:idx + n + 1] = hlcc_coefficients(angle, n)
        idx += n + 1
    return rows


def _solve_moments(angles, m_table, k):
    """Least-squares image moments given fixed poses (energy is quadratic)."""
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    K = angles.size
    T = _triangular_size(k)
    cosp = np.vander(np.cos(angles), k + 1, increasing=True)
    sinp = np.vander(np.sin(angles), k + 1, increasing=True)
    A = np.zeros((K, k + 1, T))
    idx = 0
    for n in range(k + 1):
        for j in range(n + 1):
            A[:, n, idx + j] = comb(n, j) * cosp[:, n - j] * sinp[:, j]
        idx += n + 1
    A = A.reshape(K * (k + 1), T)
    b = np.asarray(m_table, dtype=np.float64).reshape(-1)
    vec, *_ = np.linalg.lstsq(A, b, rcond=None)
    return ImageMoments.from_vector(k, vec), A, b


def _golden_vec(f, lo, hi, tol=1e-5, max_iter=60):
    """Lockstep golden-section minimization over per-element brackets.

    ``f`` maps a vector of positions (one per problem) to a vector of
    objective values.  Two evaluations per iteration keep every problem
    advancing in lockstep so the whole batch stays vectorized.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a = np.asarray(lo, dtype=np.float64).copy()
    b = np.asarray(hi, dtype=np.float64).copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a < tol):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
    take_c = fc < fd
    return np.where(take_c, c, d), np.where(take_c, fc, fd)


def _shift_rows(data, s):
    """Row-wise :func:`shift_bins` with a per-row shift amount."""
    K, L = data.shape
    t = np.arange(L, dtype=np.float64)[None, :] - np.asarray(s, dtype=np.float64)[:, None]
    inside = (t >= 0.0) & (t <= L - 1.0)
    t0 = np.clip(np.floor(t), 0, L - 2).astype(np.int64)
    frac = t - t0
    flat = np.ascontiguousarray(data).ravel()
    base = (np.arange(K) * L)[:, None] + t0
    p0 = flat[base]
    p1 = flat[base + 1]
    return np.where(inside, (1.0 - frac) * p0 + frac * p1, 0.0)


class _RowShifter:
    """Fast repeated row-wise shifting against a fixed signal matrix.

    Exploits that the integer and fractional parts of a shift are constant
    along a row: one zero-padded copy of the data up front, then each call
    is two flat gathers and a blend.  Matches :func:`_shift_rows` on the
    interior; bins sampled outside the detector are zero either way.
    """

    def __init__(self, data, margin):
        self.K, self.L = data.shape
        self.M = int(np.ceil(margin)) + 2
        self.padded = np.zeros((self.K, self.L + 2 * self.M))
        self.padded[:, self.M:self.M + self.L] = data
        self.flat = self.padded.ravel()
        self.row_base = (np.arange(self.K) * (self.L + 2 * self.M))[:, None] + np.arange(self.L)[None, :]
        self.j = np.arange(self.L, dtype=np.float64)[None, :]

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        m = np.floor(-s)
        f = (-s - m)[:, None]
        base = self.row_base + (self.M + m.astype(np.int64))[:, None]
        p0 = self.flat[base]
        p1 = self.flat[base + 1]
        out = (1.0 - f) * p0 + f * p1
        inside = (self.j >= s[:, None]) & (self.j <= (self.L - 1) + s[:, None])
        return np.where(inside, out, 0.0)


class _RestartState:
    """All per-restart buffers for one coordinate-descent run.

    Angles are searched strictly inside [0, pi): the consistency energy is
    2*pi-periodic in the view angle (odd moments flip sign across pi), so
    brackets are clamped rather than wrapped.
    """

    def __init__(self, data, k, max_shift, rng, angle_grid_deg=1.0, shift_grid=0.25):
        self.data = data
        self.K, self.L = data.shape
        self.k = k
        self.max_shift = float(max_shift)
        self.rho_pow = _rho_powers(self.L, k)
        self.shifter = _RowShifter(data, self.max_shift)
        self.angles = rng.uniform(0.0, np.pi, self.K)
        if self.max_shift > 0:
            self.shifts = rng.uniform(-self.max_shift, self.max_shift, self.K)
        else:
            self.shifts = np.zeros(self.K)
        self.m_cur = self._moments_vec(self.shifts)
        self.angle_grid = np.deg2rad(np.arange(0.0, 180.0, angle_grid_deg))
        self.shift_step = float(shift_grid)
        if self.max_shift > 0:
            self.shift_grid = np.arange(-self.max_shift, self.max_shift + 1e-12, shift_grid)
            # static: the grid moments never change across sweeps
            self.m_grid = np.stack(
                [self._moments_vec(np.full(self.K, s)) for s in self.shift_grid], axis=1
            )  # (K, n_s, k+1)
        else:
            self.shift_grid = np.zeros(1)
            self.m_grid = None

    def _moments_vec(self, svec):
        """Moments of every projection reverse-shifted by its own svec[i]."""
        shifted = self.shifter(-np.asarray(svec, dtype=np.float64))
        return shifted @ self.rho_pow.T  # (K, k+1)

    def total_energy(self):
        pred = self.evaluator(self.angles)
        return float(((self.m_cur - pred) ** 2).sum())

    def _set_v(self, vmat):
        self.vmat = vmat
        self.evaluator = _PredEvaluator(vmat, self.k)

    def update_moments(self):
        """Exact quadratic minimization over v; keeps the old v on a tie.

        Normal equations are used for speed; if floating-point conditioning
        ever produced a worse energy than the incumbent v, the incumbent is
        kept, so the update can never increase the energy.
        """
        C = _comb_table(self.k)
        cosp = np.vander(np.cos(self.angles), self.k + 1, increasing=True)
        sinp = np.vander(np.sin(self.angles), self.k + 1, increasing=True)
        T = _triangular_size(self.k)
        A = np.zeros((self.K, self.k + 1, T))
        idx = 0
        for n in range(self.k + 1):
            for j in range(n + 1):
                A[:, n, idx + j] = C[n, j] * cosp[:, n - j] * sinp[:, j]
            idx += n + 1
        A = A.reshape(self.K * (self.k + 1), T)
        b = self.m_cur.reshape(-1)
        try:
            vec = np.linalg.solve(A.T @ A, A.T @ b)
        except np.linalg.LinAlgError:
            vec, *_ = np.linalg.lstsq(A, b, rcond=None)
        moments = ImageMoments.from_vector(self.k, vec)
        if hasattr(self, "vmat"):
            e_old = self.total_energy()
            old = self.vmat
            self._set_v(moments.v)
            if self.total_energy() > e_old:
                self._set_v(old)
                return ImageMoments(self.k, old)
        else:
            self._set_v(moments.v)
        return moments

    def pose_sweep(self):
        """Angle then shift refinement for every projection; never worsens.

        Each 1D search combines a coarse grid with golden-section
        refinement, and the incumbent value always competes, so the
        per-projection residual (hence the total energy) cannot increase.
        """
        K = self.K
        rows = np.arange(K)
        pred_of = self.evaluator

        # ----- angle block -----
        pred_grid = pred_of(self.angle_grid)  # (G, k+1)
        obj_grid = ((self.m_cur[:, None, :] - pred_grid[None, :, :]) ** 2).sum(-1)
        g = obj_grid.argmin(axis=1)
        step = self.angle_grid[1] - self.angle_grid[0]
        lo = np.maximum(self.angle_grid[g] - step, 0.0)
        hi = np.minimum(self.angle_grid[g] + step, np.pi - 1e-9)

        def f_angle(avec):
            return ((pred_of(avec) - self.m_cur) ** 2).sum(-1)

        a_gold, f_gold = _golden_vec(f_angle, lo, hi, tol=1e-6)
        cand_a = np.stack([self.angles, self.angle_grid[g], a_gold])
        cand_f = np.stack([f_angle(self.angles), obj_grid[rows, g], f_gold])
        self.angles = cand_a[cand_f.argmin(axis=0), rows]

        # ----- shift block -----
        if self.max_shift > 0:
            pred_cur = pred_of(self.angles)  # (K, k+1)
            obj_s = ((self.m_grid - pred_cur[:, None, :]) ** 2).sum(-1)  # (K, n_s)
            gs = obj_s.argmin(axis=1)
            lo = np.maximum(self.shift_grid[gs] - self.shift_step, -self.max_shift)
            hi = np.minimum(self.shift_grid[gs] + self.shift_step, self.max_shift)

            def f_shift(svec):
                return ((self._moments_vec(svec) - pred_cur) ** 2).sum(-1)

            s_gold, fs_gold = _golden_vec(f_shift, lo, hi, tol=1e-4)
            cand_s = np.stack([self.shifts, self.shift_grid[gs], s_gold])
            cand_fs = np.stack([((self.m_cur - pred_cur) ** 2).sum(-1), obj_s[rows, gs], fs_gold])
            pick = cand_fs.argmin(axis=0)
            new_shifts = cand_s[pick, rows]
            m_new = self._moments_vec(new_shifts)
            m_new[pick == 0] = self.m_cur[pick == 0]
            m_new[pick == 1] = self.m_grid[rows, gs][pick == 1]
            self.shifts = new_shifts
            self.m_cur = m_new


def _run_restart(data, k, max_shift, seed, restart_idx, max_sweeps, tol):
    rng = derive_rng(seed, 40, restart_idx)
    st = _RestartState(data, k, max_shift, rng)
    st.update_moments()
    e_prev = st.total_energy()
    energies = [e_prev]
    sweeps = 0
    for sweep in range(max_sweeps):
        moments = st.update_moments()
        e_mid = st.total_energy()
        if e_mid > e_prev + 1e-9 * max(e_prev, 1.0):
            raise AssertionError("moment update increased the consistency energy")
        st.pose_sweep()
        e_new = st.total_energy()
        if e_new > e_mid + 1e-9 * max(e_mid, 1.0):
            raise AssertionError("pose sweep increased the consistency energy")
        energies.append(e_new)
        sweeps = sweep + 1
        if e_prev - e_new < tol * max(e_prev, 1e-30):
            e_prev = e_new
            break
        e_prev = e_new
    # final moment polish so the reported energy is consistent with the poses
    moments = st.update_moments()
    e_final = st.total_energy()
    poses = tuple(Pose(a, s) for a, s in zip(st.angles, st.shifts))
    return e_final, poses, moments, sweeps, energies


def solve(projections, k=7, restarts=10, seed=0, max_shift=0.0,
          max_sweeps=200, tol=1e-9, workers=1) -> HlccSolution:
    """Multi-start coordinate descent on the consistency energy.

    Each restart draws random poses (angles uniform on [0, pi), shifts
    uniform on [-max_shift, max_shift]), alternates a closed-form moment
    update with per-projection angle/shift refinement until the energy
    decrease stalls, and the lowest-energy restart wins (ties break toward
    the lower restart index).  Restarts are independent, so running them
    on a thread pool gives bit-identical results regardless of pool size.
    """
    if restarts < 1:
        raise InvalidArgumentError("restarts must be >= 1")
    if k < 1:
        raise InvalidArgumentError("moment order k must be >= 1")
    data = _as_matrix(projections)
    if data.shape[0] < k + 1:
        raise InvalidArgumentError(
            f"need at least k + 1 = {k + 1} projections to determine order-{k} moments, got {data.shape[0]}")

    def job(r):
        return _run_restart(data, k, max_shift, seed, r, max_sweeps, tol)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(restarts)))
    else:
        results = [job(r) for r in range(restarts)]

    best_idx = min(range(restarts), key=lambda r: (results[r][0], r))
    e_best, poses, moments, sweeps, _ = results[best_idx]
    # report the exact public energy at the returned variables
    e_exact = energy(poses, moments, data, k)
    return HlccSolution(poses=poses, moments=moments, energy=e_exact,
                        restarts_used=restarts, sweeps=tuple(r[3] for r in results))
