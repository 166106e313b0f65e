"""Robust clustering of raw projections, outlier removal, and averaging.

Projections are clustered by plain vector proximity under the l_r
quasi-norm (r = 1 by default, so centroids are element-wise medians and
resistant to gross outliers).  Projections far from every centroid in the
l2 sense are then discarded as class-1 outliers, and each surviving
cluster is collapsed to the arithmetic mean of its remaining members.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .core import InvalidArgumentError, Projection, ProjectionSet, UnsupportedOperationError, derive_rng

DISCARDED = -1

_STREAM_KMEANS = 20


@dataclass(frozen=True)
class Clustering:
    """Assignments, centroids and discard flags for one projection set."""

    k: int
    assignments: np.ndarray       # cluster index per projection
    centroids: np.ndarray         # (k, L)
    discarded: np.ndarray         # bool per projection
    objective_trace: tuple = ()   # clustering objective per Lloyd round

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignments, dtype=np.int64)
        c = np.ascontiguousarray(self.centroids, dtype=np.float64)
        d = np.ascontiguousarray(self.discarded, dtype=bool)
        if c.shape[0] != self.k:
            raise InvalidArgumentError("centroid count must equal k")
        if a.shape != d.shape:
            raise InvalidArgumentError("assignments and discard flags must align")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise InvalidArgumentError("assignments must lie in [0, k)")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("centroids must be finite")
        for name, arr in (("assignments", a), ("centroids", c), ("discarded", d)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def discarded_count(self):
        return int(self.discarded.sum())


def _lr_distances(data, centroids, r):
    """Pairwise l_r quasi-norm distances, chunked to bound memory."""
    if r == 1.0:
        return cdist(data, centroids, "cityblock")
    out = np.empty((data.shape[0], centroids.shape[0]))
    chunk = max(1, int(2e7 // (centroids.shape[0] * data.shape[1])))
    for lo in range(0, data.shape[0], chunk):
        hi = min(lo + chunk, data.shape[0])
        diff = np.abs(data[lo:hi, None, :] - centroids[None, :, :]) ** r
        out[lo:hi] = diff.sum(axis=2) ** (1.0 / r)
    return out


def _kmeans_pp_init(data, k, rng):
    """k-means++ seeding under squared l2."""
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = data[first]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[j] = data[pick]
        d2 = np.minimum(d2, ((data - centroids[j]) ** 2).sum(axis=1))
    return centroids


def robust_kmeans(ps: ProjectionSet, k, r=1.0, iters=50, seed=0) -> Clustering:
    """Lloyd iterations with l_r assignment and median centroids (r = 1).

    The clustering objective (sum of member-to-centroid l_r distances) is
    non-increasing across rounds for r = 1; the per-round values are kept
    in ``objective_trace``.  Centroid updates for r < 1 are not supported;
    assignment under r < 1 is.
    """
    data = ps.data
    n = data.shape[0]
    if not (0.0 < r <= 1.0):
        raise InvalidArgumentError("r must lie in (0, 1]")
    if k < 1 or k > n:
        raise InvalidArgumentError(f"k must lie in [1, {n}], got {k}")
    if iters < 1:
        raise InvalidArgumentError("iters must be >= 1")

    rng = derive_rng(seed, _STREAM_KMEANS)
    centroids = _kmeans_pp_init(data, k, rng)
    assignments = np.zeros(n, dtype=np.int64)
    trace = []
    prev_obj = np.inf
    for _ in range(iters):
        dist = _lr_distances(data, centroids, r)
        new_assign = dist.argmin(axis=1)
        obj = float(dist[np.arange(n), new_assign].sum())

        # empty clusters: reseed to the point currently farthest from its
        # own centroid (changes nothing in the objective until reassignment)
        counts = np.bincount(new_assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            order = np.argsort(dist[np.arange(n), new_assign])[::-1]
            counts_mut = counts.copy()
            taken = np.zeros(n, dtype=bool)
            ptr = 0
            for e in empties:
                while ptr < n and (taken[order[ptr]] or counts_mut[new_assign[order[ptr]]] <= 1):
                    ptr += 1
                if ptr >= n:
                    break
                cand = order[ptr]
                centroids[e] = data[cand]
                taken[cand] = True
                counts_mut[new_assign[cand]] -= 1

        if obj > prev_obj + 1e-9 * max(prev_obj, 1.0):
            raise AssertionError("clustering objective increased across a Lloyd round")
        trace.append(obj)
        converged = np.array_equal(new_assign, assignments) and len(trace) > 1 and not empties.size
        assignments = new_assign
        if r == 1.0:
            for j in range(k):
                members = data[assignments == j]
                if members.shape[0]:
                    centroids[j] = np.median(members, axis=0)
        if converged:
            break
        prev_obj = obj

    return Clustering(k=k, assignments=assignments, centroids=centroids,
                      discarded=np.zeros(n, dtype=bool), objective_trace=tuple(trace))


def remove_class1(ps: ProjectionSet, c: Clustering, f_pct) -> Clustering:
    """Discard the f% of projections farthest (l2) from every centroid.

    Ties break deterministically toward the lower projection index.
    """
    if not (0.0 <= f_pct < 100.0):
        raise InvalidArgumentError("f_pct must lie in [0, 100)")
    n = ps.count
    n_drop = int(round(f_pct / 100.0 * n))
    if n_drop == 0:
        return replace(c, discarded=np.zeros(n, dtype=bool))
    d_min = cdist(ps.data, c.centroids, "euclidean").min(axis=1)
    # sort by (-distance, index): largest distance first, low index wins ties
    order = np.lexsort((np.arange(n), -d_min))
    discarded = np.zeros(n, dtype=bool)
    discarded[order[:n_drop]] = True
    return replace(c, discarded=discarded)


def average_clusters(ps: ProjectionSet, c: Clustering):
    """Mean of the surviving members of each cluster, as projections.

    Clusters whose members were all discarded are dropped (the effective
    cluster count shrinks); use :func:`cluster_members_summary` when the
    surviving counts or the kept cluster ids are needed too.
    """
    means, _, _ = cluster_members_summary(ps, c)
    return [Projection(row) for row in means]


def cluster_members_summary(ps: ProjectionSet, c: Clustering):
    """(means, kept_cluster_ids, surviving_counts) for non-empty clusters."""
    if c.assignments.shape[0] != ps.count:
        raise InvalidArgumentError("clustering does not match the projection set")
    keep = ~c.discarded
    means = []
    kept = []
    counts = []
    for j in range(c.k):
        sel = keep & (c.assignments == j)
        m = int(sel.sum())
        if m == 0:
            continue
        means.append(ps.data[sel].mean(axis=0))
        kept.append(j)
        counts.append(m)
    return np.array(means), np.array(kept, dtype=np.int64), np.array(counts, dtype=np.int64)


def _circular_mean_mod_pi(angles):
    z = np.exp(2j * angles)
    m = z.mean()
    if abs(m) < 1e-12:
        return 0.0
    return float(np.mod(np.angle(m) / 2.0, np.pi))


def cluster_truth_angle(ps: ProjectionSet, c: Clustering, j) -> float:
    """Circular mean (mod pi) of the surviving members' true angles."""
    if ps.truth is None:
        raise UnsupportedOperationError("projection set carries no ground truth")
    sel = (~c.discarded) & (c.assignments == j)
    if not sel.any():
        raise InvalidArgumentError(f"cluster {j} has no surviving members")
    return _circular_mean_mod_pi(ps.truth.angles[sel])


def cluster_truth_shift(ps: ProjectionSet, c: Clustering, j) -> float:
    """Mean true shift of the surviving members (shifts are linear)."""
    if ps.truth is None:
        raise UnsupportedOperationError("projection set carries no ground truth")
    sel = (~c.discarded) & (c.assignments == j)
    if not sel.any():
        raise InvalidArgumentError(f"cluster {j} has no surviving members")
    return float(ps.truth.shifts[sel].mean())
