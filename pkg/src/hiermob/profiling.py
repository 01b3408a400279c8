"""User profiling: zone-time vectors, k-means and elbow selection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hierarchy import RegionSpec
from .sessions import Session, visits

MAX_ITER = 300
TOL = 1e-9


def session_vector(session: Session, region: RegionSpec) -> np.ndarray:
    """Fraction of the session spent in each zone of ``region``.

    Raises
    ------
    ValueError
        For zero-length sessions, which have no time to distribute.
    """
    if session.duration <= 0:
        raise ValueError(f"session of {session.user_id} at {session.start} has zero duration")
    vec = np.zeros(region.n_zones)
    for zone, dwell in visits(session):
        vec[region.zone_labels.index(zone)] += dwell
    return vec / session.duration


def session_vectors(sessions: Sequence[Session], region: RegionSpec) -> np.ndarray:
    if not sessions:
        return np.zeros((0, region.n_zones))
    return np.vstack([session_vector(s, region) for s in sessions])


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    distortion: float
    history: list = field(default_factory=list, repr=False)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def _sq_dists(X: np.ndarray, C: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * X @ C.T + np.einsum("ij,ij->i", C, C)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _distortion(X, C, labels, w) -> float:
    diff = X - C[labels]
    return float(w @ np.einsum("ij,ij->i", diff, diff) / w.sum())


def _weighted_means(X, labels, w, k):
    """Per-cluster weighted sums and total weights."""
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    nonempty = counts > 0
    if nonempty.any():
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[nonempty]
        sums[nonempty] = np.add.reduceat((X * w[:, None])[order], starts, axis=0)
    return sums, np.bincount(labels, weights=w, minlength=k), counts


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator, x_sq: np.ndarray,
              w: np.ndarray) -> np.ndarray:
    n = len(X)
    first = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
    centers = [min(first, n - 1)]
    closest = _sq_dists(X, X[centers], x_sq)[:, 0]
    for _ in range(1, k):
        score = w * closest
        total = score.sum()
        if total <= 0:
            # Remaining points coincide with chosen centers; pick any unused one.
            cand = np.setdiff1d(np.arange(n), centers)
            nxt = int(cand[rng.integers(len(cand))])
        else:
            nxt = int(np.searchsorted(np.cumsum(score), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(X, X[[nxt]], x_sq)[:, 0])
    return X[centers].astype(float, copy=True)


def _lloyd(X, C, x_sq, w, max_iter=MAX_ITER, tol=TOL):
    k = len(C)
    history = []
    labels = None
    rows = np.arange(len(X))
    for _ in range(max_iter):
        d = _sq_dists(X, C, x_sq)
        labels = d.argmin(axis=1)
        point_d = d[rows, labels]
        history.append(float(w @ point_d / w.sum()))
        sums, mass, counts = _weighted_means(X, labels, w, k)
        nonempty = counts > 0
        new_c = sums
        new_c[nonempty] /= mass[nonempty, None]
        if not nonempty.all():
            # Reseed each empty centroid at the point worst served by its own
            # centroid, one point per empty cluster.
            taken = np.zeros(len(X), dtype=bool)
            for j in np.flatnonzero(~nonempty):
                cand = np.where(taken, -1.0, point_d)
                p = int(cand.argmax())
                taken[p] = True
                new_c[j] = X[p]
        shift = float(np.abs(new_c - C).max())
        C = new_c
        if shift < tol and nonempty.all():
            break
    d = _sq_dists(X, C, x_sq)
    labels = d.argmin(axis=1)
    return C, labels, history


class _Points:
    """Distinct rows of a vector set with their multiplicities.

    k-means on the distinct rows weighted by multiplicity minimizes the same
    objective as on the raw rows, and session vectors repeat a lot (every
    single-zone session is a one-hot row).
    """

    def __init__(self, vectors):
        X = np.asarray(vectors, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("need a non-empty 2-D array of vectors")
        self.raw = X
        self.X, self.inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
        self.inverse = self.inverse.reshape(-1)
        self.w = counts.astype(float)
        self.x_sq = np.einsum("ij,ij->i", self.X, self.X)

    @property
    def n_distinct(self) -> int:
        return len(self.X)


def kmeans(vectors, k: int, seed: int = 0, restarts: int = 10,
           init: Optional[Sequence[np.ndarray]] = None,
           max_iter: int = MAX_ITER, tol: float = TOL) -> Clustering:
    """Best-of-``restarts`` k-means with k-means++ seeding.

    Parameters
    ----------
    vectors : array_like, shape (n, d)
    k : int
        Must not exceed the number of distinct rows.
    seed : int
        Restart ``r`` draws from ``SeedSequence(seed).spawn(restarts)[r]``,
        so results are reproducible bit for bit.
    init : sequence of arrays, optional
        Extra starting centroid sets tried in addition to the seeded restarts.

    Returns
    -------
    Clustering
        With no empty cluster; ``distortion`` is the mean squared distance of
        the points to their centroid.
    """
    pts = vectors if isinstance(vectors, _Points) else _Points(vectors)
    if not 1 <= k <= pts.n_distinct:
        raise ValueError(f"k={k} must be between 1 and the number of distinct vectors ({pts.n_distinct})")
    X, w, x_sq = pts.X, pts.w, pts.x_sq
    starts = [np.array(c, dtype=float) for c in (init or ())]
    for ss in np.random.SeedSequence(seed).spawn(restarts):
        starts.append(_kmeanspp(X, k, np.random.default_rng(ss), x_sq, w))
    best = None
    for C0 in starts:
        C, labels, history = _lloyd(X, C0, x_sq, w, max_iter, tol)
        labels = _fill_empty(X, C, labels)
        sums, mass, _ = _weighted_means(X, labels, w, k)
        C = sums / mass[:, None]
        dist = _distortion(X, C, labels, w)
        if best is None or dist < best[3]:
            best = (C, labels, history, dist)
    C, labels, history, dist = best
    return Clustering(k, C, labels[pts.inverse], dist, history)


def _fill_empty(X, C, labels):
    # Guarantee every cluster owns at least one distinct point; with
    # k <= distinct vectors this always terminates.
    k = len(C)
    labels = labels.copy()
    for _ in range(k):
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if not len(empty):
            break
        d = np.einsum("ij,ij->i", X - C[labels], X - C[labels])
        movable = counts[labels] > 1
        d[~movable] = -1.0
        labels[int(d.argmax())] = empty[0]
    return labels


@dataclass
class ElbowCurve:
    ks: np.ndarray
    distortions: np.ndarray
    k_star: int

    @property
    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.ks.tolist(), self.distortions.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("k", "distortion"))
        for k, d in self.points:
            writer.writerow((k, repr(d)))
        return buf.getvalue()


def knee_point(ks: np.ndarray, distortions: np.ndarray) -> int:
    """Point of the curve farthest from the chord joining its end points.

    Both axes are scaled to [0, 1] first so the answer does not depend on
    the units of the distortion.
    """
    ks = np.asarray(ks, dtype=float)
    d = np.asarray(distortions, dtype=float)
    if len(ks) == 1 or d[0] == d[-1]:
        return int(ks[0])
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    y = (d - d[-1]) / (d[0] - d[-1])
    # chord runs from (0, 1) to (1, 0); a convex curve sits below it and the
    # distance of (x, y) to the chord is proportional to 1 - x - y
    gap = 1.0 - x - y
    if gap.max() <= 1e-12:  # straight line or concave: no knee
        return int(ks[0])
    return int(ks[int(np.argmax(gap))])


def elbow(vectors, k_max: int = 30, seed: int = 0, restarts: int = 10) -> ElbowCurve:
    """Distortion for k = 1..k_max and the knee of that curve.

    ``k_max`` is capped at the number of distinct vectors. Each k also tries
    the previous solution plus one centroid at the worst-served point, which
    keeps the curve non-increasing.
    """
    if k_max < 3:
        raise ValueError("k_max must be at least 3")
    pts = _Points(vectors)
    X = pts.raw
    k_top = min(k_max, pts.n_distinct)
    ks, ds = [], []
    prev = None
    for k in range(1, k_top + 1):
        init = None
        if prev is not None:
            worst = np.einsum("ij,ij->i", X - prev.centroids[prev.labels], X - prev.centroids[prev.labels])
            init = [np.vstack([prev.centroids, X[int(worst.argmax())]])]
        prev = kmeans(pts, k, seed=seed + k, restarts=restarts, init=init)
        ks.append(k)
        ds.append(prev.distortion)
    ks_a, ds_a = np.array(ks), np.array(ds)
    if k_top >= 3:
        k_star = knee_point(ks_a, ds_a)
    else:
        k_star = k_top if ds_a[-1] < ds_a[0] else 1
    return ElbowCurve(ks_a, ds_a, k_star)
