"""Session identification, threshold selection and handoff filtering."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hierarchy import RegionId, RegionSpec
from .ingest import SampleStore

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(range(1, 61))


@dataclass(frozen=True)
class Session:
    user_id: str
    region: RegionId
    entries: tuple  # of (timestamp, zone_label)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("session without entries")

    @property
    def start(self) -> int:
        return self.entries[0][0]

    @property
    def end(self) -> int:
        return self.entries[-1][0]

    @property
    def duration(self) -> int:
        return self.end - self.start

    def __len__(self) -> int:
        return len(self.entries)


class _RegionScan:
    """Per-sample quantities of a store relative to one region.

    Everything the splitter needs that does not depend on the threshold:
    which samples fall inside the region, whether the previous sample of the
    same user was also inside, and the gap to it.
    """

    def __init__(self, store: SampleStore, region: RegionSpec):
        ap_zone = np.array([region.zone_index(ap) for ap in store.ap_ids], dtype=np.int64)
        self.zone = ap_zone[store.ap_codes] if len(store) else np.zeros(0, dtype=np.int64)
        inside = self.zone >= 0
        same_user = np.zeros(len(store), dtype=bool)
        same_user[1:] = store.user_codes[1:] == store.user_codes[:-1]
        prev_inside = np.zeros(len(store), dtype=bool)
        prev_inside[1:] = inside[:-1]
        gap = np.zeros(len(store), dtype=np.int64)
        gap[1:] = np.diff(store.timestamps)

        self.idx = np.flatnonzero(inside)
        # A run of in-region samples is broken by a new user or an excursion
        # outside the region, regardless of the threshold.
        self.forced = ~(same_user & prev_inside)[self.idx]
        self.gap = gap[self.idx]
        self.store = store
        self.region = region

    def starts(self, threshold: Optional[float]) -> np.ndarray:
        """Boolean mask over in-region samples marking session starts."""
        if threshold is None or math.isinf(threshold):
            return self.forced.copy()
        # A silence of at least `threshold` minutes ends the session.
        return self.forced | (self.gap >= threshold * 60.0)

    def metrics(self, threshold: Optional[float]) -> tuple[int, float]:
        new = self.starts(threshold)
        n = int(new.sum())
        if n == 0:
            return 0, 0.0
        total = float(self.gap[~new].sum())
        return n, total / n


def _check_threshold(threshold):
    if threshold is not None and not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")


def split_sessions(store: SampleStore, region: RegionSpec, threshold: Optional[float]) -> list[Session]:
    """Cut each user's in-region samples into sessions.

    A session ends when the user is seen at an AP outside ``region`` or when
    the silence before the next sample reaches ``threshold`` minutes. Passing
    ``threshold=None`` (or ``inf``) disables the gap rule. Entries are
    ``(timestamp, zone_label)`` pairs, not yet handoff-filtered.
    """
    _check_threshold(threshold)
    scan = _RegionScan(store, region)
    return _sessions_from_scan(scan, scan.starts(threshold))


def _sessions_from_scan(scan: _RegionScan, new: np.ndarray) -> list[Session]:
    if not len(scan.idx):
        return []
    store, labels = scan.store, scan.region.zone_labels
    ts = store.timestamps[scan.idx].tolist()
    zones = scan.zone[scan.idx].tolist()
    users = store.user_codes[scan.idx].tolist()
    bounds = np.flatnonzero(new).tolist() + [len(scan.idx)]
    rid = scan.region.id
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        entries = tuple((ts[i], labels[zones[i]]) for i in range(a, b))
        out.append(Session(store.user_ids[users[a]], rid, entries))
    return out


@dataclass
class ThresholdSweepResult:
    thresholds: np.ndarray
    n_sessions: np.ndarray
    avg_session_time: np.ndarray
    distance: np.ndarray
    chosen: float

    @property
    def rows(self) -> list[tuple]:
        return list(zip(self.thresholds.tolist(), self.n_sessions.tolist(),
                        self.avg_session_time.tolist(), self.distance.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("threshold", "n_sessions", "avg_time_s", "distance"))
        for t, n, avg, d in self.rows:
            writer.writerow((t, n, repr(avg), repr(d)))
        return buf.getvalue()


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x, dtype=float)
    return (x - lo) / (hi - lo)


def threshold_distance(n_sessions: np.ndarray, avg_time: np.ndarray) -> np.ndarray:
    """Distance of each (count, mean length) point from the origin after
    min-max scaling both series over the grid."""
    return np.hypot(_minmax(np.asarray(n_sessions, float)), _minmax(np.asarray(avg_time, float)))


def sweep_threshold(store: SampleStore, region: RegionSpec,
                    grid: Sequence[float] = DEFAULT_GRID) -> ThresholdSweepResult:
    """Evaluate session count and mean session length over a threshold grid.

    The chosen threshold minimizes :func:`threshold_distance`; ties go to the
    smaller threshold.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty threshold grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("threshold grid must be positive and strictly increasing")
    scan = _RegionScan(store, region)
    n = np.empty(grid.size, dtype=np.int64)
    avg = np.empty(grid.size, dtype=float)
    for i, t in enumerate(grid):
        n[i], avg[i] = scan.metrics(t)
    if grid.size == 1:
        logger.warning("threshold grid has a single value; normalization is degenerate")
    dist = threshold_distance(n, avg)
    chosen = grid[int(np.argmin(dist))]
    chosen = int(chosen) if float(chosen).is_integer() else float(chosen)
    return ThresholdSweepResult(grid, n, avg, dist, chosen)


def filter_handoffs(session: Session) -> Session:
    """Keep the first entry, the first entry of every zone run, and the last.

    The last entry may repeat the zone of the one before it; it marks the
    moment the user was last seen.
    """
    entries = session.entries
    if len(entries) <= 2:
        return session
    kept = [entries[0]]
    for prev, cur in zip(entries[:-1], entries[1:-1]):
        if cur[1] != prev[1]:
            kept.append(cur)
    kept.append(entries[-1])
    return Session(session.user_id, session.region, tuple(kept))


def visits(session: Session) -> list[tuple[str, int]]:
    """``(zone, dwell_seconds)`` for each zone visit of a handoff trace.

    A zone holds the interval until the next entry. A final entry that only
    repeats the preceding zone closes that visit instead of opening a new one;
    a final entry in a new zone is a visit of zero length.
    """
    entries = session.entries
    out: list[tuple[str, int]] = []
    for i, (t, zone) in enumerate(entries):
        nxt = entries[i + 1][0] if i + 1 < len(entries) else t
        if out and out[-1][0] == zone:
            out[-1] = (zone, out[-1][1] + (nxt - t))
        else:
            out.append((zone, nxt - t))
    return out
