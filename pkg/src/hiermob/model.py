"""Per-cluster transition matrices, stay-time vectors and the model document.

State layout of every matrix is ``[IN, OUT, zone_1, ..., zone_n]``. Row IN
holds the entry distribution, column OUT the exit probabilities, row OUT and
column IN are zero.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hierarchy import RegionId, RegionSpec
from .ingest import SampleStore
from .profiling import ElbowCurve, Clustering, elbow, kmeans, session_vectors
from .sessions import (DEFAULT_GRID, Session, ThresholdSweepResult, filter_handoffs,
                       split_sessions, sweep_threshold, visits)

logger = logging.getLogger(__name__)

IN, OUT = 0, 1
IN_LABEL, OUT_LABEL = "IN", "OUT"
ROW_TOL = 1e-6
POPULARITY_TOL = 1e-9


class ModelSchemaError(ValueError):
    """A model document or matrix breaks one of the model invariants."""


class DataError(ValueError):
    """The input data cannot support a model (for example, no sessions)."""


def state_labels(zone_labels: Sequence[str]) -> list[str]:
    return [IN_LABEL, OUT_LABEL, *zone_labels]


def check_transition_matrix(a, labels: Optional[Sequence[str]] = None, tol: float = ROW_TOL) -> None:
    """Raise :class:`ModelSchemaError` unless ``a`` is a valid transition matrix."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    labels = list(labels) if labels is not None else [str(i) for i in range(n)]
    if a.ndim != 2 or a.shape != (n, n) or n < 3:
        raise ModelSchemaError(f"matrix must be square with at least 3 states, got shape {a.shape}")
    if len(labels) != n:
        raise ModelSchemaError(f"{len(labels)} state labels for a {n}x{n} matrix")
    if not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 1:
        bad = np.argwhere(~np.isfinite(a) | (a < 0) | (a > 1))[0]
        raise ModelSchemaError(f"entry {labels[bad[0]]}->{labels[bad[1]]} = {a[tuple(bad)]} outside [0, 1]")
    if np.any(a[OUT] != 0):
        raise ModelSchemaError("row OUT must be all zeros")
    if np.any(a[:, IN] != 0):
        i = int(np.flatnonzero(a[:, IN])[0])
        raise ModelSchemaError(f"column IN must be all zeros (row {labels[i]})")
    if a[IN, OUT] != 0:
        raise ModelSchemaError("IN->OUT must be zero: sessions are never empty")
    sums = a.sum(axis=1)
    for i in range(n):
        if i != OUT and abs(sums[i] - 1.0) > tol:
            raise ModelSchemaError(f"row {labels[i]} sums to {sums[i]:.6g}, expected 1 within {tol:g}")


def transition_counts(sessions: Sequence[Session], region: RegionSpec):
    """Raw counts behind a cluster model.

    Returns
    -------
    counts : ndarray, shape (n+2, n+2)
        Observed transitions, including IN->zone and zone->OUT.
    dwell : ndarray, shape (n,)
        Total seconds spent per zone.
    n_visits : ndarray, shape (n,)
    """
    n = region.n_zones
    index = {label: i + 2 for i, label in enumerate(region.zone_labels)}
    counts = np.zeros((n + 2, n + 2), dtype=np.int64)
    dwell = np.zeros(n, dtype=np.int64)
    n_visits = np.zeros(n, dtype=np.int64)
    for s in sessions:
        prev = IN
        for zone, t in visits(filter_handoffs(s)):
            j = index[zone]
            counts[prev, j] += 1
            dwell[j - 2] += t
            n_visits[j - 2] += 1
            prev = j
        counts[prev, OUT] += 1
    return counts, dwell, n_visits


def build_cluster_model(sessions: Sequence[Session], region: RegionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized transition matrix and mean stay time (seconds) per zone.

    Zones never departed get a row that exits with probability 1; zones never
    visited have stay time 0.
    """
    if not sessions:
        raise DataError("cannot build a cluster model from zero sessions")
    counts, dwell, n_visits = transition_counts(sessions, region)
    rows = counts.sum(axis=1).astype(float)
    matrix = np.zeros(counts.shape)
    has = rows > 0
    matrix[has] = counts[has] / rows[has, None]
    dead = np.flatnonzero(~has)
    dead = dead[dead >= 2]
    matrix[dead, OUT] = 1.0
    times = np.where(n_visits > 0, dwell / np.maximum(n_visits, 1), 0.0)
    return matrix, times


@dataclass
class ClusterModel:
    matrix: np.ndarray
    times: np.ndarray
    popularity: float
    n_sessions: Optional[int] = None


@dataclass
class MobilityModel:
    region: RegionId
    zone_labels: tuple
    clusters: list
    provenance: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def n_zones(self) -> int:
        return len(self.zone_labels)

    @property
    def state_labels(self) -> list[str]:
        return state_labels(self.zone_labels)

    @property
    def popularities(self) -> np.ndarray:
        return np.array([c.popularity for c in self.clusters])

    def validate(self, row_tol: float = ROW_TOL) -> None:
        if len(set(self.zone_labels)) != len(self.zone_labels):
            raise ModelSchemaError("duplicate zone labels")
        if IN_LABEL in self.zone_labels or OUT_LABEL in self.zone_labels:
            raise ModelSchemaError("zone labels IN/OUT are reserved")
        if not self.clusters:
            raise ModelSchemaError("model has no clusters")
        n = self.n_zones
        for ci, c in enumerate(self.clusters):
            m = np.asarray(c.matrix)
            if m.shape != (n + 2, n + 2):
                raise ModelSchemaError(f"cluster {ci}: matrix shape {m.shape} does not match {n} zones")
            if np.shape(c.times) != (n,):
                raise ModelSchemaError(f"cluster {ci}: time vector length {np.shape(c.times)} != {n}")
            if np.any(~np.isfinite(c.times)) or np.any(np.asarray(c.times) < 0):
                raise ModelSchemaError(f"cluster {ci}: stay times must be finite and non-negative")
            if not 0 <= c.popularity <= 1:
                raise ModelSchemaError(f"cluster {ci}: popularity {c.popularity} outside [0, 1]")
            try:
                check_transition_matrix(m, self.state_labels, row_tol)
            except ModelSchemaError as exc:
                raise ModelSchemaError(f"cluster {ci}: {exc}") from None
        total = float(self.popularities.sum())
        if abs(total - 1.0) > max(POPULARITY_TOL, row_tol):
            raise ModelSchemaError(f"popularities sum to {total}, expected 1")


@dataclass
class ModelConfig:
    """Knobs of the modeling process for one region.

    ``threshold=None`` runs the threshold sweep over ``grid``; ``math.inf``
    disables gap splitting altogether. ``k=None`` picks k with the elbow rule
    up to ``k_max``.
    """

    threshold: Optional[float] = None
    grid: Sequence[float] = DEFAULT_GRID
    k: Optional[int] = None
    k_max: int = 30
    seed: int = 0
    restarts: int = 10


@dataclass
class RegionFit:
    model: MobilityModel
    sessions: list
    vectors: np.ndarray
    clustering: Clustering
    sweep: Optional[ThresholdSweepResult] = None
    elbow: Optional[ElbowCurve] = None


def fit_region(store: SampleStore, region: RegionSpec, config: ModelConfig = ModelConfig()) -> RegionFit:
    """Sessions, profiling and per-cluster matrices for one region."""
    sweep = None
    threshold = config.threshold
    if threshold is None:
        sweep = sweep_threshold(store, region, config.grid)
        threshold = sweep.chosen
    sessions = [filter_handoffs(s) for s in split_sessions(store, region, threshold)]
    n_raw = len(sessions)
    sessions = [s for s in sessions if s.duration > 0]
    if not sessions:
        raise DataError(f"{region.id}: no session of positive length in the data")
    if len(sessions) < n_raw:
        logger.info("%s: dropped %d zero-length sessions", region.id, n_raw - len(sessions))
    X = session_vectors(sessions, region)
    n_distinct = len(np.unique(X, axis=0))
    curve = None
    if config.k is None:
        if n_distinct >= 3:
            curve = elbow(X, max(config.k_max, 3), config.seed, config.restarts)
            k = curve.k_star
        else:
            k = n_distinct
    else:
        k = config.k
        if k > n_distinct:
            raise DataError(f"{region.id}: k={k} exceeds the {n_distinct} distinct session profiles")
    clustering = kmeans(X, k, config.seed, config.restarts)
    clusters = []
    for j in range(k):
        members = [s for s, lab in zip(sessions, clustering.labels) if lab == j]
        matrix, times = build_cluster_model(members, region)
        clusters.append(ClusterModel(matrix, times, len(members) / len(sessions), len(members)))
    start = min(s.start for s in sessions)
    end = max(s.end for s in sessions)
    provenance = {
        "threshold_min": None if math.isinf(threshold) else threshold,
        "gap_split": not math.isinf(threshold),
        "k": k,
        "k_selection": "elbow" if curve is not None else ("fixed" if config.k else "distinct"),
        "seed": config.seed,
        "restarts": config.restarts,
        "dataset_sha256": store.digest(),
        "n_sessions": len(sessions),
        "n_zero_length_dropped": n_raw - len(sessions),
        "window_s": [start, end],
        "mean_interarrival_s": (end - start) / len(sessions) if end > start else None,
    }
    model = MobilityModel(region.id, region.zone_labels, clusters, provenance)
    model.validate()
    return RegionFit(model, sessions, X, clustering, sweep, curve)


def build_mobility_model(store: SampleStore, region: RegionSpec, config: ModelConfig = ModelConfig()) -> MobilityModel:
    return fit_region(store, region, config).model


def _to_jsonable(x):
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _to_jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def model_to_dict(model: MobilityModel) -> dict:
    return {
        "region": model.region.to_dict(),
        "zone_labels": list(model.zone_labels),
        "clusters": [
            {
                "popularity": float(c.popularity),
                "state_labels": model.state_labels,
                "matrix": np.asarray(c.matrix, dtype=float).tolist(),
                "time_vector_s": np.asarray(c.times, dtype=float).tolist(),
                **({"n_sessions": int(c.n_sessions)} if c.n_sessions is not None else {}),
            }
            for c in model.clusters
        ],
        "provenance": _to_jsonable(model.provenance),
    }


def serialize(model: MobilityModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def deserialize(doc, row_tol: float = ROW_TOL) -> MobilityModel:
    """Parse and validate a model document (JSON text or decoded dict)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ModelSchemaError(f"not JSON: {exc}") from None
    try:
        region = RegionId.from_dict(doc["region"])
        labels = tuple(doc["zone_labels"])
        clusters = []
        for ci, c in enumerate(doc["clusters"]):
            if list(c.get("state_labels", state_labels(labels))) != state_labels(labels):
                raise ModelSchemaError(f"cluster {ci}: state labels {c['state_labels']} do not match zones")
            matrix = np.array(c["matrix"], dtype=float)
            times = np.array(c["time_vector_s"], dtype=float)
            clusters.append(ClusterModel(matrix, times, float(c["popularity"]), c.get("n_sessions")))
    except ModelSchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelSchemaError(f"malformed model document: {exc!r}") from None
    model = MobilityModel(region, labels, clusters, dict(doc.get("provenance") or {}))
    model.validate(row_tol)
    return model


def save_model(model: MobilityModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(model))


def load_model(path, row_tol: float = ROW_TOL) -> MobilityModel:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read(), row_tol)


def chord_export(matrix, labels: Sequence[str], include_in: bool = True,
                 include_out: bool = False) -> list[tuple[str, str, float]]:
    """Non-zero flows ``(from, to, probability)`` for chord-diagram renderers.

    Zone-to-zone flows are always listed; entry flows (IN->zone) and exit
    flows (zone->OUT) are toggled separately.
    """
    a = np.asarray(matrix, dtype=float)
    rows = []
    for i in range(a.shape[0]):
        if i == OUT or (i == IN and not include_in):
            continue
        for j in range(a.shape[1]):
            if a[i, j] == 0 or j == IN or (j == OUT and not include_out):
                continue
            rows.append((labels[i], labels[j], float(a[i, j])))
    return rows


def chord_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("from", "to", "probability"))
    for r in rows:
        writer.writerow((r[0], r[1], repr(r[2])))
    return buf.getvalue()


def format_model(model: MobilityModel, digits: int = 4) -> str:
    """Plain-text dump with stay times in minutes."""
    labels = model.state_labels
    width = max(len(x) for x in labels) + 1
    out = [f"model {model.region}: {model.k} clusters, {model.n_zones} zones"]
    for ci, c in enumerate(model.clusters):
        out.append(f"\ncluster {ci} (popularity {c.popularity:.4f})")
        out.append(" " * width + " ".join(f"{x:>{width}}" for x in labels))
        for lab, row in zip(labels, np.asarray(c.matrix)):
            out.append(f"{lab:<{width}}" + " ".join(f"{v:>{width}.{digits}g}" for v in row))
        mins = " ".join(f"{z}={t / 60:.2f}" for z, t in zip(model.zone_labels, c.times))
        out.append(f"stay (min): {mins}")
    return "\n".join(out)
