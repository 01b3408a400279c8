"""Synthetic trace generation from a mobility model.

Random streams: a master ``SeedSequence(seed)`` with spawn key ``(0,)`` feeds
the arrival process and key ``(1, i)`` feeds user ``i``. Any user can be
regenerated on its own, and generation can be split across workers without
changing the output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .ingest import Sample, SampleStore
from .model import IN, OUT, MobilityModel

logger = logging.getLogger(__name__)

MAX_STEPS = 100_000


class GenerationError(RuntimeError):
    pass


@dataclass
class GenerationConfig:
    n_users: int
    mean_interarrival: Union[float, str] = "from-data"
    type_weights: Optional[Sequence[float]] = None
    seed: int = 0
    start_time: int = 0

    def __post_init__(self):
        if self.n_users < 0:
            raise ValueError("n_users must be non-negative")
        if self.type_weights is not None:
            w = np.asarray(self.type_weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("type weights must be non-negative and sum to 1")
        if self.mean_interarrival != "from-data" and not float(self.mean_interarrival) > 0:
            raise ValueError("mean_interarrival must be positive")


@dataclass
class Track:
    """One synthetic user: cluster index, zone visits and exit offset.

    ``visits`` holds ``(zone_label, entry_offset_s)``; offsets are relative
    to the user's arrival.
    """

    cluster: int
    visits: list
    exit: float

    @property
    def dwells(self) -> list[float]:
        offsets = [t for _, t in self.visits] + [self.exit]
        return [b - a for a, b in zip(offsets[:-1], offsets[1:])]


class _Walker:
    """Precomputed sampling tables for one model."""

    def __init__(self, model: MobilityModel, weights=None):
        self.model = model
        w = np.asarray(model.popularities if weights is None else weights, dtype=float)
        if len(w) != model.k:
            raise ValueError(f"{len(w)} weights for {model.k} clusters")
        self.type_cdf = np.cumsum(w / w.sum())
        self.cdfs = []
        self.trapped = []
        for c in model.clusters:
            a = np.asarray(c.matrix, dtype=float)
            sums = a.sum(axis=1, keepdims=True)
            p = np.divide(a, sums, out=np.zeros_like(a), where=sums > 0)
            self.cdfs.append(np.cumsum(p, axis=1))
            self.trapped.append(_cannot_exit(a))

    def walk(self, rng: np.random.Generator) -> Track:
        cluster = _draw(self.type_cdf, rng)
        cdf = self.cdfs[cluster]
        times = np.asarray(self.model.clusters[cluster].times, dtype=float)
        labels = self.model.zone_labels
        state = _draw(cdf[IN], rng)
        t = 0.0
        out = []
        for _ in range(MAX_STEPS):
            if state in self.trapped[cluster]:
                raise GenerationError(
                    f"cluster {cluster}: zone {labels[state - 2]!r} cannot reach OUT; walk would never end")
            mean = times[state - 2]
            out.append((labels[state - 2], t))
            t += rng.exponential(mean) if mean > 0 else 0.0
            state = _draw(cdf[state], rng)
            if state == OUT:
                return Track(cluster, out, t)
        raise GenerationError(f"cluster {cluster}: walk exceeded {MAX_STEPS} steps")


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def _cannot_exit(a: np.ndarray) -> set[int]:
    """Zone states from which OUT is unreachable."""
    n = a.shape[0]
    reach = {OUT}
    changed = True
    while changed:
        changed = False
        for i in range(2, n):
            if i not in reach and any(a[i, j] > 0 for j in reach):
                reach.add(i)
                changed = True
    return {i for i in range(2, n) if i not in reach}


def user_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def generate_user(model: MobilityModel, rng: np.random.Generator, weights=None) -> Track:
    """Draw one user track: user type by weight, entry zone from row IN,
    exponential stays, next zones from the current row until OUT."""
    return _Walker(model, weights).walk(rng)


@dataclass
class SyntheticTrace:
    samples: list
    clusters: dict = field(default_factory=dict)
    tracks: dict = field(default_factory=dict, repr=False)
    diagnostics: list = field(default_factory=list)

    def to_store(self) -> SampleStore:
        return SampleStore(self.samples)

    def to_csv(self) -> str:
        return self.to_store().to_csv()

    def to_jsonl(self) -> str:
        return self.to_store().to_jsonl()


def resolve_interarrival(model: MobilityModel, value) -> float:
    if value == "from-data":
        mean = model.provenance.get("mean_interarrival_s")
        if not mean:
            raise ValueError("model provenance has no mean_interarrival_s; pass a number")
        return float(mean)
    return float(value)


def _to_samples(user_id: str, arrival: float, track: Track) -> list[Sample]:
    # Whole-second timestamps, strictly increasing within a user so the trace
    # sorts back into the same order when re-ingested.
    out = []
    last = None
    for zone, offset in track.visits + [(track.visits[-1][0], track.exit)]:
        ts = int(round(arrival + offset))
        if last is not None and ts <= last:
            ts = last + 1
        out.append(Sample(ts, user_id, zone))
        last = ts
    return out


def generate_trace(model: MobilityModel, config: GenerationConfig) -> SyntheticTrace:
    """Synthetic ``<time_stamp, user_id, ap_id>`` log with Poisson arrivals.

    Zone labels stand in for AP ids. Each user emits one sample per zone entry
    and a final sample in the last zone at exit time. Users whose walk cannot
    terminate are skipped and listed in ``diagnostics``.
    """
    trace = SyntheticTrace([])
    if config.n_users == 0:
        return trace
    mean_gap = resolve_interarrival(model, config.mean_interarrival)
    walker = _Walker(model, config.type_weights)
    arrival_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    arrivals = config.start_time + np.cumsum(arrival_rng.exponential(mean_gap, config.n_users))
    width = len(str(config.n_users))
    for i in range(config.n_users):
        user_id = f"u{i + 1:0{width}d}"
        try:
            track = walker.walk(user_rng(config.seed, i))
        except GenerationError as exc:
            trace.diagnostics.append(f"{user_id}: {exc}")
            logger.warning("%s: %s", user_id, exc)
            continue
        trace.clusters[user_id] = track.cluster
        trace.tracks[user_id] = track
        trace.samples.extend(_to_samples(user_id, float(arrivals[i]), track))
    return trace
