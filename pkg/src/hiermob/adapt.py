"""Model adaptation between scenarios: remove, duplicate, rename and rescale zones.

Zones created by :func:`duplicate_zone` remember their source in
``provenance["twins"]``. Removing one of a pair folds its incoming probability
back into the survivor, so duplicating and then removing a zone gives back
the original model. Removing any other zone redistributes its incoming mass
proportionally over what is left in each row.
"""
from __future__ import annotations

import copy
import json
from typing import Iterable, Mapping, Sequence

import numpy as np

from .hierarchy import RegionId
from .model import IN, IN_LABEL, OUT, OUT_LABEL, ClusterModel, MobilityModel, ModelSchemaError


class AdaptationError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"directive {index}: {message}")


def _copy(model: MobilityModel) -> MobilityModel:
    return MobilityModel(
        model.region,
        tuple(model.zone_labels),
        [ClusterModel(np.array(c.matrix, dtype=float), np.array(c.times, dtype=float), c.popularity, c.n_sessions)
         for c in model.clusters],
        copy.deepcopy(model.provenance),
    )


def _state(model: MobilityModel, label: str) -> int:
    if label not in model.zone_labels:
        raise AdaptationError(f"unknown zone {label!r}")
    return model.zone_labels.index(label) + 2


def _normalize_row(a: np.ndarray, i: int) -> bool:
    """Rescale row ``i`` to sum 1. Zone rows with no mass exit; returns False
    for an IN row with no mass (the cluster can no longer start anywhere)."""
    s = a[i].sum()
    if s > 0:
        a[i] /= s
        return True
    if i == IN:
        return False
    a[i, OUT] = 1.0
    return True


def _renormalize_popularity(model: MobilityModel) -> None:
    total = sum(c.popularity for c in model.clusters)
    if total <= 0:
        share = 1.0 / len(model.clusters)
        for c in model.clusters:
            c.popularity = share
    else:
        for c in model.clusters:
            c.popularity /= total


def _twin_of(model: MobilityModel, label: str):
    twins = model.provenance.get("twins", {})
    if label in twins and twins[label] in model.zone_labels:
        return twins[label]
    for new, src in twins.items():
        if src == label and new in model.zone_labels:
            return new
    return None


def remove_zone(model: MobilityModel, label: str) -> MobilityModel:
    """Delete a zone from every cluster.

    Clusters whose entry row loses all its mass are dropped and the remaining
    popularities rescaled.
    """
    i = _state(model, label)
    if model.n_zones < 2:
        raise AdaptationError("cannot remove the last zone of a region")
    out = _copy(model)
    partner = _twin_of(model, label)
    p = _state(model, partner) if partner is not None else None
    kept = []
    for c in out.clusters:
        a = c.matrix
        before = a.sum(axis=1)
        if p is not None:
            a[:, p] += a[:, i]
            a[:, i] = 0.0
            a[p, p] = 0.0
        lost = before - a.sum(axis=1) + a[:, i]
        a = np.delete(np.delete(a, i, axis=0), i, axis=1)
        lost = np.delete(lost, i)
        alive = True
        for r in range(a.shape[0]):
            # rows that kept all their mass are left bit-for-bit untouched
            if r != OUT and (lost[r] > 0 or a[r].sum() == 0):
                alive &= _normalize_row(a, r)
        if alive:
            kept.append(ClusterModel(a, np.delete(c.times, i - 2), c.popularity, c.n_sessions))
    if not kept:
        raise AdaptationError(f"removing {label!r} leaves no cluster with an entry zone")
    out.clusters = kept
    _renormalize_popularity(out)
    out.zone_labels = tuple(z for z in out.zone_labels if z != label)
    twins = out.provenance.get("twins")
    if twins:
        out.provenance["twins"] = {k: v for k, v in twins.items() if label not in (k, v)}
    return out


def duplicate_zone(model: MobilityModel, label: str, new_label: str) -> MobilityModel:
    """Add ``new_label`` as a copy of ``label``.

    Incoming probability to ``label`` is split evenly between the two, the
    copy inherits the outgoing row and the stay time, and transitions between
    the twins (and self-loops) are set to zero before the two rows are
    rescaled.
    """
    i = _state(model, label)
    if new_label in model.zone_labels or new_label in (IN_LABEL, OUT_LABEL) or not new_label:
        raise AdaptationError(f"zone name {new_label!r} is already in use")
    out = _copy(model)
    for c in out.clusters:
        a = c.matrix
        n = a.shape[0]
        b = np.zeros((n + 1, n + 1))
        b[:n, :n] = a
        b[:, i] /= 2.0
        b[:, n] = b[:, i]
        b[n] = b[i]
        for r in (i, n):
            if b[r, i] or b[r, n]:
                b[r, i] = b[r, n] = 0.0
                _normalize_row(b, r)
        c.matrix = b
        c.times = np.append(c.times, c.times[i - 2])
    out.zone_labels = out.zone_labels + (new_label,)
    out.provenance.setdefault("twins", {})[new_label] = label
    return out


def rename_zone(model: MobilityModel, old: str, new: str) -> MobilityModel:
    i = _state(model, old)
    if new in model.zone_labels or new in (IN_LABEL, OUT_LABEL) or not new:
        raise AdaptationError(f"zone name {new!r} is already in use")
    out = _copy(model)
    labels = list(out.zone_labels)
    labels[i - 2] = new
    out.zone_labels = tuple(labels)
    twins = out.provenance.get("twins")
    if twins:
        out.provenance["twins"] = {(new if k == old else k): (new if v == old else v) for k, v in twins.items()}
    return out


def scale_time(model: MobilityModel, label: str, factor: float) -> MobilityModel:
    i = _state(model, label)
    if not factor >= 0:
        raise AdaptationError(f"scale factor must be non-negative, got {factor}")
    out = _copy(model)
    for c in out.clusters:
        c.times[i - 2] *= factor
    return out


def set_weights(model: MobilityModel, weights: Sequence[float]) -> MobilityModel:
    w = np.asarray(weights, dtype=float)
    if len(w) != model.k:
        raise AdaptationError(f"{len(w)} weights for {model.k} clusters")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise AdaptationError("weights must be non-negative and sum to 1")
    out = _copy(model)
    for c, x in zip(out.clusters, w):
        c.popularity = float(x)
    return out


def with_region(model: MobilityModel, region: RegionId) -> MobilityModel:
    """Same model under another region id, e.g. a copied building."""
    out = _copy(model)
    out.region = region
    return out


_DIRECTIVES = {
    "remove_zone": (remove_zone, ("label",)),
    "duplicate_zone": (duplicate_zone, ("label", "new_label")),
    "rename_zone": (rename_zone, ("old", "new")),
    "scale_time": (scale_time, ("label", "factor")),
    "set_weights": (set_weights, ("weights",)),
}


def apply_script(model: MobilityModel, script: Iterable[Mapping]) -> MobilityModel:
    """Apply directives in order, re-validating the model after each one.

    A directive is a mapping such as ``{"op": "duplicate_zone", "label": "A",
    "new_label": "A2"}``. The first failing directive raises
    :class:`AdaptationError` carrying its index.
    """
    current = model
    for idx, step in enumerate(script):
        try:
            op = step["op"]
            fn, params = _DIRECTIVES[op]
        except (KeyError, TypeError):
            raise AdaptationError(f"unknown directive {step!r}", idx) from None
        missing = [p for p in params if p not in step]
        if missing:
            raise AdaptationError(f"{op} needs {missing}", idx)
        try:
            current = fn(current, *(step[p] for p in params))
            current.validate()
        except AdaptationError as exc:
            raise AdaptationError(str(exc), idx) from None
        except ModelSchemaError as exc:
            raise AdaptationError(f"{op} broke the model: {exc}", idx) from None
    return current if current is not model else _copy(model)


def load_script(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        script = json.load(fh)
    if not isinstance(script, list):
        raise AdaptationError("adaptation script must be a JSON array of directives")
    return script
