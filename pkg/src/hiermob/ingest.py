"""Parsing and cleaning of wireless session access logs.

A log is a sequence of ``<time_stamp, user_id, ap_id>`` observations. The
:class:`SampleStore` keeps them deduplicated and sorted by
``(user_id, timestamp, ap_id)`` in flat numpy arrays so the session code can
work on whole columns at once.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple, Optional

import numpy as np

logger = logging.getLogger(__name__)

CSV_HEADER = ("time_stamp", "user_id", "ap_id")


class IngestError(ValueError):
    """Raised when an input document cannot be parsed at all."""


@dataclass(frozen=True, order=True)
class Sample:
    timestamp: int
    user_id: str
    ap_id: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if not self.user_id or not self.ap_id:
            raise ValueError("user_id and ap_id must be non-empty")


class SampleStore:
    """Immutable, sorted collection of samples.

    Samples are held column-wise: ``timestamps`` (int64), ``user_codes`` and
    ``ap_codes`` index into the sorted ``user_ids`` / ``ap_ids`` tuples.
    Because both id tuples are sorted, sorting by codes is the same as sorting
    by the ids themselves.

    Parameters
    ----------
    samples : iterable of Sample
        Observations in any order. Exact duplicates are collapsed.
    skipped : int, optional
        Number of malformed rows dropped by the parser that produced the
        samples; carried along for reporting only.
    """

    def __init__(self, samples: Iterable[Sample] = (), skipped: int = 0):
        unique = set(samples)
        if unique:
            ts = np.fromiter((s.timestamp for s in unique), dtype=np.int64, count=len(unique))
            users, ucodes = np.unique(np.array([s.user_id for s in unique], dtype=object).astype(str),
                                      return_inverse=True)
            aps, acodes = np.unique(np.array([s.ap_id for s in unique], dtype=object).astype(str),
                                    return_inverse=True)
        else:
            ts = np.zeros(0, dtype=np.int64)
            users = aps = np.zeros(0, dtype=str)
            ucodes = acodes = np.zeros(0, dtype=np.int64)
        self._init_arrays(ts, ucodes, acodes, tuple(users.tolist()), tuple(aps.tolist()), skipped)

    def _init_arrays(self, ts, ucodes, acodes, user_ids, ap_ids, skipped):
        order = np.lexsort((acodes, ts, ucodes))
        self.timestamps = np.ascontiguousarray(ts[order], dtype=np.int64)
        self.user_codes = np.ascontiguousarray(ucodes[order], dtype=np.int64)
        self.ap_codes = np.ascontiguousarray(acodes[order], dtype=np.int64)
        self.user_ids = user_ids
        self.ap_ids = ap_ids
        self.skipped = int(skipped)
        for arr in (self.timestamps, self.user_codes, self.ap_codes):
            arr.setflags(write=False)

    @classmethod
    def _from_mask(cls, parent: "SampleStore", mask: np.ndarray) -> "SampleStore":
        # Re-encode so that user_ids/ap_ids list only what survives the mask.
        store = cls.__new__(cls)
        ucodes = parent.user_codes[mask]
        acodes = parent.ap_codes[mask]
        used_u, new_u = np.unique(ucodes, return_inverse=True)
        used_a, new_a = np.unique(acodes, return_inverse=True)
        store._init_arrays(
            parent.timestamps[mask],
            new_u.astype(np.int64),
            new_a.astype(np.int64),
            tuple(parent.user_ids[i] for i in used_u),
            tuple(parent.ap_ids[i] for i in used_a),
            parent.skipped,
        )
        return store

    def __len__(self) -> int:
        return len(self.timestamps)

    def __iter__(self) -> Iterator[Sample]:
        for t, u, a in zip(self.timestamps.tolist(), self.user_codes.tolist(), self.ap_codes.tolist()):
            yield Sample(t, self.user_ids[u], self.ap_ids[a])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleStore):
            return NotImplemented
        return self.samples == other.samples

    def __repr__(self) -> str:
        return f"SampleStore({len(self)} samples, {len(self.user_ids)} users, {len(self.ap_ids)} APs)"

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    @property
    def ap_index(self) -> frozenset[str]:
        return frozenset(self.ap_ids)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def user_bounds(self) -> np.ndarray:
        """Start offsets of each user's block, plus a final ``len(self)``."""
        counts = np.bincount(self.user_codes, minlength=len(self.user_ids))
        return np.concatenate([[0], np.cumsum(counts)])

    def time_span(self) -> tuple[int, int]:
        if not len(self):
            return (0, 0)
        return int(self.timestamps.min()), int(self.timestamps.max())

    def digest(self) -> str:
        """sha256 over the canonical CSV encoding (cached; the store is immutable)."""
        if getattr(self, "_digest", None) is None:
            self._digest = hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()
        return self._digest

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_csv(self, buf)
        return buf.getvalue()

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        write_jsonl(self, buf)
        return buf.getvalue()


def write_csv(samples: Iterable[Sample], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in samples:
        writer.writerow((s.timestamp, s.user_id, s.ap_id))


def write_jsonl(samples: Iterable[Sample], out: IO[str]) -> None:
    for s in samples:
        out.write(json.dumps({"time_stamp": s.timestamp, "user_id": s.user_id, "ap_id": s.ap_id}))
        out.write("\n")


def _as_timestamp(value) -> Optional[int]:
    # Whole-second values only; "12.0" is fine, "12.5" is not.
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        ts = value
    elif isinstance(value, float):
        if not value.is_integer():
            return None
        ts = int(value)
    elif isinstance(value, str):
        text = value.strip()
        try:
            ts = int(text)
        except ValueError:
            try:
                f = float(text)
            except ValueError:
                return None
            if not np.isfinite(f) or not f.is_integer():
                return None
            ts = int(f)
    else:
        return None
    return ts if ts >= 0 else None


def _make_sample(ts, user, ap) -> Optional[Sample]:
    t = _as_timestamp(ts)
    if t is None or not isinstance(user, str) or not isinstance(ap, str):
        return None
    user, ap = user.strip(), ap.strip()
    if not user or not ap:
        return None
    return Sample(t, user, ap)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, str):
        return source
    else:
        data = source.read()
        if isinstance(data, str):
            return data
    return data.decode("utf-8-sig")


def parse_tuple_log(source, format: str = "csv") -> SampleStore:
    """Parse a CSV or JSONL tuple log into a :class:`SampleStore`.

    Malformed rows are skipped and counted in ``store.skipped``; they never
    abort the parse. A CSV without the ``time_stamp,user_id,ap_id`` header is
    rejected outright because the column order cannot be trusted.

    Parameters
    ----------
    source : bytes, str or binary/text stream
    format : {"csv", "jsonl"}
    """
    text = _read_text(source)
    samples: list[Sample] = []
    skipped = 0
    if format == "csv":
        reader = csv.reader(io.StringIO(text, newline=""))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise IngestError(f"CSV header must be {','.join(CSV_HEADER)!r}, got {header!r}")
        for row in reader:
            if not row:
                continue
            sample = _make_sample(*row) if len(row) == 3 else None
            if sample is None:
                skipped += 1
            else:
                samples.append(sample)
    elif format == "jsonl":
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                skipped += 1
                continue
            sample = None
            if isinstance(obj, dict):
                sample = _make_sample(obj.get("time_stamp"), obj.get("user_id"), obj.get("ap_id"))
            if sample is None:
                skipped += 1
            else:
                samples.append(sample)
    else:
        raise ValueError(f"unknown format {format!r}")
    if skipped:
        logger.warning("skipped %d malformed rows", skipped)
    return SampleStore(samples, skipped=skipped)


class ProximityParse(NamedTuple):
    samples: list[Sample]
    skipped: int


_MISSING_COMMA = re.compile(r'("|\d|true|false|null|}|])(\s*\n\s*")')
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


def _loads_lenient(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    # Hand-copied location-engine exports tend to lose commas at line ends and
    # keep trailing ones; patch exactly those two defects and try again.
    repaired = _TRAILING_COMMA.sub(r"\1", _MISSING_COMMA.sub(r"\1,\2", text))
    try:
        return json.loads(repaired)
    except json.JSONDecodeError as exc:
        raise IngestError(f"not a JSON document: {exc}") from exc


def parse_proximity_json(source, strict: bool = False) -> ProximityParse:
    """Extract samples from a location-engine ``proximity`` export.

    ``user_id`` comes from ``msg.hashed_sta_eth_mac``, ``ap_id`` from
    ``msg.radio_mac.addr`` and the timestamp from ``ts``. Records missing any
    of these are skipped and counted.

    With ``strict=False`` (default) a document that is invalid JSON only
    because of missing line-end commas or trailing commas is repaired first.
    """
    text = _read_text(source)
    if strict:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"not a JSON document: {exc}") from exc
    else:
        doc = _loads_lenient(text)
    if not isinstance(doc, dict) or "Proximity_result" not in doc:
        raise IngestError("missing top-level key 'Proximity_result'")
    records = doc["Proximity_result"]
    if not isinstance(records, list):
        raise IngestError("'Proximity_result' must be an array")
    samples, skipped = [], 0
    for rec in records:
        sample = None
        if isinstance(rec, dict) and isinstance(rec.get("msg"), dict):
            msg = rec["msg"]
            radio = msg.get("radio_mac")
            ap = radio.get("addr") if isinstance(radio, dict) else None
            sample = _make_sample(rec.get("ts"), msg.get("hashed_sta_eth_mac"), ap)
        if sample is None:
            skipped += 1
        else:
            samples.append(sample)
    return ProximityParse(samples, skipped)


@dataclass(frozen=True)
class CleaningConfig:
    drop_single_connection_users: bool = False
    excluded_ap_ids: frozenset = field(default_factory=frozenset)
    excluded_user_ids: frozenset = field(default_factory=frozenset)
    time_window: Optional[tuple[int, int]] = None


def clean(store: SampleStore, rules: CleaningConfig) -> SampleStore:
    """Return a filtered copy of ``store``.

    Exclusions (APs, users, outside ``time_window`` inclusive bounds) are applied
    first; single-sample users are then dropped if requested. Doing it in this
    order makes the operation idempotent.
    """
    keep = np.ones(len(store), dtype=bool)
    if rules.excluded_ap_ids:
        bad = np.array([a in rules.excluded_ap_ids for a in store.ap_ids], dtype=bool)
        keep &= ~bad[store.ap_codes]
    if rules.excluded_user_ids:
        bad = np.array([u in rules.excluded_user_ids for u in store.user_ids], dtype=bool)
        keep &= ~bad[store.user_codes]
    if rules.time_window is not None:
        start, end = rules.time_window
        keep &= (store.timestamps >= start) & (store.timestamps <= end)
    if rules.drop_single_connection_users:
        counts = np.bincount(store.user_codes[keep], minlength=len(store.user_ids))
        keep &= counts[store.user_codes] > 1
    return SampleStore._from_mask(store, keep)


def read_store(path, format: Optional[str] = None) -> SampleStore:
    """Load a store from a ``.csv``/``.jsonl``/``.json`` (proximity) file."""
    path = str(path)
    if format is None:
        if path.endswith(".jsonl"):
            format = "jsonl"
        elif path.endswith(".json"):
            format = "proximity"
        else:
            format = "csv"
    with open(path, "rb") as fh:
        data = fh.read()
    if format == "proximity":
        parsed = parse_proximity_json(data)
        return SampleStore(parsed.samples, skipped=parsed.skipped)
    return parse_tuple_log(data, format)
