"""Geospatial hierarchy of regions, zones and access points.

Each region is described by one JSON document::

    {"region": {"level": 1, "building": "bldg_AT", "wing": null},
     "zones": {"basement_fl": ["AP-1", "AP-2"], "2nd_fl": ["AP-3"]}}

A level-1 region refines the level-0 zone named like its ``building``; a
level-2 region refines the zone of its level-1 parent named like its
``wing``. Zone order follows document order and fixes the row/column layout of
every matrix built for the region.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

logger = logging.getLogger(__name__)


class HierarchyError(ValueError):
    """Base class for hierarchy validation failures."""

    def __init__(self, message: str, issues: Optional[list[dict]] = None):
        super().__init__(message)
        self.issues = issues or [{"kind": type(self).__name__, "message": message}]


class OverlapError(HierarchyError):
    pass


class CoverageError(HierarchyError):
    pass


class StructureError(HierarchyError):
    pass


@dataclass(frozen=True, order=True)
class RegionId:
    level: int
    building: Optional[str] = None
    wing: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.level, int) or isinstance(self.level, bool) or self.level < 0:
            raise StructureError(f"level must be a non-negative integer, got {self.level!r}")
        if self.level > 2:
            raise StructureError(f"levels beyond 2 are not supported, got {self.level}")
        expect_building = self.level >= 1
        expect_wing = self.level == 2
        if (self.building is not None) != expect_building or (self.wing is not None) != expect_wing:
            raise StructureError(
                f"level {self.level} region needs building={'set' if expect_building else 'absent'}, "
                f"wing={'set' if expect_wing else 'absent'}; got building={self.building!r}, wing={self.wing!r}"
            )

    @property
    def parent(self) -> Optional["RegionId"]:
        if self.level == 0:
            return None
        if self.level == 1:
            return RegionId(0)
        return RegionId(1, self.building)

    @property
    def parent_zone(self) -> Optional[str]:
        """Label of the parent zone this region refines."""
        return {0: None, 1: self.building, 2: self.wing}[self.level]

    def sort_key(self) -> tuple:
        return (self.level, self.building or "", self.wing or "")

    def to_dict(self) -> dict:
        return {"level": self.level, "building": self.building, "wing": self.wing}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegionId":
        return cls(d.get("level"), d.get("building"), d.get("wing"))

    @classmethod
    def parse(cls, text: str) -> "RegionId":
        """Parse ``"0"``, ``"1:bldg"`` or ``"2:bldg:wing"``."""
        parts = text.split(":")
        try:
            level = int(parts[0])
        except ValueError:
            raise StructureError(f"bad region id {text!r}") from None
        rest = parts[1:] + [None] * (3 - len(parts))
        return cls(level, rest[0], rest[1])

    def __str__(self) -> str:
        return f"<lv{self.level}, {self.building or '-'}, {self.wing or '-'}>"


class RegionSpec:
    """One region under study: its id and the ordered zone -> AP-set map."""

    def __init__(self, id: RegionId, zones: Mapping[str, Iterable[str]]):
        self.id = id
        self._zones = {label: frozenset(aps) for label, aps in zones.items()}
        self.zone_labels = tuple(self.zones)
        self._ap_zone: dict[str, str] = {}
        overlaps: dict[str, list[str]] = {}
        for label, aps in self.zones.items():
            if not aps:
                raise StructureError(f"{id}: zone {label!r} is empty")
            for ap in aps:
                if ap in self._ap_zone:
                    overlaps.setdefault(ap, [self._ap_zone[ap]]).append(label)
                else:
                    self._ap_zone[ap] = label
        if not self.zones:
            raise StructureError(f"{id}: region has no zones")
        if overlaps:
            detail = ", ".join(f"{ap} in {sorted(z)}" for ap, z in sorted(overlaps.items()))
            raise OverlapError(f"{id}: APs assigned to more than one zone: {detail}",
                               [{"kind": "overlap", "region": str(id), "aps": sorted(overlaps)}])

    @property
    def zones(self) -> Mapping[str, frozenset]:
        return MappingProxyType(self._zones)

    @property
    def parent(self) -> Optional[RegionId]:
        return self.id.parent

    @property
    def ap_set(self) -> frozenset[str]:
        return frozenset(self._ap_zone)

    @property
    def n_zones(self) -> int:
        return len(self.zone_labels)

    @property
    def is_leaf(self) -> bool:
        return all(len(aps) == 1 for aps in self.zones.values())

    def zone_of(self, ap: str) -> Optional[str]:
        return self._ap_zone.get(ap)

    def zone_index(self, ap: str) -> int:
        label = self._ap_zone.get(ap)
        return -1 if label is None else self.zone_labels.index(label)

    def to_document(self) -> dict:
        return {"region": self.id.to_dict(),
                "zones": {label: sorted(aps) for label, aps in self.zones.items()}}

    def __repr__(self) -> str:
        return f"RegionSpec({self.id}, {self.n_zones} zones, {len(self.ap_set)} APs)"


def flat_region(labels: Iterable[str], region_id: RegionId = RegionId(0)) -> RegionSpec:
    """Region whose zones are single APs named like the zones themselves."""
    return RegionSpec(region_id, {label: [label] for label in labels})


@dataclass
class HierarchyTree:
    regions: Mapping[RegionId, RegionSpec]
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, rid: RegionId) -> RegionSpec:
        return self.regions[rid]

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def root(self) -> RegionSpec:
        return self.regions[min(self.regions, key=RegionId.sort_key)]

    @property
    def depth(self) -> int:
        levels = {rid.level for rid in self.regions}
        return max(levels) - min(levels) + 1

    def children(self, rid: RegionId) -> list[RegionSpec]:
        return [r for r in self.regions.values() if r.parent == rid]

    def unmapped_aps(self, ap_ids: Iterable[str]) -> set[str]:
        """APs that no region of the tree knows about."""
        known = self.root.ap_set
        return {ap for ap in ap_ids if ap not in known}


def build_tree(regions: Iterable[RegionSpec]) -> HierarchyTree:
    """Check structure and coverage across regions and assemble the tree."""
    by_id: dict[RegionId, RegionSpec] = {}
    for region in regions:
        if region.id in by_id:
            raise StructureError(f"duplicate region {region.id}")
        by_id[region.id] = region
    if not by_id:
        raise StructureError("no regions given")
    levels = sorted({rid.level for rid in by_id})
    top = levels[0]
    if sum(1 for rid in by_id if rid.level == top) != 1:
        raise StructureError(f"expected exactly one top region at level {top}")
    warnings = []
    for rid, region in sorted(by_id.items(), key=lambda kv: kv[0].sort_key()):
        if rid.level == top:
            continue
        parent = by_id.get(rid.parent)
        if parent is None:
            raise StructureError(f"{rid}: parent region {rid.parent} not found",
                                 [{"kind": "dangling_parent", "region": str(rid), "parent": str(rid.parent)}])
        pzone = rid.parent_zone
        if pzone not in parent.zones:
            raise StructureError(f"{rid}: parent {parent.id} has no zone {pzone!r}",
                                 [{"kind": "dangling_parent", "region": str(rid), "zone": pzone}])
        expected = parent.zones[pzone]
        missing = sorted(expected - region.ap_set)
        extra = sorted(region.ap_set - expected)
        if missing or extra:
            raise CoverageError(
                f"{rid}: APs do not cover parent zone {pzone!r} exactly; missing={missing}, extra={extra}",
                [{"kind": "coverage", "region": str(rid), "missing": missing, "extra": extra}],
            )
    for rid, region in by_id.items():
        if region.is_leaf:
            continue
        for label, aps in region.zones.items():
            if len(aps) > 1 and not any(c.id.parent_zone == label and c.parent == rid for c in by_id.values()):
                warnings.append(f"{rid}: zone {label!r} ({len(aps)} APs) has no refining region")
    return HierarchyTree(dict(by_id), warnings)


def region_from_document(doc: Mapping) -> RegionSpec:
    if not isinstance(doc, Mapping) or "region" not in doc or "zones" not in doc:
        raise StructureError("document needs 'region' and 'zones' keys")
    header, zones = doc["region"], doc["zones"]
    if not isinstance(header, Mapping):
        raise StructureError("'region' must be an object")
    if not isinstance(zones, Mapping):
        raise StructureError("'zones' must be an object")
    for label, aps in zones.items():
        if not isinstance(aps, list) or not all(isinstance(a, str) and a for a in aps):
            raise StructureError(f"zone {label!r} must map to a list of AP id strings")
        if len(set(aps)) != len(aps):
            raise OverlapError(f"zone {label!r} lists an AP twice",
                               [{"kind": "overlap", "zone": label}])
    return RegionSpec(RegionId.from_dict(header), zones)


def load_hierarchy(files: Iterable) -> HierarchyTree:
    """Load and validate a hierarchy from JSON documents.

    Parameters
    ----------
    files : iterable
        Paths, JSON strings, or already-decoded dicts, one per region.

    Raises
    ------
    HierarchyError
        ``OverlapError``, ``CoverageError`` or ``StructureError`` naming the
        offending APs or regions.
    """
    docs = []
    for item in files:
        if isinstance(item, Mapping):
            docs.append(item)
        elif isinstance(item, Path) or (isinstance(item, str) and not item.lstrip().startswith("{")):
            with open(item, encoding="utf-8") as fh:
                docs.append(json.load(fh))
        else:
            docs.append(json.loads(item))
    tree = build_tree(region_from_document(d) for d in docs)
    for w in tree.warnings:
        logger.info(w)
    return tree


def check_hierarchy(files: Iterable) -> dict:
    """Validate without raising; returns a JSON-ready report."""
    try:
        tree = load_hierarchy(files)
    except HierarchyError as exc:
        return {"valid": False, "errors": exc.issues, "warnings": []}
    return {"valid": True, "errors": [], "warnings": tree.warnings,
            "regions": [str(r.id) for r in enumerate_modeling_tasks(tree)], "depth": tree.depth}


def format_report(report: dict) -> str:
    lines = ["hierarchy: " + ("valid" if report["valid"] else "INVALID")]
    if report.get("depth") is not None:
        lines.append(f"depth: {report['depth']}, regions: {len(report['regions'])}")
    lines += [f"error: {e.get('message') or e}" for e in report["errors"]]
    lines += [f"warning: {w}" for w in report["warnings"]]
    return "\n".join(lines)


def enumerate_modeling_tasks(tree: HierarchyTree) -> list[RegionSpec]:
    """Regions in breadth-first order (level, then building, then wing)."""
    return [tree.regions[rid] for rid in sorted(tree.regions, key=RegionId.sort_key)]
