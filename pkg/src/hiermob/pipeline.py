"""Run the modeling process for every region of a hierarchy."""
from __future__ import annotations

import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .hierarchy import HierarchyTree, RegionSpec, enumerate_modeling_tasks
from .ingest import SampleStore
from .model import MobilityModel, ModelConfig, fit_region

logger = logging.getLogger(__name__)


@dataclass
class RegionResult:
    region: RegionSpec
    model: Optional[MobilityModel]
    seconds: float
    error: Optional[str] = None
    error_kind: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.model is not None


def run_region(store: SampleStore, region: RegionSpec, config: ModelConfig) -> RegionResult:
    t0 = time.perf_counter()
    try:
        model = fit_region(store, region, config).model
    except Exception as exc:  # isolate: one region's failure must not stop the others
        logger.warning("%s failed: %s", region.id, exc)
        logger.debug("%s", traceback.format_exc())
        return RegionResult(region, None, time.perf_counter() - t0, str(exc), type(exc).__name__)
    return RegionResult(region, model, time.perf_counter() - t0)


def default_jobs(n_tasks: int) -> int:
    return max(1, min(os.cpu_count() or 1, n_tasks))


def run_pipeline(store: SampleStore, tree: HierarchyTree, config: ModelConfig = ModelConfig(),
                 jobs: Optional[int] = None) -> list[RegionResult]:
    """Model every region in :func:`enumerate_modeling_tasks` order.

    With ``jobs > 1`` regions run in worker processes; results come back in
    task order either way.
    """
    tasks = enumerate_modeling_tasks(tree)
    unmapped = tree.unmapped_aps(store.ap_ids)
    if unmapped:
        logger.warning("%d APs in the data are not in the hierarchy; their samples count as outside: %s",
                       len(unmapped), ", ".join(sorted(unmapped)[:10]))
    jobs = default_jobs(len(tasks)) if jobs is None else max(1, jobs)
    if jobs == 1:
        return [run_region(store, region, config) for region in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_region, store, region, config) for region in tasks]
        return [f.result() for f in futures]


def model_filename(region: RegionSpec) -> str:
    rid = region.id
    parts = [f"lv{rid.level}"] + [p for p in (rid.building, rid.wing) if p]
    safe = ["".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in p) for p in parts]
    return "model_" + "_".join(safe) + ".json"
