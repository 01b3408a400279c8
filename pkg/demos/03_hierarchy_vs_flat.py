"""
Hierarchical versus flat modeling
=================================

The same log is modeled once per region of a building/wing/AP hierarchy and
once as a single region with one zone per AP. The flat problem has many
more zones and needs more user types; the regional problems are small.
On tiny campuses the fixed cost of running dozens of small regions can
outweigh that saving, so this fixture is fairly large (takes about a minute).
"""

import time

from hiermob.datasets import simulate_campus
from hiermob.hierarchy import flat_region
from hiermob.model import ModelConfig, fit_region
from hiermob.pipeline import run_pipeline

campus = simulate_campus(n_buildings=12, wings=4, aps_per_wing=4, n_users=2000, seed=0)
cfg = ModelConfig(k_max=50, restarts=3)
print(campus.store, "|", len(campus.tree), "regions")

t0 = time.perf_counter()
results = run_pipeline(campus.store, campus.tree, cfg, jobs=1)
hier_s = time.perf_counter() - t0
by_level = {}
for r in results:
    by_level.setdefault(r.region.id.level, []).append(r.model.k)
for level, ks in sorted(by_level.items()):
    print(f"level {level}: {len(ks):2d} regions, k* from {min(ks)} to {max(ks)}")

t0 = time.perf_counter()
flat = fit_region(campus.store, flat_region(campus.ap_ids), cfg).model
flat_s = time.perf_counter() - t0
print(f"hierarchical: {hier_s:.1f} s   flat ({flat.n_zones} zones): {flat_s:.1f} s, k* = {flat.k}")
