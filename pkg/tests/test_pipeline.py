import numpy as np

from hiermob.datasets import simulate_campus
from hiermob.hierarchy import RegionId, enumerate_modeling_tasks
from hiermob.model import ModelConfig, serialize
from hiermob.pipeline import model_filename, run_pipeline, run_region


def small_campus():
    return simulate_campus(n_buildings=2, wings=2, aps_per_wing=2, n_users=50, days=2, seed=7)


def test_simulation_is_seeded():
    assert small_campus().store == small_campus().store
    assert simulate_campus(2, 2, 2, 50, 2, seed=8).store != small_campus().store


def test_results_follow_task_order():
    c = small_campus()
    results = run_pipeline(c.store, c.tree, ModelConfig(k_max=4, restarts=2), jobs=1)
    assert [r.region.id for r in results] == [t.id for t in enumerate_modeling_tasks(c.tree)]
    assert all(r.ok and r.seconds > 0 for r in results)
    for r in results:
        r.model.validate(1e-6)
        for cl in r.model.clusters:
            off = [i for i in range(cl.matrix.shape[0]) if i != 1]
            np.testing.assert_allclose(cl.matrix[off].sum(axis=1), 1.0, atol=1e-6)


def test_two_workers_match_serial():
    c = small_campus()
    cfg = ModelConfig(k_max=4, restarts=2)
    serial = run_pipeline(c.store, c.tree, cfg, jobs=1)
    parallel = run_pipeline(c.store, c.tree, cfg, jobs=2)
    assert [serialize(a.model) for a in serial] == [serialize(b.model) for b in parallel]


def test_failure_is_isolated():
    c = small_campus()
    region = c.tree.root
    bad = run_region(c.store, region, ModelConfig(threshold=30, k=10 ** 6))
    assert not bad.ok and bad.error_kind == "DataError"


def test_model_filename():
    c = small_campus()
    names = {model_filename(t) for t in enumerate_modeling_tasks(c.tree)}
    assert "model_lv0.json" in names and "model_lv2_B01_W1.json" in names
    assert len(names) == len(c.tree)
