import json
import os

import numpy as np
import pytest

from hiermob.cli import main, parse_grid
from hiermob.datasets import example_hierarchy_documents, load_example_model, simulate_campus
from hiermob.ingest import Sample, SampleStore
from hiermob.model import save_model


@pytest.fixture(scope="module")
def campus_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("campus")
    c = simulate_campus(n_buildings=3, wings=2, aps_per_wing=2, n_users=60, days=2, seed=4)
    hier = []
    for i, doc in enumerate(c.documents):
        p = d / f"region{i}.json"
        p.write_text(json.dumps(doc))
        hier.append(str(p))
    log = d / "log.csv"
    log.write_text(c.store.to_csv())
    return d, str(log), hier


def run(*argv):
    return main([str(a) for a in argv])


def test_parse_grid():
    assert parse_grid("1:5") == [1, 2, 3, 4, 5]
    assert parse_grid("5:20:5") == [5, 10, 15, 20]
    assert parse_grid("10,20,30") == [10, 20, 30]


def test_end_to_end(campus_files, tmp_path, capsys):
    d, log, hier = campus_files
    store = tmp_path / "store.csv"
    assert run("ingest", "--input", log, "--output", store) == 0
    assert run("clean", "--input", store, "--output", tmp_path / "clean.csv", "--drop-single") == 0
    assert run("sessions", "--input", tmp_path / "clean.csv", "--hierarchy", *hier,
               "--output", tmp_path / "sweep.csv") == 0
    assert (tmp_path / "sweep.csv").read_text().startswith("threshold,n_sessions")
    model = tmp_path / "model.json"
    assert run("model", "--input", tmp_path / "clean.csv", "--hierarchy", *hier, "--region", "1:B00",
               "--elbow", 8, "--restarts", 2, "--output", model) == 0
    doc = json.loads(model.read_text())
    assert doc["region"] == {"level": 1, "building": "B00", "wing": None}
    assert (tmp_path / "model.elbow.csv").exists() and (tmp_path / "model.sweep.csv").exists()
    manifest = json.loads((tmp_path / "model.json.manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["inputs"]) == 1 + len(hier)
    assert run("synth", "--model", model, "--users", 100, "--output", tmp_path / "trace.csv") == 0
    script = tmp_path / "script.json"
    script.write_text(json.dumps([{"op": "duplicate_zone", "label": "W0", "new_label": "W9"}]))
    assert run("adapt", "--model", model, "--script", script, "--output", tmp_path / "adapted.json") == 0
    assert run("validate", "--round-trip", "--model-a", model, "--restarts", 2,
               "--output", tmp_path / "rt.json") == 0
    assert "matrix_avg" in json.loads((tmp_path / "rt.json").read_text())
    assert run("validate", "--model-a", model, "--model-b", model, "--output", tmp_path / "same.json") == 0
    assert json.loads((tmp_path / "same.json").read_text())["matrix_avg"] == 0
    assert run("plotdata", "--model", model, "--output-dir", tmp_path / "plots") == 0
    assert (tmp_path / "plots" / "chord_cluster0.csv").read_text().startswith("from,to,probability")


def test_validate_round_trip_from_data(campus_files, tmp_path):
    d, log, hier = campus_files
    code = run("validate", "--round-trip", "--input", log, "--hierarchy", *hier, "--region", "2:B00:W0",
               "--elbow", 6, "--restarts", 2, "--output", tmp_path / "rt.json")
    assert code == 0
    rep = json.loads((tmp_path / "rt.json").read_text())
    assert len(rep["mapping"]) >= 1


def test_rerun_is_byte_identical(campus_files, tmp_path):
    d, log, hier = campus_files
    args = ["model", "--input", log, "--hierarchy", *hier, "--elbow", 6, "--restarts", 2, "--seed", 3,
            "--output", tmp_path / "m.json"]
    assert run(*args) == 0
    first = {p: (tmp_path / p).read_bytes() for p in ("m.json", "m.json.manifest.json", "m.elbow.csv")}
    run_first = (tmp_path / "m.json.run.json").read_text()
    assert run(*args) == 0
    for p, content in first.items():
        assert (tmp_path / p).read_bytes() == content, p
    assert "started_unix" in run_first


def test_pipeline_fig9_tree(tmp_path):
    docs = example_hierarchy_documents()
    hier = []
    for i, doc in enumerate(docs):
        p = tmp_path / f"h{i}.json"
        p.write_text(json.dumps(doc))
        hier.append(p)
    aps = [ap for aps in docs[0]["zones"].values() for ap in aps]
    at = docs[0]["zones"]["bldg_AT"]
    rng = np.random.default_rng(0)
    samples = []
    for u in range(120):
        t = int(rng.integers(0, 7200))
        pool = at if u % 2 else aps
        for _ in range(int(rng.integers(2, 12))):
            ap = str(rng.choice(pool))
            for _ in range(int(rng.integers(1, 6))):
                samples.append(Sample(t, f"user{u}", ap))
                t += 60 * int(rng.integers(1, 8))  # missed polls
        t += int(rng.integers(2, 6)) * 3600
        for _ in range(int(rng.integers(2, 8))):
            samples.append(Sample(t, f"user{u}", str(rng.choice(pool))))
            t += 60 * int(rng.integers(1, 8))
    log = tmp_path / "log.csv"
    log.write_text(SampleStore(samples).to_csv())
    out = tmp_path / "run"
    assert run("pipeline", "--input", log, "--hierarchy", *hier, "--output-dir", out, "--elbow", 5,
               "--restarts", 2, "--jobs", 1) == 0
    models = sorted(p.name for p in out.glob("model_*.json"))
    assert models == ["model_lv0.json", "model_lv1_bldg_AT.json", "model_lv2_bldg_AT_0_fl_East.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert [s["status"] for s in summary] == ["ok"] * 3
    assert all("seconds" not in s for s in summary)
    assert len(json.loads((out / "timing.json").read_text())["regions"]) == 3


def test_pipeline_empty_store_fails(campus_files, tmp_path, capsys):
    d, log, hier = campus_files
    empty = tmp_path / "empty.csv"
    empty.write_text("time_stamp,user_id,ap_id\n")
    code = run("pipeline", "--input", empty, "--hierarchy", *hier, "--output-dir", tmp_path / "run", "--jobs", 1)
    assert code == 3
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert all(s["status"] == "failed" and s["error_kind"] == "DataError" for s in summary)


def test_missing_hierarchy_file(campus_files, tmp_path, capsys):
    d, log, hier = campus_files
    code = run("model", "--input", log, "--hierarchy", tmp_path / "nope.json", "--output", tmp_path / "m.json")
    assert code == 1
    assert "nope.json" in capsys.readouterr().err


def test_json_errors(campus_files, tmp_path, capsys):
    d, log, hier = campus_files
    bad = tmp_path / "bad.json"
    doc = json.loads(open(hier[1]).read())
    first_zone = next(iter(doc["zones"]))
    doc["zones"][first_zone] = doc["zones"][first_zone][:-1]
    bad.write_text(json.dumps(doc))
    code = run("check-hierarchy", "--hierarchy", hier[0], bad, *hier[2:], "--json-errors")
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and err["issues"][0]["kind"] == "coverage"


def test_usage_errors(tmp_path, capsys):
    assert run("model") == 1
    assert run("nonsense") == 1
    assert run("sessions", "--input", "x.csv", "--output", "y", "--sweep", "a:b") == 1


def test_data_error_exit_code(tmp_path, capsys):
    log = tmp_path / "bad.csv"
    log.write_text("no,header,here\n1,u,a\n")
    assert run("ingest", "--input", log, "--output", tmp_path / "o.csv") == 3


def test_adapt_error_exit_code(tmp_path, capsys):
    model = tmp_path / "m.json"
    save_model(load_example_model("bldg_AT"), model)
    script = tmp_path / "s.json"
    script.write_text(json.dumps([{"op": "remove_zone", "label": "nowhere"}]))
    assert run("adapt", "--model", model, "--row-tol", 0.01, "--script", script, "--output", tmp_path / "o.json") == 2
    assert "directive 0" in capsys.readouterr().err


def test_config_file(campus_files, tmp_path, capsys):
    d, log, hier = campus_files
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "elbow": 5, "restarts": 2, "hierarchy": hier}))
    assert run("model", "--config", cfg, "--input", log, "--output", tmp_path / "m.json") == 0
    assert json.loads((tmp_path / "m.json").read_text())["provenance"]["seed"] == 5
    cfg.write_text(json.dumps({"no_such_option": 1}))
    assert run("model", "--config", cfg, "--input", log, "--output", tmp_path / "m.json") == 1


@pytest.mark.skipif((os.cpu_count() or 1) < 2, reason="parallel speed-up needs at least two cores")
def test_parallel_faster_than_serial_sum(tmp_path):
    import time
    from hiermob.pipeline import run_pipeline
    from hiermob.model import ModelConfig
    c = simulate_campus(n_buildings=12, wings=3, aps_per_wing=3, n_users=600, seed=2)
    t0 = time.perf_counter()
    results = run_pipeline(c.store, c.tree, ModelConfig(k_max=10, restarts=2), jobs=os.cpu_count())
    wall = time.perf_counter() - t0
    assert all(r.ok for r in results)
    assert wall < sum(r.seconds for r in results)
