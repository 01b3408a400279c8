import copy
import json
import pickle

import pytest

from hiermob.datasets import BLDG_AT_WINGS, example_hierarchy_documents, campus_hierarchy_documents
from hiermob.hierarchy import (CoverageError, HierarchyError, OverlapError, RegionId, RegionSpec,
                               StructureError, check_hierarchy, enumerate_modeling_tasks, flat_region,
                               load_hierarchy)


def small_docs():
    return [
        {"region": {"level": 0, "building": None, "wing": None},
         "zones": {"B1": ["a1", "a2", "a3"], "B2": ["b1"]}},
        {"region": {"level": 1, "building": "B1", "wing": None},
         "zones": {"W1": ["a1", "a2"], "W2": ["a3"]}},
        {"region": {"level": 2, "building": "B1", "wing": "W1"},
         "zones": {"a1": ["a1"], "a2": ["a2"]}},
    ]


def _corrupt(fn):
    docs = copy.deepcopy(small_docs())
    fn(docs)
    return docs


CORRUPTED = {
    "ap_in_two_zones": lambda d: d[0]["zones"]["B2"].append("a1"),
    "ap_listed_twice_in_zone": lambda d: d[0]["zones"]["B2"].append("b1"),
    "child_missing_ap": lambda d: d[1]["zones"]["W1"].remove("a2"),
    "child_extra_ap": lambda d: d[1]["zones"]["W2"].append("zz"),
    "wing_missing_ap": lambda d: d[2]["zones"].pop("a2"),
    "dangling_building": lambda d: d[1]["region"].update(building="B9"),
    "dangling_wing": lambda d: d[2]["region"].update(wing="W9"),
    "empty_zone": lambda d: d[0]["zones"].update(B3=[]),
    "two_roots": lambda d: d.append({"region": {"level": 0}, "zones": {"X": ["x"]}}),
    "level_fields_inconsistent": lambda d: d[1]["region"].update(wing="W1", level=1),
}


@pytest.mark.parametrize("name", sorted(CORRUPTED))
def test_corrupted_fixture_rejected(name):
    docs = _corrupt(CORRUPTED[name])
    with pytest.raises(HierarchyError):
        load_hierarchy(docs)
    report = check_hierarchy(docs)
    assert not report["valid"] and report["errors"]


def test_ten_corrupted_fixtures():
    assert len(CORRUPTED) == 10


def test_coverage_error_lists_the_ap():
    with pytest.raises(CoverageError) as err:
        load_hierarchy(_corrupt(CORRUPTED["child_missing_ap"]))
    assert "a2" in str(err.value)
    assert err.value.issues[0]["missing"] == ["a2"]


def test_overlap_error_names_ap():
    with pytest.raises(OverlapError, match="a1"):
        load_hierarchy(_corrupt(CORRUPTED["ap_in_two_zones"]))


def test_dangling_parent_is_structure_error():
    with pytest.raises(StructureError):
        load_hierarchy(_corrupt(CORRUPTED["dangling_building"]))


def test_example_tree():
    tree = load_hierarchy(example_hierarchy_documents())
    assert tree.depth == 3
    tasks = enumerate_modeling_tasks(tree)
    assert [t.id for t in tasks] == [RegionId(0), RegionId(1, "bldg_AT"), RegionId(2, "bldg_AT", "0_fl_East")]
    assert tasks[1].n_zones == 6


def test_zone_lookup():
    tree = load_hierarchy(example_hierarchy_documents())
    at = tree[RegionId(1, "bldg_AT")]
    ap = next(iter(at.zones["2nd_fl"]))
    assert at.zone_of(ap) == "2nd_fl"
    assert at.zone_of("not-an-ap") is None
    leaf = tree[RegionId(2, "bldg_AT", "0_fl_East")]
    assert leaf.zone_of("AP-OO-03-02") == "AP-OO-03-02"
    assert leaf.is_leaf


def test_single_leaf_document():
    tree = load_hierarchy([{"region": {"level": 0}, "zones": {"a": ["a"], "b": ["b"]}}])
    assert tree.depth == 1 and tree.root.is_leaf
    assert len(enumerate_modeling_tasks(tree)) == 1


def test_campus_shaped_fixture_has_93_tasks():
    # 18 buildings with 74 wings in total
    wings = [4] * 2 + [5] * 2 + [4] * 14
    assert len(wings) == 18 and sum(wings) == 74
    tree = load_hierarchy(campus_hierarchy_documents(wings))
    assert len(enumerate_modeling_tasks(tree)) == 93


def test_tasks_are_breadth_first():
    tree = load_hierarchy(campus_hierarchy_documents([2, 3, 1]))
    levels = [t.id.level for t in enumerate_modeling_tasks(tree)]
    assert levels == sorted(levels)


def test_single_ap_zones_need_no_refinement():
    assert load_hierarchy(small_docs()).warnings == []


def test_partial_tree_warns_but_loads():
    tree = load_hierarchy(small_docs()[:2])
    assert len(tree.warnings) == 1 and "'W1'" in tree.warnings[0]


def test_documents_from_files(tmp_path):
    paths = []
    for i, d in enumerate(small_docs()):
        p = tmp_path / f"r{i}.json"
        p.write_text(json.dumps(d))
        paths.append(str(p))
    assert len(load_hierarchy(paths)) == 3


def test_region_id_parse_and_parent():
    rid = RegionId.parse("2:B1:W1")
    assert rid == RegionId(2, "B1", "W1")
    assert rid.parent == RegionId(1, "B1")
    assert RegionId.parse("1:B1").parent == RegionId(0)
    with pytest.raises(StructureError):
        RegionId(3, "b", "w")


def test_region_spec_pickles():
    region = flat_region(["x", "y"])
    again = pickle.loads(pickle.dumps(region))
    assert again.zone_labels == ("x", "y") and again.zone_of("y") == "y"


def test_zone_order_is_document_order():
    region = RegionSpec(RegionId(0), {"z": ["1"], "a": ["2"], "m": ["3"]})
    assert region.zone_labels == ("z", "a", "m")


def test_bldg_at_wing_table():
    assert sum(BLDG_AT_WINGS.values()) == 32 and len(BLDG_AT_WINGS) == 6
