import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiermob.adapt import (AdaptationError, apply_script, duplicate_zone, load_script, remove_zone, rename_zone,
                           scale_time, set_weights, with_region)
from hiermob.datasets import load_example_model
from hiermob.hierarchy import RegionId
from hiermob.model import IN, OUT, ClusterModel, MobilityModel, serialize

from conftest import one_cluster


def eq3():
    return load_example_model("bldg_AT")


def idx(model, label):
    return model.state_labels.index(label)


def test_remove_renormalizes_by_hand():
    m = eq3()
    a0 = m.clusters[0].matrix
    out = remove_zone(m, "0_fl_North")
    a = out.clusters[0].matrix
    assert out.zone_labels == ("1st_fl_East", "1st_fl_North", "0_fl_East", "2nd_fl")
    in_row = np.array([0.0364, 0.0182, 0.0364, 0.909])
    np.testing.assert_allclose(a[IN, 2:], in_row / in_row.sum())
    row = a0[idx(m, "2nd_fl")]
    keep = [OUT, idx(m, "1st_fl_East"), idx(m, "1st_fl_North"), idx(m, "0_fl_East")]
    expect = row[keep] / (1 - 0.027)
    got = a[idx(out, "2nd_fl")][[OUT, 2, 3, 4]]
    np.testing.assert_allclose(got, expect)
    out.validate(1e-2)


def test_remove_isolated_zone_changes_nothing_else():
    m = one_cluster(["A", "B", "C"],
                    [[0, 0, .6, .4, 0], [0] * 5, [0, .5, 0, .5, 0], [0, .3, .7, 0, 0], [0, 1, 0, 0, 0]],
                    [10, 20, 30])
    out = remove_zone(m, "C")
    np.testing.assert_array_equal(out.clusters[0].matrix, m.clusters[0].matrix[:4, :4])
    np.testing.assert_array_equal(out.clusters[0].times, [10, 20])


def test_removals_commute_on_unreachable_zones():
    a = np.zeros((6, 6))
    a[IN, 2:] = .25
    a[2, [OUT, 3]] = .5
    a[3, [OUT, 2]] = .5
    a[4, [OUT, 5]] = .5
    a[5, [OUT, 4]] = .5
    m = one_cluster(["A", "B", "C", "D"], a, [1, 2, 3, 4])
    x = remove_zone(remove_zone(m, "A"), "C")
    y = remove_zone(remove_zone(m, "C"), "A")
    np.testing.assert_allclose(x.clusters[0].matrix, y.clusters[0].matrix, atol=1e-15)


def test_duplicate_single_zone():
    out = duplicate_zone(one_cluster(["A"], [[0, 0, 1], [0, 0, 0], [0, 1, 0]], [60]), "A", "A2")
    np.testing.assert_allclose(out.clusters[0].matrix[IN, 2:], [.5, .5])
    out.validate()


def test_duplicate_eq3():
    out = duplicate_zone(eq3(), "2nd_fl", "2nd_fl_b")
    a = out.clusters[0].matrix
    assert a[IN, idx(out, "2nd_fl")] == pytest.approx(0.4545)
    assert a[IN, idx(out, "2nd_fl_b")] == pytest.approx(0.4545)
    assert out.clusters[0].times[-1] == out.clusters[0].times[out.zone_labels.index("2nd_fl")]


def test_duplicate_then_remove_eq3_identity():
    m = eq3()
    back = remove_zone(duplicate_zone(m, "2nd_fl", "copy"), "copy")
    np.testing.assert_allclose(back.clusters[0].matrix, m.clusters[0].matrix, atol=1e-9)
    assert back.zone_labels == m.zone_labels
    assert "copy" not in back.provenance.get("twins", {})


@st.composite
def models(draw):
    n = draw(st.integers(1, 5))
    k = draw(st.integers(1, 3))
    labels = [f"Z{i}" for i in range(n)]
    clusters = []
    for _ in range(k):
        a = np.zeros((n + 2, n + 2))
        w = np.array(draw(st.lists(st.floats(0.01, 1), min_size=n, max_size=n)))
        a[IN, 2:] = w / w.sum()
        for i in range(n):
            row = np.array(draw(st.lists(st.floats(0, 1), min_size=n + 1, max_size=n + 1)))
            row[0] += 0.05  # some exit mass
            r = np.zeros(n + 2)
            r[OUT] = row[0]
            r[2:] = row[1:]
            r[2 + i] = 0.0  # handoff traces have no self-loops
            a[2 + i] = r / r.sum()
        times = np.array(draw(st.lists(st.floats(0, 5000), min_size=n, max_size=n)))
        clusters.append(ClusterModel(a, times, 1.0 / k, 1))
    return MobilityModel(RegionId(0), tuple(labels), clusters, {})


@settings(max_examples=300, deadline=None)
@given(models(), st.data())
def test_duplicate_remove_inverse(model, data):
    label = data.draw(st.sampled_from(model.zone_labels))
    dup = duplicate_zone(model, label, "twin")
    dup.validate(1e-9)
    back = remove_zone(dup, "twin")
    for c0, c1 in zip(model.clusters, back.clusters):
        np.testing.assert_allclose(c1.matrix, c0.matrix, atol=1e-9)
        np.testing.assert_allclose(c1.times, c0.times, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(models(), st.data())
def test_remove_keeps_invariants(model, data):
    if model.n_zones < 2:
        return
    label = data.draw(st.sampled_from(model.zone_labels))
    out = remove_zone(model, label)
    out.validate(1e-9)
    assert label not in out.zone_labels


def test_script_empty_is_identity():
    m = eq3()
    assert serialize(apply_script(m, [])) == serialize(m)


def test_script_unknown_label_reports_index():
    with pytest.raises(AdaptationError) as err:
        apply_script(eq3(), [{"op": "scale_time", "label": "2nd_fl", "factor": 2},
                             {"op": "remove_zone", "label": "nowhere"}])
    assert err.value.index == 1
    assert "directive 1" in str(err.value)


def test_fig3_style_script():
    # university B -> A: no housing, one more classroom building whose zones take twice as long
    m = load_example_model("campus")
    script = [{"op": "remove_zone", "label": "bldg_RES"},
              {"op": "duplicate_zone", "label": "bldg_AT", "new_label": "bldg_AT2"},
              {"op": "scale_time", "label": "bldg_AT2", "factor": 2.0}]
    out = apply_script(m, script)
    out.validate(1e-2)
    assert "bldg_RES" not in out.zone_labels and out.zone_labels[-1] == "bldg_AT2"


def test_unknown_directive():
    with pytest.raises(AdaptationError) as err:
        apply_script(eq3(), [{"op": "explode"}])
    assert err.value.index == 0


def test_rename_and_twins_follow():
    m = duplicate_zone(eq3(), "2nd_fl", "copy")
    r = rename_zone(m, "copy", "annex")
    assert r.provenance["twins"] == {"annex": "2nd_fl"}
    back = remove_zone(r, "annex")
    np.testing.assert_allclose(back.clusters[0].matrix, eq3().clusters[0].matrix, atol=1e-9)
    with pytest.raises(AdaptationError):
        rename_zone(m, "copy", "2nd_fl")


def test_set_weights_and_region(gt_model):
    out = set_weights(gt_model, [0.2, 0.2, 0.6])
    np.testing.assert_allclose(out.popularities, [0.2, 0.2, 0.6])
    with pytest.raises(AdaptationError):
        set_weights(gt_model, [1.0])
    assert with_region(gt_model, RegionId(1, "X")).region == RegionId(1, "X")
    with pytest.raises(AdaptationError):
        scale_time(gt_model, "Z0", -1)


def test_cannot_remove_last_zone():
    with pytest.raises(AdaptationError):
        remove_zone(one_cluster(["A"], [[0, 0, 1], [0, 0, 0], [0, 1, 0]], [60]), "A")


def test_cluster_without_entry_is_dropped():
    a1 = np.zeros((4, 4))
    a1[IN, 2] = 1
    a1[2, OUT] = a1[3, OUT] = 1
    a2 = np.zeros((4, 4))
    a2[IN, 3] = 1
    a2[2, OUT] = a2[3, OUT] = 1
    m = MobilityModel(RegionId(0), ("A", "B"), [ClusterModel(a1, np.ones(2), .4, 1), ClusterModel(a2, np.ones(2), .6, 1)], {})
    out = remove_zone(m, "A")
    assert out.k == 1 and out.popularities.tolist() == [1.0]


def test_load_script(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"op": "remove_zone"}')
    with pytest.raises(AdaptationError):
        load_script(p)
