import numpy as np
import pytest

from hiermob.hierarchy import RegionId, RegionSpec
from hiermob.ingest import Sample, SampleStore
from hiermob.model import ClusterModel, MobilityModel


def store_from(rows):
    """Store from ``(timestamp, user, ap)`` triples."""
    return SampleStore([Sample(t, u, a) for t, u, a in rows])


def region_of(zones, rid=RegionId(0)):
    return RegionSpec(rid, zones)


def one_cluster(zone_labels, matrix, times, rid=RegionId(0)):
    return MobilityModel(rid, tuple(zone_labels),
                         [ClusterModel(np.asarray(matrix, float), np.asarray(times, float), 1.0, 1)],
                         {})


def ground_truth_model():
    """Three user types over six zones, each with its own favourite pair."""
    labels = ["Z0", "Z1", "Z2", "Z3", "Z4", "Z5"]
    clusters = []
    pops = [0.5, 0.3, 0.2]
    for c in range(3):
        a, b = 2 * c, 2 * c + 1
        m = np.zeros((8, 8))
        m[0, 2 + a], m[0, 2 + b] = 0.7, 0.3
        for z in range(6):
            row = np.zeros(8)
            row[1] = 0.35
            if z == a:
                row[2 + b] = 0.55
            elif z == b:
                row[2 + a] = 0.55
            else:
                row[2 + a] = 0.55
            others = [o for o in range(6) if o not in (z, a, b)]
            row[[2 + o for o in others]] = 0.10 / len(others)
            m[2 + z] = row
        times = np.full(6, 300.0)
        times[a], times[b] = 1800.0, 900.0
        clusters.append(ClusterModel(m, times, pops[c], 0))
    return MobilityModel(RegionId(0), tuple(labels), clusters, {"mean_interarrival_s": 30.0})


@pytest.fixture
def gt_model():
    return ground_truth_model()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
