"""
Regenerate and refit
====================

A model is only useful for simulation if traces drawn from it look like the
data. We generate sessions from a known three-type model, model them again
with k fixed, pair up the clusters and measure the RMSE.
"""

import numpy as np

from hiermob.hierarchy import RegionId
from hiermob.model import ClusterModel, MobilityModel
from hiermob.synth import GenerationConfig, generate_trace
from hiermob.validate import map_clusters, refit_synthetic, rmse

labels = ["lab", "library", "canteen", "office"]


def cluster(entry, moves, stay, popularity):
    a = np.zeros((6, 6))
    a[0, 2:] = entry
    for i, row in enumerate(moves):
        a[2 + i, 1:] = row  # OUT followed by the zones
    return ClusterModel(a, np.array(stay, float), popularity, 0)


truth = MobilityModel(RegionId(0), tuple(labels), [
    cluster([.7, .3, 0, 0], [[.3, 0, .5, .2, 0], [.4, .6, 0, 0, 0], [1, 0, 0, 0, 0], [1, 0, 0, 0, 0]],
            [5400, 2400, 0, 0], .5),
    cluster([0, 0, .2, .8], [[1, 0, 0, 0, 0], [1, 0, 0, 0, 0], [.6, 0, 0, 0, .4], [.5, 0, 0, .5, 0]],
            [0, 0, 1500, 7200], .5),
], {"mean_interarrival_s": 20.0})

trace = generate_trace(truth, GenerationConfig(500, seed=1))
print(len(trace.samples), "samples from 500 users; first rows:")
print("\n".join(trace.to_csv().splitlines()[:4]))

refit = refit_synthetic(truth, 20_000, seed=3)
report = rmse(truth, refit, map_clusters(truth, refit))
print(report.to_table("4-zone toy"))
