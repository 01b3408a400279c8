"""
Reading the bundled campus models
=================================

Three single-type models ship with the package: the whole campus, building
``bldg_AT`` and its ground-floor east wing. They are hand transcriptions, so
rows sum to 1 only within about 1e-3 and must be loaded with a looser
tolerance than fitted models.
"""

import numpy as np

from hiermob.datasets import EXAMPLE_MODELS, load_example_model
from hiermob.model import IN, chord_export, format_model

# Each level refines one zone of the level above.
for name in EXAMPLE_MODELS:
    m = load_example_model(name)
    print(f"{name:>20}: {m.n_zones:2d} zones, region {m.region}")

# The building level in full; stay times are printed in minutes.
bldg = load_example_model("bldg_AT")
print(format_model(bldg))

# Where do sessions start? Row IN of the matrix.
a = bldg.clusters[0].matrix
for zone, p in zip(bldg.zone_labels, a[IN, 2:]):
    print(f"start in {zone:<13} {p:.4f}")

# Chord-diagram input: non-zero flows, entry flows included, exits left out.
rows = chord_export(a, bldg.state_labels)
print(len(rows), "flows, e.g.", rows[:3])
print("largest flow:", max(rows, key=lambda r: r[2]))
print("mean stay over zones (min):", np.round(bldg.clusters[0].times.mean() / 60, 2))
