"""
Carrying a model to another campus
==================================

A campus without student housing but with a second copy of ``bldg_AT``,
where visits take twice as long: remove one zone, duplicate another and
rescale its stay time. The result is again a valid model and can feed the
generator directly.
"""

from hiermob.adapt import apply_script, duplicate_zone, remove_zone
from hiermob.datasets import load_example_model
from hiermob.synth import GenerationConfig, generate_trace

campus = load_example_model("campus")
script = [
    {"op": "remove_zone", "label": "bldg_RES"},
    {"op": "duplicate_zone", "label": "bldg_AT", "new_label": "bldg_AT_north"},
    {"op": "scale_time", "label": "bldg_AT_north", "factor": 2.0},
]
other = apply_script(campus, script)
other.validate(1e-2)
print(campus.n_zones, "zones ->", other.n_zones, "zones")
print("new zone stay (min):", other.clusters[0].times[-1] / 60)

trace = generate_trace(other, GenerationConfig(1000, 45.0, seed=0))
visits = sum(len(t.visits) for t in trace.tracks.values())
print(len(trace.tracks), "users,", visits, "zone visits")

# Duplicating and removing the copy gives the original model back.
back = remove_zone(duplicate_zone(campus, "bldg_AT", "tmp"), "tmp")
print("max difference:", abs(back.clusters[0].matrix - campus.clusters[0].matrix).max())
