"""Bundled example models, example hierarchies and a synthetic campus.

The three ``profile_*`` models are one user type per level of a university
campus (campus, building bldg_AT, ground-floor east wing of bldg_AT). They are
hand transcriptions, so their rows only sum to 1 within about 1e-3; load them
with ``row_tol=1e-2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .hierarchy import HierarchyTree, load_hierarchy
from .ingest import Sample, SampleStore
from .model import MobilityModel, deserialize

TRANSCRIBED_TOL = 1e-2

EXAMPLE_MODELS = {
    "campus": "profile_lv0_campus.json",
    "bldg_AT": "profile_lv1_bldg_at.json",
    "bldg_AT/0_fl_East": "profile_lv2_bldg_at_0_fl_east.json",
}

# APs per building at level 0; bldg_AT carries the 32 APs its six wings list.
CAMPUS_BUILDINGS = {
    "bldg_AT": 32, "bldg_CEP": 14, "bldg_CJ": 7, "bldg_CL": 1, "bldg_CTI": 9, "bldg_EIV": 11,
    "bldg_GC": 35, "bldg_IE": 7, "bldg_ITD": 16, "bldg_JO": 63, "bldg_MA": 43, "bldg_MEN": 8,
    "bldg_MO": 52, "bldg_RES": 18, "bldg_RL": 42, "bldg_SCT": 27, "bldg_SE": 8, "bldg_SL": 28,
}
BLDG_AT_WINGS = {"basement_fl": 3, "0_fl_North": 7, "0_fl_East": 6,
                 "1st_fl_East": 6, "1st_fl_North": 7, "2nd_fl": 3}


def example_model_text(name: str) -> str:
    return resources.files("hiermob.data").joinpath(EXAMPLE_MODELS[name]).read_text(encoding="utf-8")


def load_example_model(name: str) -> MobilityModel:
    return deserialize(example_model_text(name), row_tol=TRANSCRIBED_TOL)


def example_hierarchy_documents() -> list[dict]:
    """Campus level, building bldg_AT, and its wing 0_fl_East."""
    def ap_names(building, n):
        return [f"{building}-AP{i:02d}" for i in range(1, n + 1)]

    wings = {}
    for wing, n in BLDG_AT_WINGS.items():
        if wing == "0_fl_East":
            wings[wing] = [f"AP-OO-03-{i:02d}" for i in range(1, n + 1)]
        else:
            wings[wing] = [f"AP-AT-{wing}-{i:02d}" for i in range(1, n + 1)]
    lv0 = {b: (sum(wings.values(), []) if b == "bldg_AT" else ap_names(b, n))
           for b, n in CAMPUS_BUILDINGS.items()}
    return [
        {"region": {"level": 0, "building": None, "wing": None}, "zones": lv0},
        {"region": {"level": 1, "building": "bldg_AT", "wing": None}, "zones": wings},
        {"region": {"level": 2, "building": "bldg_AT", "wing": "0_fl_East"},
         "zones": {ap: [ap] for ap in wings["0_fl_East"]}},
    ]


def campus_hierarchy_documents(wings_per_building, aps_per_wing=2) -> list[dict]:
    """Complete three-level hierarchy: buildings, wings, one zone per AP.

    ``wings_per_building`` is a list with one wing count per building;
    ``aps_per_wing`` is an int or a matching list of lists.
    """
    docs_lv1, docs_lv2, lv0 = [], [], {}
    for b, n_wings in enumerate(wings_per_building):
        bname = f"B{b:02d}"
        wings = {}
        for w in range(n_wings):
            n_aps = aps_per_wing if isinstance(aps_per_wing, int) else aps_per_wing[b][w]
            wname = f"W{w}"
            aps = [f"{bname}-{wname}-AP{a}" for a in range(n_aps)]
            wings[wname] = aps
            docs_lv2.append({"region": {"level": 2, "building": bname, "wing": wname},
                             "zones": {ap: [ap] for ap in aps}})
        lv0[bname] = sum(wings.values(), [])
        docs_lv1.append({"region": {"level": 1, "building": bname, "wing": None}, "zones": wings})
    lv0_doc = {"region": {"level": 0, "building": None, "wing": None}, "zones": lv0}
    return [lv0_doc] + docs_lv1 + docs_lv2


@dataclass
class Campus:
    documents: list
    tree: HierarchyTree
    store: SampleStore

    @property
    def ap_ids(self) -> list[str]:
        return sorted(self.tree.root.ap_set)


def simulate_campus(n_buildings: int = 12, wings: int = 3, aps_per_wing: int = 3,
                    n_users: int = 600, days: int = 3, seed: int = 0,
                    p_stay_wing: float = 0.75, p_stay_building: float = 0.9,
                    mean_stay_min: float = 12.0, poll_s: int = 60,
                    p_miss: float = 0.3, building_skew: float = 1.0) -> Campus:
    """Per-minute access log of a synthetic campus.

    Every user has a home AP in a building drawn with Zipf weights
    ``1 / rank**building_skew`` (0 gives uniform buildings). A day's visit starts there; after each
    exponential stay the user moves to another AP of the same wing with
    probability ``p_stay_wing``, otherwise to another wing of the same
    building with probability ``p_stay_building``, otherwise to a random
    building, and leaves after a random number of moves. Visits of the same
    user are a day apart. Each poll after the first of a stay is missed with
    probability ``p_miss``.
    """
    rng = np.random.default_rng(seed)
    docs = campus_hierarchy_documents([wings] * n_buildings, aps_per_wing)
    tree = load_hierarchy(docs)
    layout = [[[f"B{b:02d}-W{w}-AP{a}" for a in range(aps_per_wing)] for w in range(wings)]
              for b in range(n_buildings)]
    popularity = 1.0 / np.arange(1, n_buildings + 1) ** building_skew
    popularity /= popularity.sum()
    samples = []
    for u in range(n_users):
        user = f"user{u:05d}"
        hb = int(rng.choice(n_buildings, p=popularity))
        hw, ha = rng.integers(wings), rng.integers(aps_per_wing)
        for day in range(days):
            t = day * 86400 + int(rng.integers(8 * 3600, 12 * 3600))
            b, w, a = hb, hw, ha
            for _ in range(1 + rng.poisson(2.0)):
                stay = max(poll_s, int(rng.exponential(mean_stay_min * 60)))
                for ts in range(t, t + stay, poll_s):
                    if ts == t or rng.random() >= p_miss:
                        samples.append(Sample(ts, user, layout[b][w][a]))
                t += stay
                r = rng.random()
                if r < p_stay_wing:
                    a = int(rng.integers(aps_per_wing))
                elif r < p_stay_wing + (1 - p_stay_wing) * p_stay_building:
                    w, a = int(rng.integers(wings)), int(rng.integers(aps_per_wing))
                else:
                    b, w, a = (int(rng.integers(n_buildings)), int(rng.integers(wings)),
                               int(rng.integers(aps_per_wing)))
            samples.append(Sample(t, user, layout[b][w][a]))
    return Campus(docs, tree, SampleStore(samples))
