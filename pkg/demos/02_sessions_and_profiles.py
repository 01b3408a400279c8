"""
From raw samples to user types
==============================

A synthetic campus is polled once a minute (some polls are lost). We pick
the session threshold with the sweep, reduce sessions to handoff traces,
turn each one into a zone-time vector and look at the elbow curve.
"""

import numpy as np

from hiermob.datasets import simulate_campus
from hiermob.model import ModelConfig, fit_region
from hiermob.sessions import filter_handoffs, split_sessions, sweep_threshold

campus = simulate_campus(n_buildings=6, wings=3, aps_per_wing=3, n_users=400, seed=1)
print(campus.store)
root = campus.tree.root

# Threshold sweep: the chosen value balances session count and length.
sweep = sweep_threshold(campus.store, root, range(1, 61))
for t, n, avg, d in sweep.rows[:8]:
    print(f"{t:4.0f} min  {n:6d} sessions  {avg:8.1f} s  distance {d:.3f}")
print("chosen:", sweep.chosen, "min")

# One session before and after the handoff filter.
sessions = split_sessions(campus.store, root, sweep.chosen)
longest = max(sessions, key=len)
print(len(longest), "samples ->", len(filter_handoffs(longest)), "kept entries")

# Full modeling of the campus level.
fit = fit_region(campus.store, root, ModelConfig(k_max=15, restarts=3))
print("elbow curve:", np.round(fit.elbow.distortions, 4))
print("k* =", fit.model.k, " popularities:", np.round(fit.model.popularities, 3))
