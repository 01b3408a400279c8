"""Model comparison by RMSE and the regenerate-and-refit round trip."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .hierarchy import RegionSpec, flat_region
from .ingest import SampleStore
from .model import IN, OUT, MobilityModel, ModelConfig, fit_region
from .synth import GenerationConfig, generate_trace


def _aligned(model_a: MobilityModel, model_b: MobilityModel) -> list[np.ndarray]:
    """Matrices of ``model_b`` with states reordered to ``model_a``'s zones."""
    if set(model_a.zone_labels) != set(model_b.zone_labels) or model_a.n_zones != model_b.n_zones:
        raise ValueError("models cover different zones")
    perm = [0, 1] + [model_b.zone_labels.index(z) + 2 for z in model_a.zone_labels]
    return [np.asarray(c.matrix)[np.ix_(perm, perm)] for c in model_b.clusters]


def _aligned_times(model_a: MobilityModel, model_b: MobilityModel) -> list[np.ndarray]:
    perm = [model_b.zone_labels.index(z) for z in model_a.zone_labels]
    return [np.asarray(c.times)[perm] for c in model_b.clusters]


def cost_matrix(model_a: MobilityModel, model_b: MobilityModel) -> np.ndarray:
    mats_b = _aligned(model_a, model_b)
    return np.array([[np.linalg.norm(np.asarray(ca.matrix) - mb) for mb in mats_b] for ca in model_a.clusters])


def map_clusters(model_a: MobilityModel, model_b: MobilityModel) -> list[int]:
    """Cluster bijection minimizing the total Frobenius distance between
    matched transition matrices. ``mapping[i]`` is the cluster of ``model_b``
    paired with cluster ``i`` of ``model_a``."""
    if model_a.k != model_b.k:
        raise ValueError(f"cluster counts differ ({model_a.k} vs {model_b.k}); force equal k")
    rows, cols = linear_sum_assignment(cost_matrix(model_a, model_b))
    mapping = [0] * model_a.k
    for r, c in zip(rows, cols):
        mapping[int(r)] = int(c)
    return mapping


@dataclass
class RmseReport:
    mapping: list
    matrix_rmse: list
    time_rmse_s: list
    time_rmse_pct: list

    @property
    def matrix_avg(self) -> float:
        return float(np.mean(self.matrix_rmse))

    @property
    def matrix_max(self) -> float:
        return float(np.max(self.matrix_rmse))

    @property
    def time_avg_s(self) -> float:
        return float(np.mean(self.time_rmse_s))

    @property
    def time_max_s(self) -> float:
        return float(np.max(self.time_rmse_s))

    @property
    def time_avg_pct(self) -> float:
        return float(np.mean(self.time_rmse_pct))

    @property
    def time_max_pct(self) -> float:
        return float(np.max(self.time_rmse_pct))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(matrix_avg=self.matrix_avg, matrix_max=self.matrix_max,
                 time_avg_s=self.time_avg_s, time_max_s=self.time_max_s,
                 time_avg_pct=self.time_avg_pct, time_max_pct=self.time_max_pct)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self, name: str = "region") -> str:
        head = f"{'':<24}| {'matrix avg':>14} {'matrix max':>14} | {'time avg (s)':>18} {'time max (s)':>18}"
        row = (f"{name:<24}| {self.matrix_avg:>6.3f} ({100 * self.matrix_avg:4.1f}%) "
               f"{self.matrix_max:>6.3f} ({100 * self.matrix_max:4.1f}%) | "
               f"{self.time_avg_s:>9.3f} ({self.time_avg_pct:4.1f}%) {self.time_max_s:>9.3f} ({self.time_max_pct:4.1f}%)")
        return head + "\n" + "-" * len(head) + "\n" + row + "\n"


def _structural_mask(n_states: int) -> np.ndarray:
    mask = np.ones((n_states, n_states), dtype=bool)
    mask[OUT, :] = False
    mask[:, IN] = False
    mask[IN, OUT] = False
    return mask


def rmse(model_a: MobilityModel, model_b: MobilityModel, mapping: Optional[Sequence[int]] = None,
         exclude_structural: bool = False) -> RmseReport:
    """Per-cluster RMSE between matched transition matrices and time vectors.

    Matrix RMSE averages over all ``(n+2)**2`` cells unless
    ``exclude_structural`` drops the cells fixed at zero by construction (row
    OUT, column IN, IN->OUT). Time RMSE is in seconds; its percentage is
    relative to the mean of the non-zero stay times of the ``model_a`` cluster.
    """
    if mapping is None:
        mapping = list(range(model_a.k))
    if sorted(mapping) != list(range(model_b.k)) or len(mapping) != model_a.k:
        raise ValueError(f"mapping {mapping} is not a bijection between clusters")
    mats_b = _aligned(model_a, model_b)
    times_b = _aligned_times(model_a, model_b)
    mask = _structural_mask(model_a.n_zones + 2) if exclude_structural else None
    m_err, t_err, t_pct = [], [], []
    for i, j in enumerate(mapping):
        d = np.asarray(model_a.clusters[i].matrix) - mats_b[j]
        sq = d[mask] ** 2 if mask is not None else d ** 2
        m_err.append(float(np.sqrt(sq.mean())))
        ta = np.asarray(model_a.clusters[i].times, dtype=float)
        te = float(np.sqrt(np.mean((ta - times_b[j]) ** 2)))
        t_err.append(te)
        base = ta[ta > 0].mean() if np.any(ta > 0) else 0.0
        t_pct.append(100.0 * te / base if base > 0 else (0.0 if te == 0 else math.inf))
    return RmseReport(list(mapping), m_err, t_err, t_pct)


def refit_synthetic(model: MobilityModel, n_users: int, seed: int = 0,
                    mean_interarrival="from-data", config: Optional[ModelConfig] = None) -> MobilityModel:
    """Generate ``n_users`` synthetic sessions from ``model`` and model them
    again with k forced to ``model.k``.

    Each synthetic user is one session, so the refit does not split on gaps.
    """
    if mean_interarrival == "from-data" and not model.provenance.get("mean_interarrival_s"):
        mean_interarrival = 60.0
    trace = generate_trace(model, GenerationConfig(n_users, mean_interarrival, seed=seed))
    base = config or ModelConfig()
    cfg = replace(base, threshold=math.inf, k=model.k)
    region = flat_region(model.zone_labels, model.region)
    return fit_region(trace.to_store(), region, cfg).model


def round_trip(store: SampleStore, region: RegionSpec, config: ModelConfig = ModelConfig(),
               seed: Optional[int] = None) -> tuple[RmseReport, MobilityModel, MobilityModel]:
    """Model the data, regenerate as many sessions as were observed, model the
    synthetic trace with the same k, match clusters and compare.

    Returns the report together with both models.
    """
    m1 = fit_region(store, region, config).model
    n = m1.provenance["n_sessions"]
    m2 = refit_synthetic(m1, n, seed=config.seed if seed is None else seed, config=config)
    return rmse(m1, m2, map_clusters(m1, m2)), m1, m2
