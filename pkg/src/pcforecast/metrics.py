"""Distance metrics between scene point clouds: Chamfer, EMD, and flow error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .clouds import PointCloud


@dataclass(frozen=True)
class MetricConfig:
    """EMD tractability knobs; both values are echoed into every report."""

    emd_sample_count: int = 1024
    sampling_seed: int = 0

    def __post_init__(self):
        if self.emd_sample_count < 1:
            raise ValueError("emd_sample_count must be >= 1")


def _require_points(cloud: PointCloud, name: str) -> np.ndarray:
    if len(cloud) == 0:
        raise ValueError(f"{name} cloud is empty; metric undefined")
    return cloud.points


def _nearest_sq_dists(query: np.ndarray, target: np.ndarray) -> np.ndarray:
    # The tree only picks the neighbor; the squared distance is recomputed
    # from coordinates so values match the brute-force double loop bitwise.
    _, idx = cKDTree(target).query(query, k=1)
    diff = query - target[idx]
    return (diff * diff).sum(axis=1)


def chamfer(a: PointCloud, b: PointCloud, normalized: bool = False) -> float:
    """Symmetric sum of squared nearest-neighbor distances (meters^2).

    ``normalized=True`` divides each directed sum by its own cloud size,
    making the value comparable across cloud sizes.
    """
    pa = _require_points(a, "first")
    pb = _require_points(b, "second")
    ab = _nearest_sq_dists(pa, pb)
    ba = _nearest_sq_dists(pb, pa)
    if normalized:
        return float(ab.mean() + ba.mean())
    return float(ab.sum() + ba.sum())


def _resample(points: np.ndarray, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = points.shape[0]
    if k == count:
        return points
    if k > count:
        idx = rng.choice(k, size=count, replace=False)
    else:
        extra = rng.choice(k, size=count - k, replace=True)
        idx = np.concatenate([np.arange(k), extra])
    return points[idx]


def emd(a: PointCloud, b: PointCloud, config: MetricConfig | None = None) -> float:
    """Earth Mover's Distance (meters) on seeded fixed-size resamples.

    Both clouds are deterministically subsampled (or padded by resampling
    with replacement) to ``config.emd_sample_count`` points, then matched
    one-to-one by an exact assignment solve; the optimal total L2 cost is
    divided by the sample count.
    """
    config = config or MetricConfig()
    pa = _resample(_require_points(a, "first"), config.emd_sample_count,
                   config.sampling_seed)
    pb = _resample(_require_points(b, "second"), config.emd_sample_count,
                   config.sampling_seed)
    cost = cdist(pa, pb)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / config.emd_sample_count)


def ppfe(predicted: PointCloud, target: PointCloud,
         correspondences) -> float:
    """Per-point flow error: mean L2 gap between predicted and true flow.

    ``correspondences`` pairs predicted-point indices with target-point
    indices; both flows share the same source positions, so the error
    reduces to the distance between corresponded points.
    """
    pairs = np.asarray(list(correspondences), dtype=np.int64)
    if pairs.size == 0:
        raise ValueError("empty correspondence set")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("correspondences must be (pred_index, target_index) pairs")
    pred_idx, tgt_idx = pairs[:, 0], pairs[:, 1]
    if pred_idx.min() < 0 or pred_idx.max() >= len(predicted):
        raise IndexError("predicted index out of range")
    if tgt_idx.min() < 0 or tgt_idx.max() >= len(target):
        raise IndexError("target index out of range")
    if len(np.unique(pred_idx)) != len(pairs) or len(np.unique(tgt_idx)) != len(pairs):
        raise ValueError("correspondences must be bijective on the matched subset")
    diff = predicted.points[pred_idx] - target.points[tgt_idx]
    return float(np.linalg.norm(diff, axis=1).mean())


def metric_report(metric: str, value: float, normalized: bool,
                  config: MetricConfig | None = None) -> dict:
    """One serializable report entry; EMD reports carry their sampling knobs."""
    report = {"metric": metric, "value": value, "normalized": normalized}
    if config is not None:
        report["emd_sample_count"] = config.emd_sample_count
        report["seed"] = config.sampling_seed
    return report
