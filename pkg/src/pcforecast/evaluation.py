"""End-to-end forecasting evaluation without known trajectory correspondences.

Predicted and ground-truth trajectory sets are associated once by a
minimum-cost assignment on pairwise ADE; a threshold sweep over that fixed
assignment then rejects poor matches, tracing out ADE/FDE-over-recall
curves that are integrated into AADE/AFDE over a recall range every
compared method can reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import solve_assignment
from .trajectories import TrajectorySet


class EvaluationError(ValueError):
    """An evaluation request is inconsistent or unsatisfiable."""


@dataclass(frozen=True, eq=False)
class PairwiseCosts:
    """ADE/FDE for every (predicted, ground-truth) trajectory pair.

    Costs are computed over frames valid in BOTH trajectories; pairs with no
    shared valid frame are infinite (unmatchable). FDE uses the last shared
    valid frame.
    """

    ade: np.ndarray            # (U, V) meters
    fde: np.ndarray            # (U, V) meters
    shared_frames: np.ndarray  # (U, V) counts
    pred_ids: tuple[str, ...]
    gt_ids: tuple[str, ...]

    @property
    def num_pred(self) -> int:
        return self.ade.shape[0]

    @property
    def num_gt(self) -> int:
        return self.ade.shape[1]


@dataclass(frozen=True)
class MatchedPair:
    pred_index: int
    gt_index: int
    ade: float
    fde: float


@dataclass(frozen=True, eq=False)
class MatchResult:
    threshold: float
    pairs: tuple[MatchedPair, ...]
    num_pred: int
    num_gt: int

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return self.num_pred - self.tp

    @property
    def fn(self) -> int:
        return self.num_gt - self.tp

    @property
    def recall(self) -> float:
        return self.tp / self.num_gt


@dataclass(frozen=True)
class RecallGrid:
    """Evenly spaced target recalls {1/L, 2/L, ..., 1}."""

    samples: int = 40

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("recall grid needs at least one sample")

    @property
    def recalls(self) -> tuple[float, ...]:
        return tuple(k / self.samples for k in range(1, self.samples + 1))


@dataclass(frozen=True)
class RecallSample:
    grid_recall: float  # requested grid value
    recall: float       # recall actually achieved at the chosen threshold
    ade: float
    fde: float
    threshold: float


@dataclass(frozen=True, eq=False)
class RecallCurve:
    samples: tuple[RecallSample, ...]
    max_recall: float
    matched_count: int
    gt_count: int


@dataclass(frozen=True, eq=False)
class MethodScore:
    aade: float | None
    afde: float | None
    max_recall: float
    unrankable: bool


@dataclass(frozen=True, eq=False)
class ComparisonResult:
    scores: dict  # method name -> MethodScore
    common_recall_ceiling: float
    recall_set_size: int


def pairwise_costs(pred: TrajectorySet, gt: TrajectorySet) -> PairwiseCosts:
    """Masked pairwise ADE/FDE over the shared future horizon [1, N]."""
    if len(pred) == 0 or len(gt) == 0:
        raise EvaluationError("both trajectory sets must be non-empty")
    if pred.horizon != gt.horizon:
        raise EvaluationError(
            f"horizon mismatch: predicted {pred.horizon}, ground truth {gt.horizon}"
        )
    horizon = gt.horizon
    ade = np.full((len(pred), len(gt)), np.inf)
    fde = np.full((len(pred), len(gt)), np.inf)
    shared = np.zeros((len(pred), len(gt)), dtype=np.int64)
    for i, p in enumerate(pred.trajectories):
        p_frames = {t for t in p.positions if 1 <= t <= horizon}
        for j, g in enumerate(gt.trajectories):
            frames = sorted(p_frames & {t for t in g.positions if 1 <= t <= horizon})
            if not frames:
                continue
            errors = [float(np.linalg.norm(p.position(t) - g.position(t)))
                      for t in frames]
            ade[i, j] = sum(errors) / len(errors)
            fde[i, j] = errors[-1]
            shared[i, j] = len(frames)
    return PairwiseCosts(ade, fde, shared, pred.ids, gt.ids)


def assign(costs: PairwiseCosts) -> tuple[MatchedPair, ...]:
    """Minimum-total-ADE partial bijection; infinite pairs are never matched."""
    pairs = solve_assignment(costs.ade)
    return tuple(MatchedPair(i, j, float(costs.ade[i, j]), float(costs.fde[i, j]))
                 for i, j in pairs)


def match_at_threshold(costs: PairwiseCosts, assignment, threshold: float) -> MatchResult:
    """Keep assignment pairs whose ADE is within the threshold as true positives."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    kept = tuple(p for p in assignment if p.ade <= threshold)
    return MatchResult(threshold, kept, costs.num_pred, costs.num_gt)


def ade_fde(result: MatchResult) -> tuple[float, float]:
    """Mean pairwise ADE/FDE over the true positives; undefined when TP = 0."""
    if result.tp == 0:
        raise EvaluationError("ADE/FDE undefined with zero true positives")
    return (sum(p.ade for p in result.pairs) / result.tp,
            sum(p.fde for p in result.pairs) / result.tp)


def recall_curve(costs: PairwiseCosts, assignment,
                 grid: RecallGrid | None = None) -> RecallCurve:
    """ADE/FDE at each grid recall reachable by the fixed assignment.

    For every target recall the smallest pair-ADE threshold achieving it is
    selected; grid recalls above the maximum achievable recall are omitted.
    """
    grid = grid or RecallGrid()
    ordered = sorted(assignment, key=lambda p: p.ade)
    matched = len(ordered)
    gt_count = costs.num_gt
    max_recall = matched / gt_count
    if matched == 0:
        return RecallCurve((), 0.0, 0, gt_count)

    ades = np.array([p.ade for p in ordered])
    samples = []
    for k in range(1, grid.samples + 1):
        # target recall k/L is reachable iff k/L <= matched/gt_count,
        # compared in integers to dodge float rounding at the boundary
        if k * gt_count > matched * grid.samples:
            break
        need = math.ceil(k * gt_count / grid.samples)
        threshold = float(ades[need - 1])
        count = int(np.searchsorted(ades, threshold, side="right"))
        chosen = ordered[:count]
        samples.append(RecallSample(
            grid_recall=k / grid.samples,
            recall=count / gt_count,
            ade=sum(p.ade for p in chosen) / count,
            fde=sum(p.fde for p in chosen) / count,
            threshold=threshold,
        ))
    return RecallCurve(tuple(samples), max_recall, matched, gt_count)


def aade_afde(curves: dict, grid: RecallGrid | None = None) -> ComparisonResult:
    """Integrate each curve over the recall grid up to the common ceiling.

    Methods that cannot reach even the smallest grid recall are flagged
    unrankable and excluded from the ceiling.
    """
    grid = grid or RecallGrid()
    if not curves:
        raise EvaluationError("need at least one method curve")
    rankable = {name: c for name, c in curves.items() if c.samples}
    if not rankable:
        raise EvaluationError(
            "no method reaches the smallest grid recall; nothing to integrate"
        )
    # every curve holds one sample per grid recall it can reach, so the
    # common recall set is just the shortest sample prefix
    set_size = min(len(c.samples) for c in rankable.values())
    ceiling = min(c.max_recall for c in rankable.values())
    scores = {}
    for name, curve in curves.items():
        if name not in rankable:
            scores[name] = MethodScore(None, None, curve.max_recall, True)
            continue
        head = curve.samples[:set_size]
        scores[name] = MethodScore(
            aade=sum(s.ade for s in head) / set_size,
            afde=sum(s.fde for s in head) / set_size,
            max_recall=curve.max_recall,
            unrankable=False,
        )
    return ComparisonResult(scores, ceiling, set_size)


def evaluate_methods(predictions: dict, gt: TrajectorySet,
                     grid: RecallGrid | None = None):
    """Full pipeline for several methods against one ground-truth set.

    Returns (ComparisonResult, {method: RecallCurve}).
    """
    grid = grid or RecallGrid()
    curves = {}
    for name, pred in predictions.items():
        costs = pairwise_costs(pred, gt)
        curves[name] = recall_curve(costs, assign(costs), grid)
    return aade_afde(curves, grid), curves
