import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcforecast.evaluation import (
    EvaluationError,
    RecallGrid,
    aade_afde,
    ade_fde,
    assign,
    evaluate_methods,
    match_at_threshold,
    pairwise_costs,
    recall_curve,
)
from pcforecast.trajectories import Trajectory, TrajectorySet


def make_set(role, horizon, *trajs):
    return TrajectorySet(
        tuple(Trajectory(f"{role[0]}{i}", positions)
              for i, positions in enumerate(trajs)),
        role=role, horizon=horizon)


def line(frames, offset=(0.0, 0.0), speed=1.0):
    return {t: [t * speed + offset[0], offset[1]] for t in frames}


class TestPairwiseCosts:
    def test_exact_match_zero(self):
        gt = make_set("ground_truth", 3, line([1, 2, 3]))
        pred = make_set("predicted", 3, line([1, 2, 3]))
        costs = pairwise_costs(pred, gt)
        assert costs.ade[0, 0] == 0.0
        assert costs.fde[0, 0] == 0.0

    def test_constant_offset(self):
        gt = make_set("ground_truth", 3, line([1, 2, 3]))
        pred = make_set("predicted", 3, line([1, 2, 3], offset=(0.5, 0.0)))
        costs = pairwise_costs(pred, gt)
        assert costs.ade[0, 0] == pytest.approx(0.5)
        assert costs.fde[0, 0] == pytest.approx(0.5)

    def test_masked_frames_hand_case(self):
        # GT valid at {1, 3}; prediction valid everywhere with offsets
        # 0.2 at frame 1 and 0.6 at frame 3
        gt = make_set("ground_truth", 3, {1: [0.0, 0.0], 3: [2.0, 0.0]})
        pred = make_set("predicted", 3,
                        {1: [0.2, 0.0], 2: [1.0, 0.0], 3: [2.6, 0.0]})
        costs = pairwise_costs(pred, gt)
        assert costs.ade[0, 0] == pytest.approx(0.4)
        assert costs.fde[0, 0] == pytest.approx(0.6)
        assert costs.shared_frames[0, 0] == 2

    def test_fde_uses_last_shared_frame(self):
        # prediction stops at frame 2, so the shared trail ends there
        gt = make_set("ground_truth", 4, {1: [0.0, 0.0], 2: [0.0, 0.0],
                                          4: [0.0, 0.0]})
        pred = make_set("predicted", 4, {1: [1.0, 0.0], 2: [3.0, 0.0]})
        costs = pairwise_costs(pred, gt)
        assert costs.fde[0, 0] == pytest.approx(3.0)

    def test_no_shared_frames_infinite(self):
        gt = make_set("ground_truth", 4, {1: [0.0, 0.0], 2: [0.0, 0.0]})
        pred = make_set("predicted", 4, {3: [0.0, 0.0], 4: [0.0, 0.0]})
        costs = pairwise_costs(pred, gt)
        assert np.isinf(costs.ade[0, 0])
        assert np.isinf(costs.fde[0, 0])

    def test_frames_outside_horizon_ignored(self):
        gt = make_set("ground_truth", 2, {0: [9.0, 9.0], 1: [0.0, 0.0],
                                          2: [0.0, 0.0]})
        pred = make_set("predicted", 2, {0: [0.0, 0.0], 1: [1.0, 0.0],
                                         2: [1.0, 0.0]})
        costs = pairwise_costs(pred, gt)
        assert costs.ade[0, 0] == pytest.approx(1.0)

    def test_horizon_mismatch_rejected(self):
        gt = make_set("ground_truth", 3, line([1, 2, 3]))
        pred = make_set("predicted", 2, line([1, 2]))
        with pytest.raises(EvaluationError, match="horizon"):
            pairwise_costs(pred, gt)

    def test_empty_set_rejected(self):
        gt = make_set("ground_truth", 3, line([1, 2, 3]))
        with pytest.raises(Exception):
            pairwise_costs(TrajectorySet((), "predicted", 3), gt)


class TestMatching:
    def make_costs(self, ades, num_gt=None):
        """Pairwise costs with controlled per-pair ADEs on the diagonal."""
        horizon = 1
        gt = make_set("ground_truth", horizon,
                      *[{1: [0.0, float(j)]} for j in range(num_gt or len(ades))])
        pred = make_set("predicted", horizon,
                        *[{1: [a, float(i)]} for i, a in enumerate(ades)])
        return pairwise_costs(pred, gt)

    def test_threshold_below_all(self):
        costs = self.make_costs([0.5, 0.7])
        result = match_at_threshold(costs, assign(costs), 0.1)
        assert result.tp == 0
        assert result.recall == 0.0

    def test_threshold_infinite_keeps_all(self):
        costs = self.make_costs([0.5, 0.7])
        pairs = assign(costs)
        result = match_at_threshold(costs, pairs, np.inf)
        assert result.tp == len(pairs)

    def test_hand_counts(self):
        # assignment ADEs {0.3, 0.7} over V=4 GT, threshold 0.5 -> recall 1/4
        costs = self.make_costs([0.3, 0.7], num_gt=4)
        result = match_at_threshold(costs, assign(costs), 0.5)
        assert result.tp == 1
        assert result.fp == 1
        assert result.fn == 3
        assert result.recall == pytest.approx(0.25)

    def test_counting_identity(self):
        costs = self.make_costs([0.1, 0.4, 0.9], num_gt=5)
        pairs = assign(costs)
        for threshold in [0.0, 0.2, 0.5, 1.0]:
            r = match_at_threshold(costs, pairs, threshold)
            assert r.tp + r.fp == costs.num_pred
            assert r.tp + r.fn == costs.num_gt

    def test_ade_fde_means(self):
        costs = self.make_costs([0.2, 0.6])
        result = match_at_threshold(costs, assign(costs), 1.0)
        ade, fde = ade_fde(result)
        assert ade == pytest.approx(0.4)

    def test_ade_fde_undefined_at_zero_tp(self):
        costs = self.make_costs([0.5])
        result = match_at_threshold(costs, assign(costs), 0.0)
        with pytest.raises(EvaluationError, match="zero true positives"):
            ade_fde(result)

    def test_random_tp_mean_matches_loop(self):
        rng = np.random.default_rng(3)
        ades = rng.uniform(0.1, 2.0, size=5)
        costs = self.make_costs(list(ades))
        result = match_at_threshold(costs, assign(costs), np.inf)
        ade, fde = ade_fde(result)
        assert ade == pytest.approx(float(np.mean(sorted(ades))))


class TestRecallCurve:
    def test_single_pair_fills_every_grid_recall(self):
        traj_gt = make_set("ground_truth", 1, {1: [0.0, 0.0]})
        traj_pred = make_set("predicted", 1, {1: [0.5, 0.0]})
        costs = pairwise_costs(traj_pred, traj_gt)
        curve = recall_curve(costs, assign(costs), RecallGrid(40))
        assert len(curve.samples) == 40
        assert all(s.recall == 1.0 for s in curve.samples)
        assert all(s.threshold == pytest.approx(0.5) for s in curve.samples)
        assert all(s.ade == pytest.approx(0.5) for s in curve.samples)

    def test_grid_truncated_at_max_recall(self):
        # 17 of 40 GT matched -> ceiling 0.425 -> 17 usable grid recalls
        horizon = 1
        gt = make_set("ground_truth", horizon,
                      *[{1: [0.0, 3.0 * j]} for j in range(40)])
        pred = make_set("predicted", horizon,
                        *[{1: [0.1, 3.0 * j]} for j in range(17)])
        costs = pairwise_costs(pred, gt)
        curve = recall_curve(costs, assign(costs), RecallGrid(40))
        assert curve.max_recall == pytest.approx(0.425)
        assert len(curve.samples) == 17
        assert [s.grid_recall for s in curve.samples] == \
            pytest.approx([0.025 * k for k in range(1, 18)])

    def test_three_pair_sweep(self):
        gt = make_set("ground_truth", 1, *[{1: [0.0, 9.0 * j]} for j in range(3)])
        pred = make_set("predicted", 1,
                        {1: [0.1, 0.0]}, {1: [0.2, 9.0]}, {1: [0.9, 18.0]})
        costs = pairwise_costs(pred, gt)
        curve = recall_curve(costs, assign(costs), RecallGrid(3))
        recalls = [s.recall for s in curve.samples]
        ades = [s.ade for s in curve.samples]
        thresholds = [s.threshold for s in curve.samples]
        assert recalls == pytest.approx([1 / 3, 2 / 3, 1.0])
        assert thresholds == pytest.approx([0.1, 0.2, 0.9])
        assert ades == pytest.approx([0.1, 0.15, 0.4])

    def test_empty_assignment_gives_empty_curve(self):
        gt = make_set("ground_truth", 2, {1: [0.0, 0.0]})
        pred = make_set("predicted", 2, {2: [0.0, 0.0]})
        costs = pairwise_costs(pred, gt)
        curve = recall_curve(costs, assign(costs), RecallGrid(4))
        assert curve.samples == ()
        assert curve.max_recall == 0.0

    def test_recall_and_ade_monotone(self):
        rng = np.random.default_rng(4)
        gt = make_set("ground_truth", 1,
                      *[{1: [0.0, 5.0 * j]} for j in range(12)])
        pred = make_set("predicted", 1,
                        *[{1: [float(rng.uniform(0, 2)), 5.0 * j]}
                          for j in range(9)])
        costs = pairwise_costs(pred, gt)
        curve = recall_curve(costs, assign(costs), RecallGrid(40))
        recalls = [s.recall for s in curve.samples]
        ades = [s.ade for s in curve.samples]
        assert all(a <= b + 1e-12 for a, b in zip(recalls, recalls[1:]))
        assert all(a <= b + 1e-12 for a, b in zip(ades, ades[1:]))


class TestAadeAfde:
    def curve_for(self, ades, num_gt, grid):
        gt = make_set("ground_truth", 1,
                      *[{1: [0.0, 9.0 * j]} for j in range(num_gt)])
        pred = make_set("predicted", 1,
                        *[{1: [a, 9.0 * i]} for i, a in enumerate(ades)])
        costs = pairwise_costs(pred, gt)
        return recall_curve(costs, assign(costs), grid)

    def test_flat_curve(self):
        grid = RecallGrid(10)
        curve = self.curve_for([0.5], 1, grid)
        result = aade_afde({"m": curve}, grid)
        assert result.scores["m"].aade == pytest.approx(0.5)

    def test_common_ceiling_limits_integration(self):
        grid = RecallGrid(40)
        short = self.curve_for([0.1] * 17, 40, grid)   # max recall 0.425
        long = self.curve_for([0.2] * 32, 40, grid)    # max recall 0.80
        result = aade_afde({"short": short, "long": long}, grid)
        assert result.recall_set_size == 17
        assert result.common_recall_ceiling == pytest.approx(0.425)
        assert result.scores["short"].aade == pytest.approx(0.1)
        assert result.scores["long"].aade == pytest.approx(0.2)

    def test_mean_over_grid(self):
        # ADE_r == r over R = {0.25, 0.5, 0.75, 1.0} -> AADE = 0.625
        grid = RecallGrid(4)
        gt = make_set("ground_truth", 1,
                      *[{1: [0.0, 9.0 * j]} for j in range(4)])
        pred = make_set("predicted", 1,
                        *[{1: [(i + 1) / 4.0, 9.0 * i]} for i in range(4)])
        costs = pairwise_costs(pred, gt)
        curve = recall_curve(costs, assign(costs), grid)
        # per-sample ADEs are prefix means; construct the target directly
        samples = [s.ade for s in curve.samples]
        assert samples == pytest.approx([0.25, 0.375, 0.5, 0.625])
        result = aade_afde({"m": curve}, grid)
        assert result.scores["m"].aade == pytest.approx(sum(samples) / 4)

    def test_unrankable_method_flagged(self):
        grid = RecallGrid(4)
        good = self.curve_for([0.5, 0.5], 2, grid)
        bad = self.curve_for([0.5], 100, grid)  # max recall 0.01 < 0.25
        result = aade_afde({"good": good, "bad": bad}, grid)
        assert result.scores["bad"].unrankable
        assert result.scores["bad"].aade is None
        assert not result.scores["good"].unrankable
        # the unrankable method does not drag the ceiling down
        assert result.common_recall_ceiling == pytest.approx(1.0)

    def test_all_unrankable_rejected(self):
        grid = RecallGrid(4)
        bad = self.curve_for([0.5], 100, grid)
        with pytest.raises(EvaluationError, match="nothing to integrate"):
            aade_afde({"bad": bad}, grid)


class TestPermutationInvariance:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_shuffling_changes_nothing(self, seed):
        rng = np.random.default_rng(seed)
        num_gt = int(rng.integers(2, 7))
        num_pred = int(rng.integers(2, 7))
        gt_trajs = [{t: list(rng.uniform(-5, 5, 2)) for t in range(1, 4)}
                    for _ in range(num_gt)]
        pred_trajs = [{t: list(rng.uniform(-5, 5, 2)) for t in range(1, 4)}
                      for _ in range(num_pred)]

        def result_for(gt_order, pred_order):
            gt = TrajectorySet(tuple(Trajectory(f"g{i}", gt_trajs[i])
                                     for i in gt_order), "ground_truth", 3)
            pred = TrajectorySet(tuple(Trajectory(f"p{i}", pred_trajs[i])
                                       for i in pred_order), "predicted", 3)
            comparison, curves = evaluate_methods({"m": pred}, gt, RecallGrid(8))
            score = comparison.scores["m"]
            flat = [score.aade, score.afde, score.max_recall]
            for s in curves["m"].samples:
                flat.extend([s.recall, s.ade, s.fde])
            return flat

        base = result_for(range(num_gt), range(num_pred))
        shuffled = result_for(list(rng.permutation(num_gt)),
                              list(rng.permutation(num_pred)))
        assert base == pytest.approx(shuffled, rel=1e-12, abs=1e-12)
