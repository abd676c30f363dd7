import math

import numpy as np
import pytest

from pcforecast.clouds import PointCloud, PointCloudSequence, RigidTransform
from pcforecast.forecasters import (
    ForecastError,
    ForecastRequest,
    IcpError,
    IcpParams,
    _mean_quaternion,
    average_motion,
    forecast_ego_warp,
    forecast_icp_warp,
    forecast_identity,
    icp_align,
)
from pcforecast.metrics import chamfer
from pcforecast.synthetic import (
    box_cloud,
    constant_motion_sequence,
    ego_poses_for_step,
    rotation_z,
)


def past_sequence(frames, period=0.1):
    return PointCloudSequence(tuple(frames), period, start_index=-len(frames) + 1)


class TestIdentity:
    def test_outputs_equal_last_frame_bitwise(self):
        rng = np.random.default_rng(0)
        frames = [box_cloud(3, rng) for _ in range(4)]
        result = forecast_identity(ForecastRequest(past_sequence(frames), horizon=5))
        assert len(result.frames) == 5
        for frame in result.frames:
            assert len(frame) == 3
            assert np.array_equal(frame.points, frames[-1].points)

    def test_static_scene_scores_zero(self):
        rng = np.random.default_rng(1)
        cloud = box_cloud(100, rng)
        past = past_sequence([cloud] * 3)
        result = forecast_identity(ForecastRequest(past, horizon=2))
        for frame in result.frames:
            assert chamfer(frame, cloud) == 0.0

    def test_single_frame_past_allowed(self):
        past = past_sequence([PointCloud([[1, 2, 3]])])
        result = forecast_identity(ForecastRequest(past, horizon=1))
        assert np.array_equal(result.frames[0].points, [[1, 2, 3]])

    def test_moving_scene_error_grows_with_displacement(self):
        rng = np.random.default_rng(2)
        base = box_cloud(200, rng)
        velocity = np.array([2.0, 0.0, 0.0])
        period = 0.1
        step = RigidTransform(np.eye(3), velocity * period)
        seq = constant_motion_sequence(base, step, 8, period)
        past = PointCloudSequence(seq.frames[:3], period, start_index=-2)
        future = seq.frames[3:]
        result = forecast_identity(ForecastRequest(past, horizon=5))
        errors = [chamfer(p, g) for p, g in zip(result.frames, future)]
        assert all(a < b for a, b in zip(errors, errors[1:]))
        # each prediction differs from GT by exactly k * v * tau
        for k, (pred, gt) in enumerate(zip(result.frames, future), start=1):
            np.testing.assert_allclose(gt.points - pred.points,
                                       np.tile(velocity * period * k, (200, 1)),
                                       atol=1e-9)


class TestAverageMotion:
    def test_identity_inputs(self):
        mean = average_motion([RigidTransform.identity()] * 3)
        np.testing.assert_allclose(mean.as_matrix(), np.eye(4), atol=1e-15)

    def test_translation_mean(self):
        a = RigidTransform(np.eye(3), [1.0, 0.0, 0.0])
        b = RigidTransform(np.eye(3), [3.0, 0.0, 0.0])
        mean = average_motion([a, b])
        np.testing.assert_allclose(mean.translation, [2.0, 0.0, 0.0])
        np.testing.assert_allclose(mean.rotation, np.eye(3), atol=1e-15)

    def test_coaxial_rotation_mean(self):
        # closed form: the quaternion mean of coaxial rotations bisects the angle
        a = RigidTransform(rotation_z(math.radians(10.0)), np.zeros(3))
        b = RigidTransform(rotation_z(math.radians(20.0)), np.zeros(3))
        mean = average_motion([a, b])
        want = rotation_z(math.radians(15.0))
        assert float(np.abs(mean.rotation - want).max()) < 1e-6

    def test_idempotent_on_identical_transforms(self):
        t = RigidTransform(rotation_z(0.3), [0.5, -0.25, 1.0])
        mean = average_motion([t, t, t])
        np.testing.assert_allclose(mean.as_matrix(), t.as_matrix(), atol=1e-12)

    def test_hemisphere_alignment(self):
        # q and -q encode the same rotation; the mean must not cancel
        from scipy.spatial.transform import Rotation
        rot = rotation_z(2.0)
        quat = Rotation.from_matrix(rot).as_quat()
        t1 = RigidTransform(Rotation.from_quat(quat).as_matrix(), np.zeros(3))
        t2 = RigidTransform(Rotation.from_quat(-quat).as_matrix(), np.zeros(3))
        mean = average_motion([t1, t2])
        np.testing.assert_allclose(mean.rotation, rot, atol=1e-12)

    def test_degenerate_quaternion_sum_raises(self):
        quats = np.array([[1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="degenerate"):
            _mean_quaternion(quats)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            average_motion([])


class TestEgoWarp:
    def test_stationary_ego_equals_identity(self):
        rng = np.random.default_rng(3)
        frames = [box_cloud(50, rng)] * 3
        poses = tuple(RigidTransform.identity() for _ in range(3))
        request = ForecastRequest(past_sequence(frames), 4, ego_poses=poses)
        warped = forecast_ego_warp(request)
        ident = forecast_identity(request)
        for a, b in zip(warped.frames, ident.frames):
            np.testing.assert_allclose(a.points, b.points, atol=1e-12)

    def test_constant_translation_reproduces_future_exactly(self):
        rng = np.random.default_rng(4)
        base = box_cloud(300, rng)
        step = RigidTransform(np.eye(3), [-1.0, 0.0, 0.0])  # scene shift per frame
        m, n = 4, 5
        seq = constant_motion_sequence(base, step, m + n, 0.1)
        past = PointCloudSequence(seq.frames[:m], 0.1, start_index=-m + 1)
        poses = ego_poses_for_step(step, m, start_index=-m + 1)
        result = forecast_ego_warp(ForecastRequest(past, n, ego_poses=poses))
        for pred, gt in zip(result.frames, seq.frames[m:]):
            assert float(np.abs(pred.points - gt.points).max()) < 1e-6

    def test_rotating_ego_reproduces_future(self):
        rng = np.random.default_rng(5)
        base = box_cloud(200, rng)
        step = RigidTransform(rotation_z(math.radians(5.0)), np.zeros(3))
        m, n = 3, 4
        seq = constant_motion_sequence(base, step, m + n, 0.1)
        past = PointCloudSequence(seq.frames[:m], 0.1, start_index=-m + 1)
        poses = ego_poses_for_step(step, m, start_index=-m + 1)
        result = forecast_ego_warp(ForecastRequest(past, n, ego_poses=poses))
        for pred, gt in zip(result.frames, seq.frames[m:]):
            assert float(np.abs(pred.points - gt.points).max()) < 1e-6

    def test_missing_poses_rejected(self):
        rng = np.random.default_rng(6)
        past = past_sequence([box_cloud(10, rng)] * 2)
        with pytest.raises(ForecastError, match="ego poses"):
            forecast_ego_warp(ForecastRequest(past, 1))

    def test_single_past_frame_rejected(self):
        rng = np.random.default_rng(7)
        past = past_sequence([box_cloud(10, rng)])
        request = ForecastRequest(past, 1,
                                  ego_poses=(RigidTransform.identity(),))
        with pytest.raises(ForecastError, match="two past frames"):
            forecast_ego_warp(request)

    def test_rigidity_preserved(self):
        rng = np.random.default_rng(8)
        base = box_cloud(40, rng)
        step = RigidTransform(rotation_z(0.1), [0.3, 0.0, 0.0])
        past = past_sequence([base, PointCloud(step.apply(base.points))])
        poses = ego_poses_for_step(step, 2, start_index=-1)
        result = forecast_ego_warp(ForecastRequest(past, 3, ego_poses=poses))
        src = past.last.points
        want = np.linalg.norm(src[:, None] - src[None, :], axis=2)
        for frame in result.frames:
            got = np.linalg.norm(frame.points[:, None] - frame.points[None, :],
                                 axis=2)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


class TestIcpAlign:
    def test_identity_converges_immediately(self):
        rng = np.random.default_rng(9)
        cloud = box_cloud(100, rng)
        result = icp_align(cloud, cloud)
        assert result.converged
        assert result.iterations == 1
        assert result.residual == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.transform.as_matrix(), np.eye(4),
                                   atol=1e-9)

    def test_recovers_known_transform(self):
        rng = np.random.default_rng(10)
        source = box_cloud(500, rng)
        truth = RigidTransform(rotation_z(math.radians(3.0)), [0.1, 0.0, 0.0])
        target = PointCloud(truth.apply(source.points))
        result = icp_align(source, target)
        got = result.transform
        angle = math.atan2(got.rotation[1, 0], got.rotation[0, 0])
        assert abs(angle - math.radians(3.0)) < 1e-4
        assert float(np.abs(got.translation - truth.translation).max()) < 1e-4

    def test_two_points_rejected(self):
        a = PointCloud([[0, 0, 0], [1, 0, 0]])
        with pytest.raises(IcpError, match="at least 3"):
            icp_align(a, a)

    def test_collinear_rejected(self):
        line = PointCloud([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
        with pytest.raises(IcpError, match="collinear"):
            icp_align(line, line)

    def test_no_correspondences_within_radius(self):
        rng = np.random.default_rng(11)
        source = box_cloud(20, rng)
        target = PointCloud(source.points + np.array([100.0, 0.0, 0.0]))
        with pytest.raises(IcpError, match="correspondences"):
            icp_align(source, target, IcpParams(max_corr_dist=1.0))


class TestIcpWarp:
    def test_static_world_matches_identity(self):
        rng = np.random.default_rng(12)
        cloud = box_cloud(80, rng)
        past = past_sequence([cloud, cloud, cloud])
        result = forecast_icp_warp(ForecastRequest(past, 2))
        for frame in result.frames:
            assert float(np.abs(frame.points - cloud.points).max()) < 1e-9

    def test_translating_ego_recovered(self):
        rng = np.random.default_rng(13)
        base = box_cloud(400, rng)
        step = RigidTransform(np.eye(3), [-0.5, 0.0, 0.0])
        m, n = 3, 3
        seq = constant_motion_sequence(base, step, m + n, 0.1)
        past = PointCloudSequence(seq.frames[:m], 0.1, start_index=-m + 1)
        result = forecast_icp_warp(ForecastRequest(past, n))
        info = result.method_info["icp"]
        assert len(info) == m - 1
        for pair in info:
            assert pair["residual"] < 1e-3
        for pred, gt in zip(result.frames, seq.frames[m:]):
            assert chamfer(pred, gt) < 1e-4 * len(base)

    def test_two_frames_average_is_single_icp(self):
        rng = np.random.default_rng(14)
        base = box_cloud(200, rng)
        step = RigidTransform(rotation_z(0.02), [0.2, 0.1, 0.0])
        past = past_sequence([base, PointCloud(step.apply(base.points))])
        single = icp_align(past.frames[0], past.frames[1]).transform
        result = forecast_icp_warp(ForecastRequest(past, 1))
        np.testing.assert_allclose(result.frames[0].points,
                                   single.apply(past.last.points), atol=1e-9)

    def test_single_frame_rejected(self):
        rng = np.random.default_rng(15)
        past = past_sequence([box_cloud(10, rng)])
        with pytest.raises(ForecastError, match="two past frames"):
            forecast_icp_warp(ForecastRequest(past, 1))


class TestRequestValidation:
    def test_horizon_positive(self):
        rng = np.random.default_rng(16)
        with pytest.raises(ValueError, match="horizon"):
            ForecastRequest(past_sequence([box_cloud(5, rng)]), 0)

    def test_pose_count_must_match(self):
        rng = np.random.default_rng(17)
        with pytest.raises(ValueError, match="one ego pose per past frame"):
            ForecastRequest(past_sequence([box_cloud(5, rng)] * 3), 1,
                            ego_poses=(RigidTransform.identity(),))
