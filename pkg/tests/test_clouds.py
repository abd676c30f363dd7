import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcforecast.clouds import (
    PointCloud,
    PointCloudSequence,
    RigidTransform,
    ScanError,
    load_scan,
    save_scan,
)


def kitti_bytes(*records):
    """Byte-level fixture: each record is (x, y, z, intensity) float32 LE."""
    return b"".join(struct.pack("<ffff", *rec) for rec in records)


class TestKittiLoad:
    def test_single_record(self, tmp_path):
        path = tmp_path / "one.bin"
        path.write_bytes(kitti_bytes((1.0, 2.0, 3.0, 0.5)))
        cloud = load_scan(path)
        assert np.array_equal(cloud.points, [[1.0, 2.0, 3.0]])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        assert len(load_scan(path)) == 0

    def test_two_records_order_preserved(self, tmp_path):
        recs = [(1.5, -2.0, 0.25, 0.0), (-4.0, 8.0, 16.5, 1.0)]
        path = tmp_path / "two.bin"
        path.write_bytes(kitti_bytes(*recs))
        cloud = load_scan(path)
        assert len(cloud) == 2
        assert np.array_equal(cloud.points, [r[:3] for r in recs])

    def test_intensity_discarded(self, tmp_path):
        path = tmp_path / "i.bin"
        path.write_bytes(kitti_bytes((1.0, 2.0, 3.0, 99.0)))
        assert load_scan(path).points.shape == (1, 3)

    def test_bad_size_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 17)
        with pytest.raises(ScanError, match="not a multiple"):
            load_scan(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScanError, match="cannot read"):
            load_scan(tmp_path / "nope.bin")

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "nan.bin"
        path.write_bytes(kitti_bytes((float("nan"), 0.0, 0.0, 0.0)))
        with pytest.raises(ScanError, match="non-finite"):
            load_scan(path)

    @settings(max_examples=25, deadline=None)
    @given(count=st.integers(0, 200), seed=st.integers(0, 2**32 - 1))
    def test_round_trip_bitwise(self, count, seed, tmp_path_factory):
        # float32-representable coordinates survive the kitti_bin round trip exactly
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-100, 100, size=(count, 3)).astype(np.float32)
        cloud = PointCloud(pts.astype(np.float64))
        path = tmp_path_factory.mktemp("rt") / "c.bin"
        save_scan(cloud, path)
        again = load_scan(path)
        assert np.array_equal(again.points, cloud.points)

    def test_save_zero_fills_intensity(self, tmp_path):
        path = tmp_path / "z.bin"
        save_scan(PointCloud([[1.0, 2.0, 3.0]]), path)
        rec = np.frombuffer(path.read_bytes(), dtype="<f4")
        assert rec[3] == 0.0


class TestPly:
    def test_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(7)
        cloud = PointCloud(rng.uniform(-50, 50, size=(37, 3)))
        path = tmp_path / "c.ply"
        save_scan(cloud, path, fmt="ply_ascii")
        again = load_scan(path, fmt="ply_ascii")
        assert np.array_equal(again.points, cloud.points)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text("not a ply\n")
        with pytest.raises(ScanError, match="magic"):
            load_scan(path, fmt="ply_ascii")

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 2\n"
                        "property double x\nproperty double y\nproperty double z\n"
                        "end_header\n0 0 0\n")
        with pytest.raises(ScanError, match="expected 2 vertex rows"):
            load_scan(path, fmt="ply_ascii")


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            PointCloud([[0.0, 0.0, float("inf")]])

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError, match="shape"):
            PointCloud([[1.0, 2.0]])

    def test_immutable(self):
        cloud = PointCloud([[1.0, 2.0, 3.0]])
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 5.0

    def test_variable_sizes_allowed(self):
        seq = PointCloudSequence(
            (PointCloud([[0, 0, 0]]), PointCloud([[0, 0, 0], [1, 1, 1]])),
            frame_period=0.1)
        assert [len(f) for f in seq.frames] == [1, 2]


class TestRigidTransform:
    def test_identity_apply(self):
        t = RigidTransform.identity()
        pts = np.array([[1.0, 2.0, 3.0]])
        assert np.array_equal(t.apply(pts), pts)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            RigidTransform(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError, match="reflection"):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_compose_and_inverse(self):
        rng = np.random.default_rng(3)
        from scipy.spatial.transform import Rotation
        a = RigidTransform(Rotation.random(random_state=1).as_matrix(), rng.uniform(-1, 1, 3))
        b = RigidTransform(Rotation.random(random_state=2).as_matrix(), rng.uniform(-1, 1, 3))
        pts = rng.uniform(-5, 5, size=(20, 3))
        np.testing.assert_allclose((a @ b).apply(pts), a.apply(b.apply(pts)),
                                   atol=1e-12)
        ident = (a @ a.inverse()).as_matrix()
        np.testing.assert_allclose(ident, np.eye(4), atol=1e-12)

    def test_power(self):
        step = RigidTransform(np.eye(3), [1.0, 0.0, 0.0])
        assert np.allclose(step.power(5).translation, [5.0, 0.0, 0.0])
        assert np.allclose(step.power(0).as_matrix(), np.eye(4))

    def test_from_matrix_validates_last_row(self):
        bad = np.eye(4)
        bad[3, 0] = 0.5
        with pytest.raises(ValueError, match="last row"):
            RigidTransform.from_matrix(bad)


class TestSequence:
    def test_indices(self):
        frames = tuple(PointCloud([[float(i), 0, 0]]) for i in range(3))
        seq = PointCloudSequence(frames, 0.1, start_index=-2)
        assert seq.indices == (-2, -1, 0)
        assert seq.frame_at(0) is frames[2]
        with pytest.raises(KeyError):
            seq.frame_at(1)

    def test_rejects_bad_period(self):
        with pytest.raises(ValueError, match="frame_period"):
            PointCloudSequence((PointCloud.empty(),), 0.0)
