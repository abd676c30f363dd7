"""Synthetic rigid-motion scenes for tests, demos, and harness self-checks."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .clouds import PointCloud, PointCloudSequence, RigidTransform, save_scan
from .manifest import DatasetManifest, FrameRecord, load_manifest, write_manifest
from .rangemap import SphericalGrid


def rotation_z(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_cloud(count: int, rng, lower=(-20.0, -20.0, -2.0),
              upper=(20.0, 20.0, 2.0)) -> PointCloud:
    """Uniform points in an axis-aligned box, float32-representable so that
    kitti_bin round trips are lossless."""
    pts = rng.uniform(lower, upper, size=(count, 3)).astype(np.float32)
    return PointCloud(pts.astype(np.float64))


def fov_cloud(count: int, grid: SphericalGrid, rng,
              d_range=(2.0, 80.0)) -> PointCloud:
    """Uniform points inside the grid's angular field of view."""
    theta = rng.uniform(grid.theta_min, grid.theta_max, size=count)
    phi = rng.uniform(grid.phi_min, grid.phi_max, size=count)
    d = rng.uniform(*d_range, size=count)
    cos_phi = np.cos(phi)
    pts = np.stack([d * cos_phi * np.cos(theta),
                    d * cos_phi * np.sin(theta),
                    d * np.sin(phi)], axis=1)
    return PointCloud(pts)


def constant_motion_sequence(base: PointCloud, step: RigidTransform,
                             num_frames: int, frame_period: float = 0.1,
                             start_index: int = 0) -> PointCloudSequence:
    """Frame k+1 is frame k warped by ``step`` (sensor-frame scene motion)."""
    frames = [base]
    for _ in range(num_frames - 1):
        frames.append(PointCloud(step.apply(frames[-1].points)))
    return PointCloudSequence(tuple(frames), frame_period, start_index)


def ego_poses_for_step(step: RigidTransform, num_frames: int,
                       start_index: int = 0) -> tuple[RigidTransform, ...]:
    """World<-sensor poses consistent with scene points warping by ``step``
    between consecutive frames: pose at frame t is step^(-t)."""
    inv = step.inverse()
    poses = []
    if start_index < 0:
        pose = step.power(-start_index)
    elif start_index > 0:
        pose = inv.power(start_index)
    else:
        pose = RigidTransform.identity()
    for _ in range(num_frames):
        poses.append(pose)
        pose = inv @ pose
    return tuple(poses)


def write_dataset(root, sequences: dict, frame_period: float = 0.1,
                  with_ego: bool = True) -> Path:
    """Write scans plus a manifest for synthetic sequences.

    ``sequences`` maps sequence id -> (PointCloudSequence, step RigidTransform
    or None). Returns the manifest path.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records = {}
    for seq_id, (sequence, step) in sequences.items():
        seq_dir = root / seq_id
        seq_dir.mkdir(exist_ok=True)
        poses = None
        if with_ego and step is not None:
            poses = ego_poses_for_step(step, len(sequence),
                                       start_index=sequence.start_index)
        seq_records = []
        for offset, cloud in enumerate(sequence.frames):
            index = sequence.start_index + offset
            scan_path = seq_dir / f"{offset:06d}.bin"
            save_scan(cloud, scan_path)
            pose = poses[offset] if poses is not None else None
            seq_records.append(FrameRecord(index, scan_path, pose, None))
        records[seq_id] = tuple(seq_records)
    manifest = DatasetManifest(frame_period, records)
    manifest_path = root / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path


def write_correspondence(path, pairs) -> None:
    Path(path).write_text(
        json.dumps({"pairs": [[int(a), int(b)] for a, b in pairs]}) + "\n",
        encoding="utf-8")
