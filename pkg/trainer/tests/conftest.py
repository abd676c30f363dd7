"""Shared fixtures: a frozen structured toy dataset built through the
forecasting toolkit (scans + precomputed range maps + manifest)."""

import numpy as np
import pytest

from pcforecast.clouds import PointCloud, RigidTransform, load_scan
from pcforecast.rangemap import SphericalGrid, encode, write_rangemap
from pcforecast.synthetic import constant_motion_sequence, write_dataset

TOY_GRID = dict(height=32, width=256)


def smooth_scene(count, grid, rng) -> PointCloud:
    """Room-like scene: range varies smoothly with direction, as real
    surfaces do; much more compressible than white-noise ranges."""
    theta = rng.uniform(grid.theta_min, grid.theta_max, count)
    phi = rng.uniform(grid.phi_min, grid.phi_max, count)
    d = 8.0 + 2.0 * np.sin(3.0 * theta) + 1.2 * np.cos(theta) \
        + 6.0 * np.sin(phi)
    pts = np.stack([d * np.cos(phi) * np.cos(theta),
                    d * np.cos(phi) * np.sin(theta),
                    d * np.sin(phi)], axis=1)
    return PointCloud(pts)


@pytest.fixture(scope="session")
def frozen_toy_dataset(tmp_path_factory):
    """53 identical frames -> 50 (past 2 + horizon 2) windows, with SPFR
    range maps precomputed next to every scan."""
    root = tmp_path_factory.mktemp("frozen_toy")
    rng = np.random.default_rng(0)
    grid = SphericalGrid(**TOY_GRID)
    base = smooth_scene(1500, grid, rng)
    seq = constant_motion_sequence(base, RigidTransform.identity(), 53, 0.1)
    manifest = write_dataset(root, {"seq0": (seq, None)}, with_ego=False)
    for scan in sorted((root / "seq0").glob("*.bin")):
        write_rangemap(encode(load_scan(scan), grid),
                       scan.with_suffix(".spfr"))
    return manifest
