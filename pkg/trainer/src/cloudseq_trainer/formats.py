"""Readers and writers for the toolkit interchange formats.

Implemented against the documented wire formats so this package exchanges
data with the forecasting toolkit purely through files:

- kitti_bin scans: little-endian float32 (x, y, z, intensity) records
- SPFR range maps: "SPFR" magic, u32 version/H/W, 4x f32 grid angles,
  H*W f32 ranges row-major, H*W u8 mask
- manifest: one JSON document mapping sequence ids to frame records
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPFR_MAGIC = b"SPFR"
SPFR_VERSION = 1
_SPFR_HEADER = struct.Struct("<4sIIIffff")


def read_scan(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise ValueError(f"{path}: not a kitti_bin file (size {len(raw)})")
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4)[:, :3].astype(np.float64)


def write_scan(points: np.ndarray, path) -> None:
    rec = np.zeros((len(points), 4), dtype="<f4")
    rec[:, :3] = points
    Path(path).write_bytes(rec.tobytes())


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    phi_min: float
    phi_max: float
    theta_min: float
    theta_max: float

    def bin_directions(self) -> np.ndarray:
        """(H, W, 3) unit vectors toward every bin center."""
        rows = np.arange(self.height) + 0.5
        cols = np.arange(self.width) + 0.5
        phi = self.phi_min + rows * (self.phi_max - self.phi_min) / self.height
        theta = self.theta_min + cols * (self.theta_max - self.theta_min) / self.width
        phi, theta = np.meshgrid(phi, theta, indexing="ij")
        return np.stack([np.cos(phi) * np.cos(theta),
                         np.cos(phi) * np.sin(theta),
                         np.sin(phi)], axis=-1)


def read_rangemap(path):
    """Returns (GridSpec, float32 ranges (H, W), uint8 mask (H, W))."""
    raw = Path(path).read_bytes()
    if len(raw) < _SPFR_HEADER.size:
        raise ValueError(f"{path}: truncated SPFR header")
    magic, version, height, width, phi_min, phi_max, theta_min, theta_max = \
        _SPFR_HEADER.unpack_from(raw)
    if magic != SPFR_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SPFR_VERSION:
        raise ValueError(f"{path}: unsupported SPFR version {version}")
    cells = height * width
    expected = _SPFR_HEADER.size + cells * 5
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    ranges = np.frombuffer(raw, dtype="<f4", count=cells,
                           offset=_SPFR_HEADER.size).reshape(height, width)
    mask = np.frombuffer(raw, dtype=np.uint8, count=cells,
                         offset=_SPFR_HEADER.size + cells * 4).reshape(height, width)
    grid = GridSpec(height, width, phi_min, phi_max, theta_min, theta_max)
    return grid, ranges.copy(), mask.copy()


def write_rangemap(grid: GridSpec, ranges: np.ndarray, mask: np.ndarray,
                   path) -> None:
    header = _SPFR_HEADER.pack(SPFR_MAGIC, SPFR_VERSION, grid.height, grid.width,
                               grid.phi_min, grid.phi_max,
                               grid.theta_min, grid.theta_max)
    payload = (np.ascontiguousarray(ranges, dtype="<f4").tobytes()
               + np.ascontiguousarray(mask, dtype=np.uint8).tobytes())
    Path(path).write_bytes(header + payload)


@dataclass(frozen=True)
class FrameEntry:
    index: int
    scan_path: Path

    @property
    def rangemap_path(self) -> Path:
        return self.scan_path.with_suffix(".spfr")


def read_manifest(path):
    """Returns (frame_period, {sequence id: [FrameEntry, ...]})."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    frame_period = float(doc["frame_period"])
    sequences = {}
    for seq_id, entries in doc["sequences"].items():
        frames = [FrameEntry(int(e["t"]), path.parent / e["scan"])
                  for e in entries]
        frames.sort(key=lambda f: f.index)
        sequences[seq_id] = frames
    return frame_period, sequences
