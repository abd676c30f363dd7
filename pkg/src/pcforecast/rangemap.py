"""Spherical range-map codec for scene point clouds.

A range map is an H x W grid over elevation (rows) and azimuth (columns)
storing one range value per occupied bin, plus a binary occupancy mask.
Encoding quantizes point directions to bins; decoding reconstructs one
point per occupied bin at the bin-center direction.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clouds import PointCloud

TWO_PI = 2.0 * math.pi

SPFR_MAGIC = b"SPFR"
SPFR_VERSION = 1
_HEADER = struct.Struct("<4sIIIffff")


class RangeMapFormatError(ValueError):
    """A range-map file is malformed."""


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Bin layout: ``height`` elevation rows over [phi_min, phi_max],
    ``width`` azimuth columns over [theta_min, theta_max]. Angles in radians."""

    height: int = 120
    width: int = 1024
    phi_min: float = math.radians(-30.0)
    phi_max: float = math.radians(10.0)
    theta_min: float = 0.0
    theta_max: float = TWO_PI

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid needs at least one row and one column")
        if not self.phi_min < self.phi_max:
            raise ValueError("phi_min must be below phi_max")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        # relative slack admits full-circle bounds that went through float32
        if self.theta_max - self.theta_min > TWO_PI * (1.0 + 1e-6):
            raise ValueError("azimuth span cannot exceed a full circle")

    @property
    def phi_span(self) -> float:
        return self.phi_max - self.phi_min

    @property
    def theta_span(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def bin_half_diagonal(self) -> float:
        """Half the bin diagonal in radians; bounds the decode angular error."""
        return 0.5 * math.hypot(self.phi_span / self.height,
                                self.theta_span / self.width)

    def bin_centers(self, rows: np.ndarray, cols: np.ndarray):
        phi = self.phi_min + (np.asarray(rows) + 0.5) * (self.phi_span / self.height)
        theta = self.theta_min + (np.asarray(cols) + 0.5) * (self.theta_span / self.width)
        return theta, phi


@dataclass(frozen=True, eq=False)
class RangeMap:
    """Per-bin range (float32 meters) and occupancy mask (uint8, 1 = occupied)."""

    grid: SphericalGrid
    ranges: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        ranges = np.ascontiguousarray(self.ranges, dtype=np.float32)
        mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if ranges.shape != self.grid.shape or mask.shape != self.grid.shape:
            raise ValueError(
                f"ranges/mask shape must be {self.grid.shape}, "
                f"got {ranges.shape} and {mask.shape}"
            )
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask must be binary")
        occupied = mask == 1
        if not np.array_equal(occupied, ranges != 0):
            raise ValueError("mask and ranges disagree: mask == 0 iff range == 0")
        if not np.all(np.isfinite(ranges[occupied])) or np.any(ranges[occupied] <= 0):
            raise ValueError("occupied bins must hold positive finite ranges")
        ranges = ranges.copy()
        ranges.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "mask", mask)

    def occupancy(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True)
class SphericalCoord:
    """Azimuth/elevation direction plus range, all from the sensor origin."""

    theta: float
    phi: float
    d: float


def project_point(point) -> SphericalCoord:
    """Spherical coordinates of one point; azimuth normalized into [0, 2*pi)."""
    x, y, z = (float(v) for v in point)
    d = math.sqrt(x * x + y * y + z * z)
    if d == 0.0:
        raise ValueError("the origin has no direction; cannot project (0, 0, 0)")
    theta = math.atan2(y, x) % TWO_PI
    if theta >= TWO_PI:
        theta = 0.0
    phi = math.asin(max(-1.0, min(1.0, z / d)))
    return SphericalCoord(theta=theta, phi=phi, d=d)


def _project_arrays(points: np.ndarray):
    d = np.linalg.norm(points, axis=1)
    theta = np.arctan2(points[:, 1], points[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.arcsin(np.clip(points[:, 2] / np.where(d == 0, 1.0, d), -1.0, 1.0))
    return theta, phi, d


def fov_mask(cloud: PointCloud, grid: SphericalGrid) -> np.ndarray:
    """Boolean per-point mask of points that land inside the grid's field of view."""
    theta, phi, d = _project_arrays(cloud.points)
    rel = (theta - grid.theta_min) % TWO_PI
    rel = np.where(rel >= TWO_PI, 0.0, rel)
    return ((d > 0)
            & (phi >= grid.phi_min) & (phi <= grid.phi_max)
            & (rel <= grid.theta_span))


def encode(cloud: PointCloud, grid: SphericalGrid | None = None) -> RangeMap:
    """Project a cloud onto the grid; same-bin collisions keep the largest range.

    Points with elevation outside [phi_min, phi_max] (or azimuth outside the
    grid span, for partial-circle grids) are dropped; boundary hits are
    clamped into the edge bin.
    """
    grid = grid or SphericalGrid()
    pts = cloud.points
    acc = np.zeros(grid.height * grid.width, dtype=np.float64)
    if len(pts):
        theta, phi, d = _project_arrays(pts)
        rel = (theta - grid.theta_min) % TWO_PI
        rel = np.where(rel >= TWO_PI, 0.0, rel)
        keep = ((d > 0)
                & (phi >= grid.phi_min) & (phi <= grid.phi_max)
                & (rel <= grid.theta_span))
        rows = np.floor((phi[keep] - grid.phi_min) / grid.phi_span * grid.height)
        rows = np.clip(rows, 0, grid.height - 1).astype(np.int64)
        cols = np.floor(rel[keep] / grid.theta_span * grid.width)
        cols = np.clip(cols, 0, grid.width - 1).astype(np.int64)
        np.maximum.at(acc, rows * grid.width + cols, d[keep])
    # occupancy follows the stored float32 values so the mask/range coupling
    # survives the cast even for ranges that underflow to zero
    ranges = acc.astype(np.float32).reshape(grid.shape)
    return RangeMap(grid, ranges, (ranges != 0).astype(np.uint8))


def decode(rangemap: RangeMap) -> PointCloud:
    """One point per occupied bin, reconstructed at the bin-center direction."""
    grid = rangemap.grid
    rows, cols = np.nonzero(rangemap.mask)
    d = rangemap.ranges[rows, cols].astype(np.float64)
    theta, phi = grid.bin_centers(rows, cols)
    cos_phi = np.cos(phi)
    pts = np.stack([d * cos_phi * np.cos(theta),
                    d * cos_phi * np.sin(theta),
                    d * np.sin(phi)], axis=1)
    return PointCloud(pts)


def write_rangemap(rangemap: RangeMap, path) -> None:
    grid = rangemap.grid
    header = _HEADER.pack(SPFR_MAGIC, SPFR_VERSION, grid.height, grid.width,
                          grid.phi_min, grid.phi_max,
                          grid.theta_min, grid.theta_max)
    payload = rangemap.ranges.astype("<f4").tobytes() + rangemap.mask.tobytes()
    Path(path).write_bytes(header + payload)


def read_rangemap(path) -> RangeMap:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise RangeMapFormatError(
            f"{path}: truncated header: {len(raw)} bytes, need {_HEADER.size}"
        )
    magic, version, height, width, phi_min, phi_max, theta_min, theta_max = \
        _HEADER.unpack_from(raw)
    if magic != SPFR_MAGIC:
        raise RangeMapFormatError(
            f"{path}: bad magic: expected {SPFR_MAGIC!r}, found {magic!r}"
        )
    if version != SPFR_VERSION:
        raise RangeMapFormatError(
            f"{path}: unsupported version {version}, expected {SPFR_VERSION}"
        )
    try:
        grid = SphericalGrid(height, width, phi_min, phi_max, theta_min, theta_max)
    except ValueError as exc:
        raise RangeMapFormatError(f"{path}: invalid grid header: {exc}") from exc
    cells = height * width
    expected = _HEADER.size + cells * 4 + cells
    if len(raw) < expected:
        raise RangeMapFormatError(
            f"{path}: truncated payload at byte {len(raw)}, expected {expected} bytes"
        )
    if len(raw) > expected:
        raise RangeMapFormatError(
            f"{path}: {len(raw) - expected} trailing bytes after payload"
        )
    offset = _HEADER.size
    ranges = np.frombuffer(raw, dtype="<f4", count=cells,
                           offset=offset).reshape(height, width)
    mask = np.frombuffer(raw, dtype=np.uint8, count=cells,
                         offset=offset + cells * 4).reshape(height, width)
    try:
        return RangeMap(grid, ranges, mask)
    except ValueError as exc:
        raise RangeMapFormatError(f"{path}: invalid range map: {exc}") from exc
