"""Scene point clouds, rigid transforms, and binary scan I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# One scan record: x, y, z, intensity as little-endian float32.
KITTI_RECORD_SIZE = 16

SCAN_FORMATS = ("kitti_bin", "ply_ascii")

ROTATION_TOL = 1e-6


class ScanError(ValueError):
    """A scan file cannot be read or does not match its declared format."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (K, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")
    pts = pts.copy()
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points of one scene frame, in file order, coordinates in meters."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)))

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self.points + np.asarray(offset, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) motion applied as ``y = rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        tra = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(tra))):
            raise ValueError("transform contains non-finite values")
        err = float(np.linalg.norm(rot.T @ rot - np.eye(3)))
        if err > ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (||R^T R - I||_F = {err:.3g})")
        if np.linalg.det(rot) <= 0.0:
            raise ValueError("rotation must be proper (det +1), got a reflection")
        rot = rot.copy()
        rot.flags.writeable = False
        tra = tra.copy()
        tra.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat) -> "RigidTransform":
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {mat.shape}")
        if not np.allclose(mat[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("pose matrix last row must be [0, 0, 0, 1]")
        return cls(mat[:3, :3], mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rot = self.rotation.T
        return RigidTransform(rot, -rot @ self.translation)

    def power(self, exponent: int) -> "RigidTransform":
        if exponent < 0:
            raise ValueError("negative powers are not supported; invert first")
        out = RigidTransform.identity()
        for _ in range(exponent):
            out = self.compose(out)
        return out


@dataclass(frozen=True, eq=False)
class PointCloudSequence:
    """Frames sampled at a constant period; frame ``i`` has index ``start_index + i``."""

    frames: tuple[PointCloud, ...]
    frame_period: float
    start_index: int = 0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a sequence needs at least one frame")
        if not all(isinstance(f, PointCloud) for f in frames):
            raise TypeError("frames must be PointCloud instances")
        if not (np.isfinite(self.frame_period) and self.frame_period > 0):
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(self.start_index + i for i in range(len(self.frames)))

    @property
    def last(self) -> PointCloud:
        return self.frames[-1]

    def frame_at(self, index: int) -> PointCloud:
        offset = index - self.start_index
        if not 0 <= offset < len(self.frames):
            raise KeyError(f"frame index {index} outside [{self.start_index}, "
                           f"{self.start_index + len(self.frames) - 1}]")
        return self.frames[offset]


def load_scan(path, fmt: str = "kitti_bin") -> PointCloud:
    """Read a scan file. ``kitti_bin`` drops the intensity channel."""
    if fmt not in SCAN_FORMATS:
        raise ValueError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScanError(f"{path}: cannot read scan: {exc}") from exc
    if fmt == "kitti_bin":
        return _decode_kitti(raw, path)
    return _decode_ply(raw, path)


def save_scan(cloud: PointCloud, path, fmt: str = "kitti_bin") -> None:
    """Write a scan file. ``kitti_bin`` casts to float32 and zero-fills intensity."""
    if fmt not in SCAN_FORMATS:
        raise ValueError(f"unknown scan format {fmt!r}; expected one of {SCAN_FORMATS}")
    path = Path(path)
    if fmt == "kitti_bin":
        rec = np.zeros((len(cloud), 4), dtype="<f4")
        rec[:, :3] = cloud.points
        path.write_bytes(rec.tobytes())
    else:
        path.write_text(_encode_ply(cloud))


def _decode_kitti(raw: bytes, path: Path) -> PointCloud:
    if len(raw) % KITTI_RECORD_SIZE:
        raise ScanError(
            f"{path}: file size {len(raw)} is not a multiple of the "
            f"{KITTI_RECORD_SIZE}-byte record"
        )
    records = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    try:
        return PointCloud(records[:, :3].astype(np.float64))
    except ValueError as exc:
        raise ScanError(f"{path}: {exc}") from exc


def _encode_ply(cloud: PointCloud) -> str:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    for x, y, z in cloud.points:
        # repr of a Python float is shortest-round-trip, so the file is lossless
        lines.append(f"{x.item()!r} {y.item()!r} {z.item()!r}")
    return "\n".join(lines) + "\n"


def _decode_ply(raw: bytes, path: Path) -> PointCloud:
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ScanError(f"{path}: not an ASCII PLY file: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ScanError(f"{path}: missing 'ply' magic line")

    vertex_count = None
    properties: list[str] = []
    in_vertex_element = False
    body_start = None
    for lineno, line in enumerate(lines[1:], start=2):
        token = line.strip()
        if token == "end_header":
            body_start = lineno
            break
        if token.startswith("format"):
            if token.split() != ["format", "ascii", "1.0"]:
                raise ScanError(f"{path}: unsupported PLY format line {token!r}")
        elif token.startswith("element"):
            parts = token.split()
            in_vertex_element = len(parts) == 3 and parts[1] == "vertex"
            if in_vertex_element:
                vertex_count = int(parts[2])
        elif token.startswith("property") and in_vertex_element:
            properties.append(token.split()[-1])
    if body_start is None:
        raise ScanError(f"{path}: missing end_header")
    if vertex_count is None:
        raise ScanError(f"{path}: missing 'element vertex' declaration")
    try:
        cols = [properties.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ScanError(f"{path}: vertex element lacks x/y/z properties") from None

    rows = [line.split() for line in lines[body_start:] if line.strip()]
    if len(rows) != vertex_count:
        raise ScanError(
            f"{path}: expected {vertex_count} vertex rows, found {len(rows)}"
        )
    pts = np.empty((vertex_count, 3))
    try:
        for i, row in enumerate(rows):
            pts[i] = [float(row[c]) for c in cols]
    except (ValueError, IndexError) as exc:
        raise ScanError(f"{path}: malformed vertex row {i + 1}: {exc}") from exc
    try:
        return PointCloud(pts)
    except ValueError as exc:
        raise ScanError(f"{path}: {exc}") from exc
