"""Dataset manifests: frame-indexed scan files with optional ego poses.

Manifest document::

    {"frame_period": 0.1,
     "sequences": {"seq00": [{"t": 0, "scan": "seq00/000000.bin",
                              "ego": [[...4x4 row-major...]],
                              "corr": "seq00/000000_corr.json"}, ...]}}

Scan/correspondence paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from .clouds import PointCloud, PointCloudSequence, RigidTransform, load_scan


class ManifestError(ValueError):
    """A manifest document is malformed or references missing files."""


@dataclass(frozen=True, eq=False)
class FrameRecord:
    index: int
    scan_path: Path
    ego_pose: RigidTransform | None = None
    corr_path: Path | None = None


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    frame_period: float
    sequences: dict  # sequence id -> tuple[FrameRecord, ...]

    def __post_init__(self):
        if not (self.frame_period > 0):
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")
        object.__setattr__(self, "sequences",
                           MappingProxyType(dict(self.sequences)))

    @property
    def sequence_ids(self) -> tuple[str, ...]:
        return tuple(self.sequences)

    def frames(self, sequence_id: str) -> tuple[FrameRecord, ...]:
        try:
            return self.sequences[sequence_id]
        except KeyError:
            raise ManifestError(f"unknown sequence {sequence_id!r}") from None

    def frame(self, sequence_id: str, index: int) -> FrameRecord:
        records = self.frames(sequence_id)
        offset = index - records[0].index
        if not 0 <= offset < len(records):
            raise ManifestError(
                f"sequence {sequence_id!r} has no frame {index} "
                f"(range {records[0].index}..{records[-1].index})"
            )
        return records[offset]

    def load_sequence(self, sequence_id: str, fmt: str = "kitti_bin",
                      start: int | None = None,
                      count: int | None = None) -> PointCloudSequence:
        records = self.frames(sequence_id)
        if start is not None:
            records = tuple(r for r in records if r.index >= start)
        if count is not None:
            records = records[:count]
        if not records:
            raise ManifestError(f"sequence {sequence_id!r} selection is empty")
        frames = tuple(load_scan(r.scan_path, fmt) for r in records)
        return PointCloudSequence(frames, self.frame_period,
                                  start_index=records[0].index)

    def ego_poses(self, sequence_id: str) -> tuple[RigidTransform, ...] | None:
        """Poses for every frame of the sequence, or None if any is missing."""
        records = self.frames(sequence_id)
        poses = tuple(r.ego_pose for r in records)
        if any(p is None for p in poses):
            return None
        return poses


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest root must be an object")
    try:
        frame_period = float(doc["frame_period"])
    except (KeyError, TypeError, ValueError):
        raise ManifestError(f"{path}: missing or invalid 'frame_period'") from None
    if not frame_period > 0:
        raise ManifestError(f"{path}: frame_period must be positive")
    sequences_doc = doc.get("sequences")
    if not isinstance(sequences_doc, dict) or not sequences_doc:
        raise ManifestError(f"{path}: 'sequences' must be a non-empty object")

    base = path.parent
    sequences = {}
    for seq_id, entries in sequences_doc.items():
        if not isinstance(entries, list) or not entries:
            raise ManifestError(f"{path}: sequence {seq_id!r} must be a non-empty list")
        records = []
        for entry in entries:
            records.append(_parse_entry(entry, base, path, seq_id))
        records.sort(key=lambda r: r.index)
        for prev, cur in zip(records, records[1:]):
            if cur.index != prev.index + 1:
                raise ManifestError(
                    f"{path}: sequence {seq_id!r} frame indices are not contiguous "
                    f"({prev.index} followed by {cur.index})"
                )
        sequences[seq_id] = tuple(records)
    return DatasetManifest(frame_period, sequences)


def _parse_entry(entry, base: Path, path: Path, seq_id: str) -> FrameRecord:
    if not isinstance(entry, dict) or "t" not in entry or "scan" not in entry:
        raise ManifestError(
            f"{path}: sequence {seq_id!r} entries need 't' and 'scan' keys"
        )
    index = entry["t"]
    if not isinstance(index, int):
        raise ManifestError(f"{path}: sequence {seq_id!r} frame index must be an int")
    scan_path = base / entry["scan"]
    if not scan_path.is_file():
        raise ManifestError(
            f"{path}: sequence {seq_id!r} frame {index}: missing scan {scan_path}"
        )
    ego_pose = None
    if entry.get("ego") is not None:
        try:
            ego_pose = RigidTransform.from_matrix(entry["ego"])
        except ValueError as exc:
            raise ManifestError(
                f"{path}: sequence {seq_id!r} frame {index}: bad ego pose: {exc}"
            ) from exc
    corr_path = None
    if entry.get("corr") is not None:
        corr_path = base / entry["corr"]
        if not corr_path.is_file():
            raise ManifestError(
                f"{path}: sequence {seq_id!r} frame {index}: "
                f"missing correspondence file {corr_path}"
            )
    return FrameRecord(index, scan_path, ego_pose, corr_path)


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Serialize with paths stored relative to the output location."""
    path = Path(path)
    base = path.parent
    doc = {"frame_period": manifest.frame_period, "sequences": {}}
    for seq_id in sorted(manifest.sequence_ids):
        entries = []
        for rec in manifest.sequences[seq_id]:
            entry = {"t": rec.index,
                     "scan": os.path.relpath(rec.scan_path, base)}
            if rec.ego_pose is not None:
                entry["ego"] = [[float(v) for v in row]
                                for row in rec.ego_pose.as_matrix()]
            if rec.corr_path is not None:
                entry["corr"] = os.path.relpath(rec.corr_path, base)
            entries.append(entry)
        doc["sequences"][seq_id] = entries
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def load_correspondences(path) -> list[tuple[int, int]]:
    """Read a point-correspondence file: ``{"pairs": [[src_idx, dst_idx], ...]}``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: cannot read correspondences: {exc}") from exc
    pairs = doc.get("pairs") if isinstance(doc, dict) else None
    if not isinstance(pairs, list):
        raise ManifestError(f"{path}: expected an object with a 'pairs' list")
    out = []
    for pair in pairs:
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise ManifestError(f"{path}: each pair must be [src_idx, dst_idx]")
        out.append((int(pair[0]), int(pair[1])))
    return out
