"""Frame-indexed 2D ground-position trajectories with validity masks.

File format: UTF-8 JSON lines, one trajectory per line,
``{"id": "obj-3", "frames": {"1": [x, y], "2": [x, y]}}``.
A frame index missing from ``frames`` is an invalid (masked-out) frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

import numpy as np

ROLES = ("predicted", "ground_truth")


class TrajectoryError(ValueError):
    """A trajectory file or trajectory set violates its contract."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    object_id: str
    positions: dict  # frame index -> (2,) float64 ground position, meters

    def __post_init__(self):
        if not self.positions:
            raise ValueError(f"trajectory {self.object_id!r} has no valid frames")
        clean = {}
        for frame, pos in self.positions.items():
            arr = np.asarray(pos, dtype=np.float64).reshape(2)
            if not np.all(np.isfinite(arr)):
                raise ValueError(
                    f"trajectory {self.object_id!r} has a non-finite position "
                    f"at frame {frame}"
                )
            arr.flags.writeable = False
            clean[int(frame)] = arr
        object.__setattr__(self, "positions", MappingProxyType(clean))

    @property
    def frames(self) -> tuple[int, ...]:
        return tuple(sorted(self.positions))

    @property
    def valid_count(self) -> int:
        return len(self.positions)

    def position(self, frame: int) -> np.ndarray:
        return self.positions[frame]


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    trajectories: tuple[Trajectory, ...]
    role: str
    horizon: int

    def __post_init__(self):
        trajectories = tuple(self.trajectories)
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        seen = {}
        for traj in trajectories:
            if traj.object_id in seen:
                raise TrajectoryError(f"duplicate object id {traj.object_id!r}")
            seen[traj.object_id] = traj
        object.__setattr__(self, "trajectories", trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.object_id for t in self.trajectories)


def load_trajectories(path, role: str = "predicted",
                      horizon: int | None = None) -> TrajectorySet:
    """Parse a JSON-lines trajectory file.

    ``horizon`` defaults to the largest frame index present in the file.
    Malformed lines and duplicate ids are rejected with their line numbers.
    """
    path = Path(path)
    trajectories: list[Trajectory] = []
    line_of_id: dict[str, int] = {}
    max_frame = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict) or "id" not in doc or "frames" not in doc:
                raise TrajectoryError(
                    f"{path}:{lineno}: expected an object with 'id' and 'frames'"
                )
            object_id = doc["id"]
            if not isinstance(object_id, str):
                raise TrajectoryError(f"{path}:{lineno}: 'id' must be a string")
            if object_id in line_of_id:
                raise TrajectoryError(
                    f"{path}: duplicate trajectory id {object_id!r} "
                    f"(lines {line_of_id[object_id]} and {lineno})"
                )
            line_of_id[object_id] = lineno
            frames = doc["frames"]
            if not isinstance(frames, dict) or not frames:
                raise TrajectoryError(
                    f"{path}:{lineno}: 'frames' must be a non-empty object"
                )
            positions = {}
            for key, value in frames.items():
                try:
                    frame = int(key)
                except ValueError:
                    raise TrajectoryError(
                        f"{path}:{lineno}: frame key {key!r} is not an integer"
                    ) from None
                if not (isinstance(value, (list, tuple)) and len(value) == 2):
                    raise TrajectoryError(
                        f"{path}:{lineno}: frame {key} position must be [x, y]"
                    )
                positions[frame] = value
            try:
                traj = Trajectory(object_id, positions)
            except ValueError as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from exc
            max_frame = max(max_frame, max(positions))
            trajectories.append(traj)
    if not trajectories:
        raise TrajectoryError(f"{path}: no trajectories found")
    if horizon is None:
        horizon = max(max_frame, 1)
    return TrajectorySet(tuple(trajectories), role=role, horizon=horizon)


def save_trajectories(trajectory_set: TrajectorySet, path) -> None:
    path = Path(path)
    lines = []
    for traj in trajectory_set.trajectories:
        frames = {str(t): [float(x), float(y)]
                  for t, (x, y) in sorted(traj.positions.items())}
        lines.append(json.dumps({"id": traj.object_id, "frames": frames}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
