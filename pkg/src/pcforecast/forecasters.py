"""Non-learned sequence forecasters: identity, ego-motion warp, ICP warp.

The motion-based forecasters estimate one average per-frame rigid motion
from the past frames and roll it forward: predicted frame ``k`` is the last
observed frame warped by the k-th power of the average motion. Warps map
coordinates of one sensor frame into the next, so a prediction lives in the
(future) sensor frame it is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .clouds import PointCloud, PointCloudSequence, RigidTransform

QUAT_SUM_TOL = 1e-9


class ForecastError(ValueError):
    """A forecast request cannot be satisfied."""


class IcpError(RuntimeError):
    """ICP registration failed (too few correspondences or degenerate geometry)."""


@dataclass(frozen=True, eq=False)
class ForecastRequest:
    past: PointCloudSequence
    horizon: int
    ego_poses: tuple[RigidTransform, ...] | None = None  # world <- sensor, per past frame

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.ego_poses is not None:
            poses = tuple(self.ego_poses)
            if len(poses) != len(self.past):
                raise ValueError(
                    f"need one ego pose per past frame: "
                    f"{len(poses)} poses for {len(self.past)} frames"
                )
            object.__setattr__(self, "ego_poses", poses)


@dataclass(frozen=True, eq=False)
class ForecastResult:
    frames: tuple[PointCloud, ...]
    method: str
    diagnostics: tuple[dict, ...]
    method_info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frames) != len(self.diagnostics):
            raise ValueError("one diagnostics entry per predicted frame")


@dataclass(frozen=True)
class IcpParams:
    max_iter: int = 50
    tol: float = 1e-6
    max_corr_dist: float = 2.0


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: RigidTransform
    converged: bool
    iterations: int
    residual: float
    correspondences: int

    def as_dict(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations,
                "residual": self.residual, "correspondences": self.correspondences}


def forecast_identity(request: ForecastRequest) -> ForecastResult:
    """Repeat the last observed frame for every future frame."""
    last = request.past.last
    frames = tuple(last for _ in range(request.horizon))
    diags = tuple({"source": "last past frame"} for _ in range(request.horizon))
    return ForecastResult(frames, "identity", diags)


def _mean_quaternion(quats: np.ndarray) -> np.ndarray:
    total = quats.sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < QUAT_SUM_TOL:
        raise ValueError("degenerate quaternion sum; rotations have no mean")
    return total / norm


def average_motion(transforms) -> RigidTransform:
    """Mean rigid motion: arithmetic mean of translations, quaternion mean
    (hemisphere-aligned to the first element) of rotations."""
    transforms = list(transforms)
    if not transforms:
        raise ValueError("need at least one transform to average")
    translation = np.mean([t.translation for t in transforms], axis=0)
    quats = Rotation.from_matrix(
        np.stack([t.rotation for t in transforms])).as_quat().reshape(-1, 4)
    flip = quats @ quats[0] < 0
    quats[flip] *= -1.0
    mean = _mean_quaternion(quats)
    return RigidTransform(Rotation.from_quat(mean).as_matrix(), translation)


def _warp_forward(last: PointCloud, step: RigidTransform, horizon: int,
                  method: str, method_info: dict | None = None) -> ForecastResult:
    frames = []
    diags = []
    cumulative = RigidTransform.identity()
    for k in range(1, horizon + 1):
        cumulative = step @ cumulative
        frames.append(PointCloud(cumulative.apply(last.points)))
        diags.append({"step": k})
    return ForecastResult(tuple(frames), method, tuple(diags),
                          method_info or {})


def relative_motions(poses) -> list[RigidTransform]:
    """Per-step warps taking sensor-frame coordinates at t to those at t+1."""
    poses = list(poses)
    return [poses[i + 1].inverse() @ poses[i] for i in range(len(poses) - 1)]


def forecast_ego_warp(request: ForecastRequest) -> ForecastResult:
    """Warp the last frame forward by the average ground-truth ego step."""
    if request.ego_poses is None:
        raise ForecastError("ego warping needs ego poses for every past frame")
    if len(request.past) < 2:
        raise ForecastError("ego warping needs at least two past frames")
    step = average_motion(relative_motions(request.ego_poses))
    return _warp_forward(request.past.last, step, request.horizon, "ego_warp")


def icp_align(source: PointCloud, target: PointCloud,
              params: IcpParams | None = None) -> IcpResult:
    """Point-to-point ICP returning the rigid transform mapping source onto target.

    Each iteration matches transformed source points to their nearest target
    point within ``max_corr_dist``, then refits the full transform in closed
    form; stops when the mean residual improves by less than ``tol`` (or
    falls below it), or after ``max_iter`` iterations.
    """
    params = params or IcpParams()
    if len(source) < 3 or len(target) < 3:
        raise IcpError("ICP needs at least 3 points in both clouds")
    _check_not_collinear(source.points, "source")
    _check_not_collinear(target.points, "target")

    tree = cKDTree(target.points)
    src = source.points
    rotation = np.eye(3)
    translation = np.zeros(3)
    prev_residual = None
    converged = False
    iterations = 0
    residual = np.inf
    n_corr = 0
    for iterations in range(1, params.max_iter + 1):
        moved = src @ rotation.T + translation
        dists, idx = tree.query(moved, distance_upper_bound=params.max_corr_dist)
        matched = np.isfinite(dists)
        n_corr = int(matched.sum())
        if n_corr < 3:
            raise IcpError(
                f"only {n_corr} correspondences within {params.max_corr_dist} m "
                f"at iteration {iterations}"
            )
        rotation, translation = _fit_rigid(src[matched], target.points[idx[matched]])
        fitted = src[matched] @ rotation.T + translation
        residual = float(np.linalg.norm(
            fitted - target.points[idx[matched]], axis=1).mean())
        if residual < params.tol or (
                prev_residual is not None and prev_residual - residual < params.tol):
            converged = True
            break
        prev_residual = residual
    return IcpResult(RigidTransform(rotation, translation), converged,
                     iterations, residual, n_corr)


def _check_not_collinear(points: np.ndarray, name: str) -> None:
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[1] <= 1e-9 * max(svals[0], 1.0):
        raise IcpError(f"{name} cloud is collinear; rotation is underdetermined")


def _fit_rigid(src: np.ndarray, dst: np.ndarray):
    # Kabsch/Umeyama closed-form least-squares rigid fit.
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cov = (src - src_mean).T @ (dst - dst_mean)
    u, svals, vt = np.linalg.svd(cov)
    if svals[1] <= 1e-12 * max(svals[0], 1.0):
        raise IcpError("degenerate correspondence covariance (rank < 2)")
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    return rotation, dst_mean - rotation @ src_mean


def forecast_icp_warp(request: ForecastRequest,
                      params: IcpParams | None = None) -> ForecastResult:
    """Warp forward by the average ICP-estimated motion between past frames."""
    if len(request.past) < 2:
        raise ForecastError("ICP warping needs at least two past frames")
    results = [icp_align(request.past.frames[i], request.past.frames[i + 1], params)
               for i in range(len(request.past) - 1)]
    step = average_motion([r.transform for r in results])
    return _warp_forward(request.past.last, step, request.horizon, "icp_warp",
                         method_info={"icp": [r.as_dict() for r in results]})


FORECASTERS = {
    "identity": forecast_identity,
    "ego_warp": forecast_ego_warp,
    "icp_warp": forecast_icp_warp,
}
