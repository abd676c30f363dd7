#!/usr/bin/env python3
"""Generate a synthetic constant-motion dataset for exercising the toolkit.

Writes kitti_bin scans, ego poses, a manifest, and a matched pair of
ground-truth / noisy-prediction trajectory files for the e2e evaluation.

Example:
    python3 scripts/make_synthetic_dataset.py --out /tmp/demo --sequences 4
"""

import argparse
import math
from pathlib import Path

import numpy as np

from pcforecast.clouds import RigidTransform
from pcforecast.synthetic import box_cloud, constant_motion_sequence, write_dataset
from pcforecast.trajectories import Trajectory, TrajectorySet, save_trajectories


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--sequences", type=int, default=4)
    parser.add_argument("--frames", type=int, default=12)
    parser.add_argument("--points", type=int, default=2000)
    parser.add_argument("--frame-period", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    sequences = {}
    for i in range(args.sequences):
        base = box_cloud(args.points, rng)
        yaw = rng.uniform(-0.03, 0.03)
        rot = np.array([[math.cos(yaw), -math.sin(yaw), 0.0],
                        [math.sin(yaw), math.cos(yaw), 0.0],
                        [0.0, 0.0, 1.0]])
        step = RigidTransform(rot, rng.uniform(-0.5, 0.5, 3) * [1.0, 1.0, 0.0])
        seq = constant_motion_sequence(base, step, args.frames,
                                       args.frame_period)
        sequences[f"seq{i:02d}"] = (seq, step)
    manifest_path = write_dataset(out, sequences,
                                  frame_period=args.frame_period)
    print(f"wrote {manifest_path}")

    # trajectory pair for eval-e2e: straight-line GT plus a noisy copy with
    # extra false-positive tracks
    horizon = 5
    gt_tracks = []
    pred_tracks = []
    for i in range(12):
        speed = rng.uniform(0.5, 2.0)
        heading = rng.uniform(0, 2 * math.pi)
        origin = rng.uniform(-20, 20, 2)
        gt_tracks.append(Trajectory(
            f"g{i}",
            {t: list(origin + t * speed * np.array([math.cos(heading),
                                                    math.sin(heading)]))
             for t in range(1, horizon + 1)}))
        noise = rng.normal(0, 0.3, (horizon, 2))
        pred_tracks.append(Trajectory(
            f"p{i}",
            {t: list(np.asarray(gt_tracks[-1].position(t)) + noise[t - 1])
             for t in range(1, horizon + 1)}))
    for i in range(3):  # spurious predictions far from everything
        pred_tracks.append(Trajectory(
            f"fp{i}", {t: list(rng.uniform(200, 300, 2))
                       for t in range(1, horizon + 1)}))
    save_trajectories(TrajectorySet(tuple(gt_tracks), "ground_truth", horizon),
                      out / "gt_trajectories.jsonl")
    save_trajectories(TrajectorySet(tuple(pred_tracks), "predicted", horizon),
                      out / "pred_trajectories.jsonl")
    print(f"wrote {out / 'gt_trajectories.jsonl'} and "
          f"{out / 'pred_trajectories.jsonl'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
