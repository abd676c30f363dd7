"""End-to-end training: windows from a manifest, Adam, loss CSV, checkpoints,
and kitti_bin forecasts laid out for the toolkit's eval-spf command.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainerConfig
from .formats import (
    GridSpec,
    read_manifest,
    read_rangemap,
    read_scan,
    write_scan,
)
from .losses import chamfer, frame_mask_bce, frame_masked_l1
from .model import SequenceForecaster


@dataclass(frozen=True)
class Window:
    sequence_id: str
    anchor: int                  # index of the last observed frame
    past: tuple                  # FrameEntry per past frame
    future: tuple                # FrameEntry per future frame


def collect_windows(manifest_path, config: TrainerConfig) -> list[Window]:
    _, sequences = read_manifest(manifest_path)
    windows = []
    span = config.past_frames + config.horizon
    for seq_id, frames in sequences.items():
        for start in range(0, len(frames) - span + 1):
            past = tuple(frames[start:start + config.past_frames])
            future = tuple(frames[start + config.past_frames:start + span])
            windows.append(Window(seq_id, past[-1].index, past, future))
    if not windows:
        raise ValueError(
            f"no training windows: need {span} consecutive frames per window"
        )
    return windows


def _strided_cap(points: np.ndarray, cap: int) -> np.ndarray:
    if len(points) <= cap:
        return points
    stride = int(np.ceil(len(points) / cap))
    return points[::stride]


class WindowLoader:
    """Loads window tensors; caches the grid's bin directions."""

    def __init__(self, config: TrainerConfig):
        self.config = config
        self.grid = GridSpec(config.grid_height, config.grid_width,
                             config.phi_min, config.phi_max,
                             config.theta_min, config.theta_max)
        self.directions = torch.from_numpy(
            self.grid.bin_directions()).to(torch.float32)

    def load_maps(self, entries) -> tuple[torch.Tensor, torch.Tensor]:
        """(T, H, W) ranges and masks from the SPFR files next to the scans."""
        ranges, masks = [], []
        for entry in entries:
            path = entry.rangemap_path
            if not path.is_file():
                raise FileNotFoundError(
                    f"{path} is missing; precompute range maps with "
                    f"'pcforecast rangemap encode' before training"
                )
            grid, rng_arr, mask_arr = read_rangemap(path)
            if (grid.height, grid.width) != self.config.grid_shape:
                raise ValueError(
                    f"{path}: grid {grid.height}x{grid.width} does not match "
                    f"the configured {self.config.grid_shape}"
                )
            ranges.append(torch.from_numpy(rng_arr.astype(np.float32)))
            masks.append(torch.from_numpy(mask_arr.astype(np.float32)))
        return torch.stack(ranges), torch.stack(masks)

    def load_clouds(self, entries) -> list[torch.Tensor]:
        clouds = []
        for entry in entries:
            pts = _strided_cap(read_scan(entry.scan_path),
                               self.config.gt_points_cap)
            clouds.append(torch.from_numpy(pts.astype(np.float32)))
        return clouds

    def map_to_cloud(self, ranges: torch.Tensor,
                     mask: torch.Tensor) -> torch.Tensor:
        """Differentiable reconstruction: range times bin direction at every
        masked-in pixel."""
        occupied = mask > 0
        return ranges[occupied, None] * self.directions[occupied]

    def predicted_cloud(self, ranges: torch.Tensor,
                        logits: torch.Tensor) -> torch.Tensor:
        """Inference reconstruction: predicted mask at 0.5, positive ranges."""
        keep = (torch.sigmoid(logits) > 0.5) & (ranges > 0)
        return ranges[keep, None] * self.directions[keep]


def _batch_loss(model: SequenceForecaster, loader: WindowLoader,
                batch: list[Window], config: TrainerConfig):
    """Mean window loss over the batch (frame losses summed per window)."""
    batch_size = len(batch)
    horizon = config.horizon
    if config.encoder == "rangemap":
        past = torch.stack([loader.load_maps(w.past)[0] for w in batch])
        future = [loader.load_maps(w.future) for w in batch]
        gt_ranges = torch.stack([f[0] for f in future])   # (B, N, H, W)
        gt_masks = torch.stack([f[1] for f in future])
        features = model.encode_rangemaps(past)
        predicted = model.forecast_features(features, horizon)
        flat_ranges, flat_logits = model.decoder(
            predicted.reshape(batch_size * horizon, -1))
        pred_ranges = flat_ranges.reshape(batch_size, horizon,
                                          *flat_ranges.shape[1:])
        logits = flat_logits.reshape(batch_size, horizon,
                                     *flat_logits.shape[1:])
        cd_total = 0.0
        for b in range(batch_size):
            for i in range(horizon):
                pred_cloud = loader.map_to_cloud(pred_ranges[b, i],
                                                 gt_masks[b, i])
                gt_cloud = loader.map_to_cloud(gt_ranges[b, i], gt_masks[b, i])
                cd_total = cd_total + chamfer(pred_cloud, gt_cloud)
        l1_frames = frame_masked_l1(pred_ranges, gt_ranges, gt_masks)
        bce_frames = frame_mask_bce(logits, gt_masks)
        total = (cd_total + config.lambda_l1 * l1_frames.sum()
                 + config.lambda_bce * bce_frames.sum()) / batch_size
        parts = {"cd": float(cd_total.detach()),
                 "l1": float(l1_frames.detach().sum()),
                 "bce": float(bce_frames.detach().sum())}
        return total, parts

    features = torch.cat([model.encode_clouds(loader.load_clouds(w.past))
                          for w in batch])                  # (B, M, D)
    predicted = model.forecast_features(features, horizon)
    pred_clouds = model.decoder(predicted.reshape(batch_size * horizon, -1))
    pred_clouds = pred_clouds.reshape(batch_size, horizon,
                                      config.decoder_points, 3)
    cd_total = 0.0
    for b, window in enumerate(batch):
        for i, gt_cloud in enumerate(loader.load_clouds(window.future)):
            cd_total = cd_total + chamfer(pred_clouds[b, i], gt_cloud)
    total = cd_total / batch_size
    return total, {"cd": float(cd_total.detach()), "l1": 0.0, "bce": 0.0}


def _save_checkpoint(model, optimizer, step, config, path: Path) -> None:
    tmp = path.with_suffix(".tmp")
    torch.save({"model": model.state_dict(),
                "optimizer": optimizer.state_dict(),
                "step": step,
                "config": config.to_dict()}, tmp)
    os.replace(tmp, path)


def emit_forecasts(model: SequenceForecaster, loader: WindowLoader,
                   windows, config: TrainerConfig, out_dir: Path,
                   first_window_only: bool = True) -> None:
    """Write predicted future frames as kitti_bin in the evaluation layout:
    <out>/<seq>/<method>/<anchor>/<frame>.bin."""
    model.eval()
    seen = set()
    with torch.no_grad():
        for window in windows:
            if first_window_only and window.sequence_id in seen:
                continue
            seen.add(window.sequence_id)
            if config.encoder == "rangemap":
                past_ranges, _ = loader.load_maps(window.past)
                features = model.encode_rangemaps(past_ranges.unsqueeze(0))
            else:
                features = model.encode_clouds(loader.load_clouds(window.past))
            predicted = model.forecast_features(features, config.horizon)
            window_dir = (out_dir / window.sequence_id / config.method_name
                          / f"{window.anchor:06d}")
            window_dir.mkdir(parents=True, exist_ok=True)
            for i, entry in enumerate(window.future):
                if config.encoder == "rangemap":
                    ranges, logits = model.decoder(predicted[:, i])
                    cloud = loader.predicted_cloud(ranges[0], logits[0])
                else:
                    cloud = model.decoder(predicted[:, i])[0]
                write_scan(cloud.numpy().astype(np.float64),
                           window_dir / f"{entry.index:06d}.bin")
    model.train()


def train(manifest_path, out_dir, config: TrainerConfig) -> dict:
    """Run the optimization; returns the training summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    model = SequenceForecaster(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                                 betas=config.betas)
    windows = collect_windows(manifest_path, config)
    loader = WindowLoader(config)
    order_rng = np.random.default_rng(config.seed)

    total_steps = 0
    budget = config.max_steps
    checkpoint_path = out_dir / "checkpoint.pt"
    loss_rows = []
    done = False
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(windows))
        for start in range(0, len(order), config.batch_size):
            batch = [windows[i] for i in order[start:start + config.batch_size]]
            optimizer.zero_grad()
            batch_loss, batch_parts = _batch_loss(model, loader, batch, config)
            if not torch.isfinite(batch_loss):
                _write_rows(out_dir / "loss.csv", loss_rows)
                raise RuntimeError(
                    f"non-finite loss at step {total_steps + 1}; last good "
                    f"checkpoint: {checkpoint_path}"
                )
            batch_loss.backward()
            optimizer.step()
            total_steps += 1
            per_frame = {k: v / (len(batch) * config.horizon)
                         for k, v in batch_parts.items()}
            loss_rows.append((total_steps, float(batch_loss.detach()),
                              per_frame["cd"], per_frame["l1"],
                              per_frame["bce"]))
            if total_steps % config.checkpoint_every == 0:
                _save_checkpoint(model, optimizer, total_steps, config,
                                 checkpoint_path)
            if budget is not None and total_steps >= budget:
                done = True
                break
        if done:
            break

    _save_checkpoint(model, optimizer, total_steps, config, checkpoint_path)
    _write_rows(out_dir / "loss.csv", loss_rows)
    emit_forecasts(model, loader, windows, config, out_dir / "forecasts")
    summary = {"config": config.to_dict(), "steps": total_steps,
               "final_loss": loss_rows[-1][1],
               "final_cd_per_frame": loss_rows[-1][2],
               "first_cd_per_frame": loss_rows[0][2]}
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _write_rows(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "cd_per_frame", "l1_per_frame",
                         "bce_per_frame"])
        writer.writerows(rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Train the sequence forecaster on a scan manifest")
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--config", default=None,
                        help="JSON file of TrainerConfig fields")
    parser.add_argument("--encoder", choices=("point", "rangemap"),
                        default=None)
    parser.add_argument("--past", type=int, default=None)
    parser.add_argument("--horizon", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    config = TrainerConfig.from_json(args.config) if args.config \
        else TrainerConfig()
    overrides = {"encoder": args.encoder, "past_frames": args.past,
                 "horizon": args.horizon, "epochs": args.epochs,
                 "max_steps": args.max_steps, "batch_size": args.batch_size,
                 "learning_rate": args.learning_rate, "seed": args.seed}
    for field, value in overrides.items():
        if value is not None:
            setattr(config, field, value)
    config.__post_init__()

    try:
        summary = train(args.manifest, args.out, config)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"trained {summary['steps']} steps, final loss "
          f"{summary['final_loss']:.6g}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
