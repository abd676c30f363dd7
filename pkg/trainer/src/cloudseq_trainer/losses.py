"""Training objective: Chamfer on clouds plus range-map regression terms.

Per future frame the composite is
``chamfer + lambda_l1 * masked_l1 + lambda_bce * bce``; frame losses are
summed over the horizon. The L1 term is averaged over ground-truth-occupied
pixels only (so its weight is resolution-independent); the mask term is a
mean binary cross-entropy over all pixels.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def chamfer(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Symmetric sum of squared nearest-neighbor distances, unnormalized."""
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValueError("chamfer needs non-empty clouds")
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return sq.min(dim=1).values.sum() + sq.min(dim=0).values.sum()


def masked_l1(pred_ranges: torch.Tensor, gt_ranges: torch.Tensor,
              gt_mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute range error over ground-truth-occupied pixels."""
    occupied = gt_mask > 0
    if not bool(occupied.any()):
        return pred_ranges.sum() * 0.0
    return (pred_ranges - gt_ranges)[occupied].abs().mean()


def mask_bce(logits: torch.Tensor, gt_mask: torch.Tensor) -> torch.Tensor:
    """Per-pixel mean binary cross-entropy on the occupancy logits."""
    return F.binary_cross_entropy_with_logits(logits, gt_mask.to(logits.dtype))


def composite_frame_loss(pred_cloud, gt_cloud, pred_ranges=None,
                         gt_ranges=None, mask_logits=None, gt_mask=None,
                         lambda_l1: float = 0.0, lambda_bce: float = 0.0):
    """One future frame's loss; returns (total, parts dict of floats)."""
    cd = chamfer(pred_cloud, gt_cloud)
    total = cd
    parts = {"cd": float(cd.detach())}
    if lambda_l1 > 0.0:
        l1 = masked_l1(pred_ranges, gt_ranges, gt_mask)
        total = total + lambda_l1 * l1
        parts["l1"] = float(l1.detach())
    if lambda_bce > 0.0:
        bce = mask_bce(logits=mask_logits, gt_mask=gt_mask)
        total = total + lambda_bce * bce
        parts["bce"] = float(bce.detach())
    return total, parts


def frame_masked_l1(pred_ranges: torch.Tensor, gt_ranges: torch.Tensor,
                    gt_masks: torch.Tensor) -> torch.Tensor:
    """Per-frame occupied-pixel L1 means over a (B, N, H, W) batch -> (B, N)."""
    occupied = (gt_masks > 0).to(pred_ranges.dtype)
    counts = occupied.sum(dim=(2, 3)).clamp(min=1.0)
    return ((pred_ranges - gt_ranges).abs() * occupied).sum(dim=(2, 3)) / counts


def frame_mask_bce(logits: torch.Tensor, gt_masks: torch.Tensor) -> torch.Tensor:
    """Per-frame mean mask cross-entropy over a (B, N, H, W) batch -> (B, N)."""
    per_pixel = F.binary_cross_entropy_with_logits(
        logits, gt_masks.to(logits.dtype), reduction="none")
    return per_pixel.mean(dim=(2, 3))
