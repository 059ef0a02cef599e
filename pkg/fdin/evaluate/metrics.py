from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch

from fdin.data.utils import write_jsonl
from fdin.data.video import MaskSequence


def _as_bool(masks, name):
    if isinstance(masks, MaskSequence):
        masks = masks.masks
    masks = torch.as_tensor(masks)
    if not bool(((masks == 0) | (masks == 1)).all()):
        raise ValueError(f"{name} masks must be binary")
    if masks.dim() == 2:
        masks = masks[None]
    return masks.bool()


def _pair(pred, gt):
    p, g = _as_bool(pred, 'pred'), _as_bool(gt, 'gt')
    if p.shape != g.shape:
        raise ValueError(f"pred {tuple(p.shape)} and gt {tuple(g.shape)} shapes do not match")
    return p, g


def per_frame_iou(pred, gt):
    r"""IoU of the positive class per frame; a frame with an empty union scores 1."""
    p, g = _pair(pred, gt)
    inter = (p & g).sum(dim=(-2, -1)).double()
    union = (p | g).sum(dim=(-2, -1)).double()
    return torch.where(union == 0, torch.ones_like(union), inter / union.clamp(min=1))


def per_frame_f1(pred, gt):
    r"""``2 |pred & gt| / (|pred| + |gt|)`` per frame; a frame with both masks empty scores 1."""
    p, g = _pair(pred, gt)
    inter = (p & g).sum(dim=(-2, -1)).double()
    total = (p.sum(dim=(-2, -1)) + g.sum(dim=(-2, -1))).double()
    return torch.where(total == 0, torch.ones_like(total), 2 * inter / total.clamp(min=1))


def compute_miou(pred, gt) -> float:
    r"""
    Mean over frames of the inpainted-class IoU.

    Parameters
    ----------
    pred: MaskSequence or Tensor
        Binary ``(T, H, W)`` or ``(H, W)`` prediction.
    gt: MaskSequence or Tensor
        Binary ground truth of the same shape.
    """
    return per_frame_iou(pred, gt).mean().item()


def compute_f1(pred, gt) -> float:
    r"""Mean over frames of the per-frame F1 score, see :func:`compute_miou`."""
    return per_frame_f1(pred, gt).mean().item()


@dataclass
class ClipMetrics:
    clip_id: str
    iou: List[float]
    f1: List[float]

    def record(self):
        return {
            'clip_id': self.clip_id,
            'iou': self.iou,
            'f1': self.f1,
            'miou': float(np.mean(self.iou)),
            'mean_f1': float(np.mean(self.f1)),
        }


@dataclass
class MetricsReport:
    r"""
    Per-clip and aggregate metrics for one evaluation condition.

    The aggregate mIoU and F1 are means over every frame of every clip, not
    means of clip means.
    """
    condition: str = 'uncompressed'
    clips: List[ClipMetrics] = field(default_factory=list)
    seed: Optional[int] = None
    config_digest: Optional[str] = None

    def add_clip(self, clip_id, iou, f1):
        self.clips.append(ClipMetrics(clip_id, [float(v) for v in iou], [float(v) for v in f1]))

    @property
    def n_frames(self):
        return sum(len(c.iou) for c in self.clips)

    @property
    def miou(self):
        if not self.clips:
            return float('nan')
        return float(np.mean([v for c in self.clips for v in c.iou]))

    @property
    def f1(self):
        if not self.clips:
            return float('nan')
        return float(np.mean([v for c in self.clips for v in c.f1]))

    def aggregate(self):
        return {
            'condition': self.condition,
            'miou': self.miou,
            'f1': self.f1,
            'n_frames': self.n_frames,
            'seed': self.seed,
            'config_digest': self.config_digest,
        }

    def records(self):
        return [c.record() for c in self.clips] + [self.aggregate()]

    def save(self, file_path):
        write_jsonl(file_path, self.records())
        return file_path
