import logging
import os.path as osp
from typing import Dict, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import torch
from tqdm import tqdm

from fdin.checkpoint import load_checkpoint
from fdin.data.utils import DatasetManifest, makedirs
from fdin.data.video import VideoClip, MaskSequence, anchored_starts, load_clip, load_masks, psnr, recompress_qf, save_masks
from fdin.evaluate.metrics import MetricsReport, per_frame_f1, per_frame_iou
from fdin.models.fdin import FDIN, binarize

logger = logging.getLogger(__name__)

DEFAULT_T_C = 8
UNCOMPRESSED = 'uncompressed'


def condition_label(qf=None):
    return UNCOMPRESSED if qf is None else f'QF{int(qf)}'


def resolve_model(checkpoint):
    r"""Accept a loaded :class:`~fdin.models.FDIN` or a checkpoint path; return ``(model, metadata)``."""
    if isinstance(checkpoint, FDIN):
        return checkpoint.eval(), {}
    return load_checkpoint(checkpoint)


@torch.no_grad()
def predict_logits(model: FDIN, clip: VideoClip, t_c: int, stride: Optional[int] = None):
    r"""
    Per-frame logits for a whole clip.

    Windows start every ``stride`` frames (default ``t_c``) with a final window
    anchored at ``T - t_c``; frames covered by several windows get the
    per-pixel mean of their logits.

    Returns
    -------
    Tensor
        ``(T, H, W)`` float logits on the CPU.
    """
    if clip.hw != model.resolution:
        raise ValueError(f"clip resolution {clip.hw} does not match checkpoint resolution {model.resolution}")
    model.eval()
    num_frames = len(clip)
    total = torch.zeros((num_frames,) + clip.hw, dtype=torch.float64)
    counts = torch.zeros(num_frames, dtype=torch.float64)
    for start in anchored_starts(num_frames, t_c, stride):
        window = clip.frames[start:start + t_c][None].to(model.device)
        logits = model(window)[0, :, 0].double().cpu()
        total[start:start + t_c] += logits
        counts[start:start + t_c] += 1
    return (total / counts[:, None, None]).float()


def predict_clip(model: FDIN, clip: VideoClip, t_c: int, threshold: float = 0.5,
                 stride: Optional[int] = None) -> MaskSequence:
    return MaskSequence(binarize(predict_logits(model, clip, t_c, stride), threshold))


def evaluate(checkpoint, manifest: DatasetManifest, threshold: float = 0.5, t_c: Optional[int] = None,
             stride: Optional[int] = None, qf: Optional[int] = None, predictions_dir: Optional[str] = None,
             seed: Optional[int] = None, config_digest: Optional[str] = None) -> MetricsReport:
    r"""
    Score a model on every clip of a manifest.

    Parameters
    ----------
    checkpoint: str or FDIN
        Checkpoint path or a loaded model.
    manifest: DatasetManifest
        Clips with ground truth.
    threshold: float, optional
        Binarization threshold on probabilities. (default: :obj:`0.5`)
    t_c: int, optional
        Window length; defaults to the checkpoint's, else 8.
    stride: int, optional
        Window stride; defaults to ``t_c``.
    qf: int, optional
        Recompress every frame as JPEG at this quality first.
    predictions_dir: str, optional
        Also write the binary predictions as ``<dir>/<clip_id>/mask_%05d.png``.
    seed: int, optional
        Recorded in the report.
    config_digest: str, optional
        Recorded in the report; defaults to the checkpoint's.

    Returns
    -------
    MetricsReport
    """
    model, metadata = resolve_model(checkpoint)
    t_c = t_c or int(metadata.get('t_c', DEFAULT_T_C))
    report = MetricsReport(condition_label(qf), seed=seed,
                           config_digest=config_digest or metadata.get('config_digest'))
    fidelity = []
    for record in tqdm(manifest.records, desc=f'eval {report.condition}'):
        clip, gt = load_clip(record.frame_dir, record.mask_dir)
        if clip.hw != model.resolution:
            raise ValueError(
                f"clip {record.clip_id} resolution {clip.hw} does not match checkpoint resolution {model.resolution}")
        if qf is not None:
            recompressed = recompress_qf(clip, qf)
            fidelity.append(psnr(clip.frames, recompressed.frames))
            clip = recompressed
        pred = predict_clip(model, clip, t_c, threshold, stride)
        if predictions_dir is not None:
            save_masks(pred.masks, osp.join(predictions_dir, record.clip_id))
        report.add_clip(record.clip_id, per_frame_iou(pred, gt).tolist(), per_frame_f1(pred, gt).tolist())
    if fidelity:
        logger.info("%s: mean PSNR %.2f dB against the uncompressed frames",
                    report.condition, sum(fidelity) / len(fidelity))
    logger.info("%s: mIoU %.4f F1 %.4f over %d frames", report.condition, report.miou, report.f1, report.n_frames)
    return report


def evaluate_predictions(predictions_dir, manifest: DatasetManifest, condition='predictions',
                         seed=None, config_digest=None) -> MetricsReport:
    r"""Score precomputed masks under ``<predictions_dir>/<clip_id>/`` against a manifest, without a model."""
    report = MetricsReport(condition, seed=seed, config_digest=config_digest)
    for record in tqdm(manifest.records, desc=f'eval {condition}'):
        pred_dir = osp.join(predictions_dir, record.clip_id)
        pred, gt = load_masks(pred_dir), load_masks(record.mask_dir)
        if len(pred) != len(gt):
            raise ValueError(f"{pred_dir}: {len(pred)} predicted masks for {len(gt)} ground-truth frames")
        report.add_clip(record.clip_id, per_frame_iou(pred, gt).tolist(), per_frame_f1(pred, gt).tolist())
    return report


def robustness_eval(checkpoint, manifest: DatasetManifest, qf_list: Sequence[int], output_dir=None,
                    threshold=0.5, t_c=None, stride=None, seed=None) -> Dict[str, MetricsReport]:
    r"""
    Evaluate the uncompressed clips and each JPEG recompression in ``qf_list``.

    Conditions run from uncompressed down to the lowest quality factor. With
    ``output_dir`` set, each report is written as ``metrics_<condition>.jsonl``
    next to ``robustness_summary.tsv`` and ``robustness.png``.

    Returns
    -------
    dict
        Condition label to :class:`MetricsReport`, in evaluation order.
    """
    for qf in qf_list:
        if not 1 <= int(qf) <= 100:
            raise ValueError(f"quality factor must lie in [1, 100], got {qf}")
    model, metadata = resolve_model(checkpoint)
    reports = {}
    for qf in [None] + sorted({int(q) for q in qf_list}, reverse=True):
        report = evaluate(model, manifest, threshold, t_c or int(metadata.get('t_c', DEFAULT_T_C)), stride, qf,
                          seed=seed, config_digest=metadata.get('config_digest'))
        reports[report.condition] = report
    if output_dir is not None:
        write_robustness(reports, output_dir)
    return reports


def summary_frame(reports: Dict[str, MetricsReport]):
    return pd.DataFrame([{'condition': r.condition, 'miou': r.miou, 'f1': r.f1} for r in reports.values()],
                        columns=['condition', 'miou', 'f1'])


def plot_robustness(summary: pd.DataFrame, file_path):
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=120)
    x = range(len(summary))
    ax.plot(x, summary['miou'], marker='o', label='mIoU')
    ax.plot(x, summary['f1'], marker='s', label='F1')
    ax.set_xticks(list(x))
    ax.set_xticklabels(summary['condition'])
    ax.set_ylim(0, 1)
    ax.set_xlabel('condition')
    ax.set_ylabel('score')
    ax.grid(alpha=0.3)
    ax.legend()
    fig.savefig(file_path, bbox_inches='tight')
    plt.close(fig)
    return file_path


def write_robustness(reports: Dict[str, MetricsReport], output_dir):
    makedirs(output_dir)
    for label, report in reports.items():
        report.save(osp.join(output_dir, f'metrics_{label}.jsonl'))
    summary = summary_frame(reports)
    summary.to_csv(osp.join(output_dir, 'robustness_summary.tsv'), sep='\t', index=False)
    plot_robustness(summary, osp.join(output_dir, 'robustness.png'))
    return summary
