import io
import os
import logging
import os.path as osp
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError
from torchmetrics.functional import peak_signal_noise_ratio

from fdin.data.utils import makedirs

logger = logging.getLogger(__name__)

FRAME_PATTERN = 'frame_{:05d}.png'
MASK_PATTERN = 'mask_{:05d}.png'
IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff')
MASK_THRESHOLD = 127


@dataclass
class VideoClip:
    r"""
    Ordered frames of one video.

    Attributes
    ----------
    frames: Tensor
        ``(T, 3, H, W)`` float tensor with values in ``[0, 1]``.
    fps: float, optional
        Frame rate when known.
    """
    frames: torch.Tensor
    fps: Optional[float] = None

    def __post_init__(self):
        if self.frames.dim() != 4 or self.frames.shape[1] != 3:
            raise ValueError(f"clip frames must be (T, 3, H, W), got {tuple(self.frames.shape)}")
        if self.frames.shape[0] < 1:
            raise ValueError("clip must contain at least one frame")
        if not torch.isfinite(self.frames).all():
            raise ValueError("clip frames contain non-finite values")
        if self.frames.min() < 0 or self.frames.max() > 1:
            raise ValueError("clip frame values must lie in [0, 1]")
        if self.fps is not None and self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def hw(self):
        return tuple(self.frames.shape[-2:])


@dataclass
class MaskSequence:
    r"""Binary ``(T, H, W)`` uint8 masks, 1 marking inpainted pixels."""
    masks: torch.Tensor

    def __post_init__(self):
        if self.masks.dim() != 3:
            raise ValueError(f"masks must be (T, H, W), got {tuple(self.masks.shape)}")
        if not bool(((self.masks == 0) | (self.masks == 1)).all()):
            raise ValueError("masks must be binary")
        self.masks = self.masks.to(torch.uint8)

    def __len__(self):
        return self.masks.shape[0]


@dataclass
class ClipWindow:
    r"""``t_c`` consecutive frames of one clip with their masks."""
    frames: torch.Tensor
    masks: torch.Tensor
    source_clip_id: str
    start_index: int


def list_image_files(directory):
    r"""Image files of ``directory`` in lexicographic order."""
    if not osp.isdir(directory):
        raise FileNotFoundError(f"directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(IMAGE_EXTENSIONS))
    return [osp.join(directory, n) for n in names]


list_frame_files = list_image_files
list_mask_files = list_image_files


def _decode(path, mode):
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(mode))
    except (UnidentifiedImageError, OSError) as e:
        raise ValueError(f"cannot decode image {path}: {e}") from e


def load_clip(frame_dir, mask_dir) -> Tuple[VideoClip, MaskSequence]:
    r"""
    Load a clip and its masks from two directories of images.

    Frames are decoded to RGB floats in ``[0, 1]``; mask pixels above 127 map
    to 1, everything else to 0.

    Parameters
    ----------
    frame_dir: str
        Directory of frame images, ordered lexicographically.
    mask_dir: str
        Directory of single-channel mask images, one per frame.
    """
    frame_files = list_frame_files(frame_dir)
    mask_files = list_mask_files(mask_dir)
    if not frame_files:
        raise ValueError(f"no frame images in {frame_dir}")
    if len(frame_files) != len(mask_files):
        raise ValueError(
            f"frame/mask count mismatch: {len(frame_files)} frames in {frame_dir}, "
            f"{len(mask_files)} masks in {mask_dir}")

    frames, masks = [], []
    hw = None
    for f_path, m_path in zip(frame_files, mask_files):
        frame = _decode(f_path, 'RGB')
        mask = _decode(m_path, 'L')
        if hw is None:
            hw = frame.shape[:2]
        if frame.shape[:2] != hw:
            raise ValueError(f"resolution mismatch: {f_path} is {frame.shape[:2]}, expected {hw}")
        if mask.shape != hw:
            raise ValueError(f"resolution mismatch: {m_path} is {mask.shape}, expected {hw}")
        frames.append(frame)
        masks.append(mask)

    frames = torch.from_numpy(np.stack(frames).astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()
    masks = torch.from_numpy((np.stack(masks) > MASK_THRESHOLD).astype(np.uint8))
    return VideoClip(frames), MaskSequence(masks)


def load_frames(frame_dir) -> VideoClip:
    r"""Load frames without masks, for inference on unlabelled clips."""
    files = list_frame_files(frame_dir)
    if not files:
        raise ValueError(f"no frame images in {frame_dir}")
    frames = []
    for path in files:
        frame = _decode(path, 'RGB')
        if frames and frame.shape != frames[0].shape:
            raise ValueError(f"resolution mismatch: {path} is {frame.shape[:2]}, expected {frames[0].shape[:2]}")
        frames.append(frame)
    frames = torch.from_numpy(np.stack(frames).astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()
    return VideoClip(frames)


def load_masks(mask_dir) -> MaskSequence:
    r"""Load a directory of mask images alone, e.g. a predictions directory."""
    files = list_mask_files(mask_dir)
    if not files:
        raise ValueError(f"no mask images in {mask_dir}")
    masks = []
    for path in files:
        mask = _decode(path, 'L')
        if masks and mask.shape != masks[0].shape:
            raise ValueError(f"resolution mismatch: {path} is {mask.shape}, expected {masks[0].shape}")
        masks.append(mask)
    return MaskSequence(torch.from_numpy((np.stack(masks) > MASK_THRESHOLD).astype(np.uint8)))


def to_uint8(frames):
    r"""``(T, 3, H, W)`` floats in ``[0, 1]`` to ``(T, H, W, 3)`` uint8."""
    arr = frames.detach().cpu().clamp(0, 1).permute(0, 2, 3, 1).numpy()
    return np.round(arr * 255.0).astype(np.uint8)


def save_frames(frames, directory):
    makedirs(directory)
    for i, frame in enumerate(to_uint8(frames)):
        Image.fromarray(frame, mode='RGB').save(osp.join(directory, FRAME_PATTERN.format(i)))


def save_masks(masks, directory):
    r"""Write binary ``(T, H, W)`` masks as 8-bit images with values 0 and 255."""
    makedirs(directory)
    masks = torch.as_tensor(masks).cpu().numpy().astype(np.uint8)
    for i, mask in enumerate(masks):
        Image.fromarray(mask * 255, mode='L').save(osp.join(directory, MASK_PATTERN.format(i)))


def window_starts(num_frames, t_c, stride):
    r"""Start indices ``0, stride, 2 * stride, ...`` with ``start + t_c <= num_frames``."""
    if t_c < 1 or stride < 1:
        raise ValueError(f"t_c and stride must be >= 1, got t_c={t_c}, stride={stride}")
    if num_frames < t_c:
        raise ValueError(f"clip shorter than window: {num_frames} frames < t_c={t_c}")
    return list(range(0, num_frames - t_c + 1, stride))


def anchored_starts(num_frames, t_c, stride=None):
    r"""
    Starts every ``stride`` frames (default ``t_c``) plus a last window
    anchored at ``num_frames - t_c`` so every frame is covered.
    """
    starts = window_starts(num_frames, t_c, stride or t_c)
    if starts[-1] + t_c < num_frames:
        starts.append(num_frames - t_c)
    return starts


def sliding_windows(clip: VideoClip, masks: MaskSequence, t_c: int, stride: int, clip_id: str = '') -> List[ClipWindow]:
    r"""
    Cut a clip into windows of ``t_c`` consecutive frames.

    Parameters
    ----------
    clip: VideoClip
        Source clip with ``T`` frames.
    masks: MaskSequence
        Masks aligned with ``clip``.
    t_c: int
        Window length.
    stride: int
        Distance between consecutive window starts.
    clip_id: str, optional
        Recorded as the windows' source.

    Returns
    -------
    list of ClipWindow
        ``floor((T - t_c) / stride) + 1`` windows; clips shorter than ``t_c``
        raise :obj:`ValueError` rather than being padded.
    """
    if len(clip) != len(masks):
        raise ValueError(f"clip has {len(clip)} frames but {len(masks)} masks")
    return [ClipWindow(clip.frames[s:s + t_c], masks.masks[s:s + t_c], clip_id, s)
            for s in window_starts(len(clip), t_c, stride)]


def augment_params(rng: np.random.Generator, hw, crop_hw, flip_prob):
    r"""Draw one crop offset and one flip decision for a whole window."""
    h, w = hw
    ch, cw = crop_hw
    if ch > h or cw > w:
        raise ValueError(f"crop {ch}x{cw} is larger than frame {h}x{w}")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    flip = bool(rng.random() < flip_prob)
    return top, left, flip


def apply_augment(window: ClipWindow, top, left, crop_hw, flip) -> ClipWindow:
    ch, cw = crop_hw
    frames = window.frames[..., top:top + ch, left:left + cw]
    masks = window.masks[..., top:top + ch, left:left + cw]
    if flip:
        frames = torch.flip(frames, dims=(-1,))
        masks = torch.flip(masks, dims=(-1,))
    return ClipWindow(frames.contiguous(), masks.contiguous(), window.source_clip_id, window.start_index)


def augment(window: ClipWindow, rng: np.random.Generator, crop_hw, flip_prob) -> ClipWindow:
    r"""
    Random crop and horizontal flip shared by every frame and mask of a window.

    Parameters
    ----------
    window: ClipWindow
        Window to augment.
    rng: numpy.random.Generator
        Explicit generator; no global random state is used.
    crop_hw: tuple of int
        Crop size, at most the frame size.
    flip_prob: float
        Probability of a horizontal flip.
    """
    top, left, flip = augment_params(rng, window.frames.shape[-2:], crop_hw, flip_prob)
    return apply_augment(window, top, left, crop_hw, flip)


def resize_window(frames, masks, hw):
    r"""Bilinear resize of ``(T, 3, H, W)`` frames, nearest resize of ``(T, H, W)`` masks."""
    if tuple(frames.shape[-2:]) == tuple(hw):
        return frames, masks
    frames = F.interpolate(frames, size=tuple(hw), mode='bilinear', align_corners=False).clamp(0, 1)
    masks = F.interpolate(masks[:, None].float(), size=tuple(hw), mode='nearest')[:, 0].to(torch.uint8)
    return frames, masks


def recompress_qf(clip: VideoClip, qf: int) -> VideoClip:
    r"""
    Re-encode every frame independently as JPEG with quality factor ``qf``.

    This is the MJPEG model: no inter-frame coding. Chroma is kept at full
    resolution (4:4:4) so that ``qf`` alone controls the distortion.

    Parameters
    ----------
    clip: VideoClip
        Clip to degrade.
    qf: int
        JPEG quality factor in ``[1, 100]``.
    """
    if not 1 <= int(qf) <= 100:
        raise ValueError(f"quality factor must lie in [1, 100], got {qf}")
    out = []
    for i, frame in enumerate(to_uint8(clip.frames)):
        try:
            buffer = io.BytesIO()
            Image.fromarray(frame, mode='RGB').save(buffer, format='JPEG', quality=int(qf), subsampling=0)
            buffer.seek(0)
            with Image.open(buffer) as img:
                out.append(np.asarray(img.convert('RGB')))
        except OSError as e:
            raise RuntimeError(f"JPEG codec failed on frame {i} at qf={qf}: {e}") from e
    frames = torch.from_numpy(np.stack(out).astype(np.float32) / 255.0).permute(0, 3, 1, 2)
    return VideoClip(frames.clamp(0, 1).contiguous(), clip.fps)


def psnr(reference, degraded, peak=1.0):
    r"""Peak signal-to-noise ratio in dB between two tensors of equal shape; ``inf`` when identical."""
    if reference.shape != degraded.shape:
        raise ValueError(f"psnr needs equal shapes, got {tuple(reference.shape)} and {tuple(degraded.shape)}")
    return float(peak_signal_noise_ratio(degraded.double(), reference.double(), data_range=peak))
