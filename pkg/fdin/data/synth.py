import os
import logging
import os.path as osp
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from PIL import Image
from scipy import ndimage
from tqdm import tqdm

from fdin.data.utils import DatasetManifest, ManifestRecord, makedirs
from fdin.data.video import FRAME_PATTERN, MASK_PATTERN

logger = logging.getLogger(__name__)

METHODS = ('blur_fill', 'diffusion_fill', 'temporal_copy')
MIN_SIZE = 16
MAX_REJECTIONS = 100
AREA_RANGE = (0.05, 0.40)
COPY_OFFSET = 4
DIFFUSION_TOL = 1e-4
DIFFUSION_MAX_ITER = 20000
_NEIGHBOURS = np.array([[0.0, 0.25, 0.0], [0.25, 0.0, 0.25], [0.0, 0.25, 0.0]])


@dataclass
class SyntheticClip:
    r"""
    One generated clip, all arrays uint8.

    Attributes
    ----------
    original: ndarray
        ``(T, H, W, 3)`` frames with the moving object.
    inpainted: ndarray
        ``(T, H, W, 3)`` frames with the object region filled.
    masks: ndarray
        ``(T, H, W)`` with 1 exactly where ``original != inpainted`` in any channel.
    """
    original: np.ndarray
    inpainted: np.ndarray
    masks: np.ndarray


def textured_background(rng, h, w):
    r"""Smooth random texture: a few oriented sinusoids over low-pass noise, in ``[0.1, 0.9]``."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tex = np.zeros((h, w, 3))
    for _ in range(4):
        freq = rng.uniform(0.05, 0.35)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        tex += wave[..., None] * rng.uniform(0.2, 1.0, size=3)
    noise = ndimage.gaussian_filter(rng.standard_normal((h, w, 3)), sigma=(1.5, 1.5, 0))
    tex += 2.0 * noise
    tex -= tex.min()
    tex /= max(tex.max(), 1e-12)
    return 0.1 + 0.8 * tex


def _ellipse(h, w, cy, cx, ry, rx):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _sample_track(rng, t, h, w):
    # radii such that the ellipse fits and covers a plausible share of the frame
    area = rng.uniform(0.10, 0.30) * h * w
    aspect = rng.uniform(0.6, 1.6)
    ry = np.sqrt(area / (np.pi * aspect))
    rx = ry * aspect
    if 2 * ry + 2 > h or 2 * rx + 2 > w:
        return None
    cy = rng.uniform(ry + 1, h - ry - 1)
    cx = rng.uniform(rx + 1, w - rx - 1)
    vy, vx = rng.uniform(-1.5, 1.5, size=2)
    track = []
    for _ in range(t):
        track.append((cy, cx))
        cy, cx = cy + vy, cx + vx
        if not ry + 1 <= cy <= h - ry - 1:
            vy = -vy
            cy = float(np.clip(cy, ry + 1, h - ry - 1))
        if not rx + 1 <= cx <= w - rx - 1:
            vx = -vx
            cx = float(np.clip(cx, rx + 1, w - rx - 1))
    return track, ry, rx


def blur_fill(frame, region, sigma):
    r"""Fill ``region`` with a normalized Gaussian blur of the known pixels around it."""
    known = (~region).astype(np.float64)
    num = ndimage.gaussian_filter(frame * known[..., None], sigma=(sigma, sigma, 0))
    den = ndimage.gaussian_filter(known, sigma=sigma)
    fallback = (frame * known[..., None]).sum(axis=(0, 1)) / max(known.sum(), 1.0)
    fill = np.where(den[..., None] > 1e-8, num / np.maximum(den[..., None], 1e-8), fallback)
    out = frame.copy()
    out[region] = fill[region]
    return out


def diffusion_fill(frame, region, sigma, tol=DIFFUSION_TOL, max_iter=DIFFUSION_MAX_ITER):
    r"""
    Fill ``region`` by repeated 4-neighbour averaging until the largest update is below ``tol``.

    The iteration starts from :func:`blur_fill`; pixels outside the region
    act as fixed boundary values.
    """
    out = blur_fill(frame, region, sigma)
    for it in range(max_iter):
        smoothed = np.stack([ndimage.convolve(out[..., c], _NEIGHBOURS, mode='nearest') for c in range(3)], axis=-1)
        delta = np.abs(smoothed[region] - out[region]).max() if region.any() else 0.0
        out[region] = smoothed[region]
        if delta < tol:
            break
    else:
        logger.warning("diffusion fill stopped after %d iterations without reaching tol=%g", max_iter, tol)
    return out


def copy_source(i, t):
    r"""
    Frame whose background fills frame ``i`` under ``temporal_copy``.

    That is the frame ``COPY_OFFSET`` steps earlier; the first ``COPY_OFFSET``
    frames have no earlier frame and copy from ``COPY_OFFSET`` steps later
    instead. Returns :obj:`None` when neither exists, in which case the frame
    falls back to :func:`blur_fill`.
    """
    src = i - COPY_OFFSET if i >= COPY_OFFSET else i + COPY_OFFSET
    return src if src < t else None


def synth_clip(rng: np.random.Generator, t, h, w, method) -> SyntheticClip:
    r"""
    Generate one inpainted clip with exact ground truth.

    A textured background pans by one pixel per frame, a coloured ellipse
    moves and bounces over it, and the ellipse region is then overwritten by
    ``method``. Masks are computed on the quantized frames, so they mark
    exactly the pixels that differ. Geometry or masks outside the allowed
    area range are rejected and redrawn. ``temporal_copy`` takes the
    background of the frame four steps earlier, or four steps later for the
    first four frames (see :func:`copy_source`).

    Parameters
    ----------
    rng: numpy.random.Generator
        Source of all randomness.
    t: int
        Number of frames.
    h: int
        Frame height, at least 16.
    w: int
        Frame width, at least 16.
    method: str
        One of ``blur_fill``, ``diffusion_fill``, ``temporal_copy``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown fill method '{method}', expected one of {', '.join(METHODS)}")
    if h < MIN_SIZE or w < MIN_SIZE:
        raise ValueError(f"frames must be at least {MIN_SIZE}x{MIN_SIZE}, got {h}x{w}")
    if t < 1:
        raise ValueError(f"clip needs at least one frame, got t={t}")

    for attempt in range(MAX_REJECTIONS):
        sample = _sample_track(rng, t, h, w)
        if sample is None:
            continue
        track, ry, rx = sample
        canvas = textured_background(rng, h, w + t)
        color = rng.uniform(0.0, 1.0, size=3)
        sigma = max(2.0, 0.5 * min(ry, rx))

        backgrounds = [canvas[:, i:i + w] for i in range(t)]
        regions = [_ellipse(h, w, cy, cx, ry, rx) for cy, cx in track]
        originals = []
        for bg, region in zip(backgrounds, regions):
            frame = bg.copy()
            frame[region] = 0.7 * color + 0.3 * bg[region]
            originals.append(frame)

        filled = []
        for i, (frame, region) in enumerate(zip(originals, regions)):
            if method == 'blur_fill':
                out = blur_fill(frame, region, sigma)
            elif method == 'diffusion_fill':
                out = diffusion_fill(frame, region, sigma)
            else:
                src = copy_source(i, t)
                if src is not None:
                    out = frame.copy()
                    out[region] = backgrounds[src][region]
                else:
                    out = blur_fill(frame, region, sigma)
            filled.append(out)

        original = np.round(np.clip(np.stack(originals), 0, 1) * 255).astype(np.uint8)
        inpainted = np.round(np.clip(np.stack(filled), 0, 1) * 255).astype(np.uint8)
        masks = (original != inpainted).any(axis=-1).astype(np.uint8)
        fractions = masks.reshape(t, -1).mean(axis=1)
        if fractions.min() < AREA_RANGE[0] or fractions.max() > AREA_RANGE[1]:
            logger.debug("rejected clip geometry on attempt %d (mask fraction %.3f-%.3f)",
                         attempt, fractions.min(), fractions.max())
            continue
        return SyntheticClip(original, inpainted, masks)
    raise RuntimeError(f"could not draw a valid {h}x{w} clip after {MAX_REJECTIONS} rejections")


def _write_images(arrays, directory, pattern, mode):
    makedirs(directory)
    for i, arr in enumerate(arrays):
        Image.fromarray(arr, mode=mode).save(osp.join(directory, pattern.format(i)))


def _generate_one(seed, index, t, h, w, method, out_dir, split, save_originals):
    rng = np.random.default_rng([seed, index])
    clip = synth_clip(rng, t, h, w, method)
    clip_id = f'{method}_{index:04d}'
    frame_dir = osp.join(out_dir, 'frames', clip_id)
    mask_dir = osp.join(out_dir, 'masks', clip_id)
    _write_images(clip.inpainted, frame_dir, FRAME_PATTERN, 'RGB')
    _write_images(clip.masks * 255, mask_dir, MASK_PATTERN, 'L')
    if save_originals:
        _write_images(clip.original, osp.join(out_dir, 'originals', clip_id), FRAME_PATTERN, 'RGB')
    return ManifestRecord(clip_id, frame_dir, mask_dir, t, split)


def synth_generate(seed, n_clips, t, h, w, method, out_dir, split='train', save_originals=False, n_jobs=1):
    r"""
    Write a synthetic inpainting dataset and its manifest.

    Clip ``i`` draws from ``numpy.random.default_rng([seed, i])``, so output
    is byte-identical for identical arguments whatever ``n_jobs`` is.

    Parameters
    ----------
    seed: int
        Dataset seed.
    n_clips: int
        Number of clips.
    t: int
        Frames per clip.
    h: int
        Frame height.
    w: int
        Frame width.
    method: str
        Fill method, see :data:`METHODS`.
    out_dir: str
        Dataset root; receives ``frames/``, ``masks/`` and ``manifest.tsv``.
    split: str, optional
        Split tag written to the manifest. (default: :obj:`'train'`)
    save_originals: bool, optional
        Also write the un-inpainted frames under ``originals/``.
        (default: :obj:`False`)
    n_jobs: int, optional
        Parallel workers. (default: :obj:`1`)

    Returns
    -------
    DatasetManifest
    """
    if method not in METHODS:
        raise ValueError(f"unknown fill method '{method}', expected one of {', '.join(METHODS)}")
    if h < MIN_SIZE or w < MIN_SIZE:
        raise ValueError(f"frames must be at least {MIN_SIZE}x{MIN_SIZE}, got {h}x{w}")
    if n_clips < 1:
        raise ValueError(f"n_clips must be >= 1, got {n_clips}")
    makedirs(out_dir)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory is not writable: {out_dir}")

    jobs = (delayed(_generate_one)(seed, i, t, h, w, method, out_dir, split, save_originals)
            for i in range(n_clips))
    records = Parallel(n_jobs=n_jobs)(tqdm(jobs, total=n_clips, desc=f'synth {method}'))
    manifest = DatasetManifest(list(records))
    manifest.save(osp.join(out_dir, 'manifest.tsv'))
    logger.info("wrote %d %s clips to %s", n_clips, method, out_dir)
    return manifest
