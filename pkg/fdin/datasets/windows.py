import logging
from collections import OrderedDict
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset, Sampler

from fdin.data import DatasetManifest, load_clip, window_starts
from fdin.data.video import ClipWindow, augment, resize_window

logger = logging.getLogger(__name__)


class ClipWindowDataset(Dataset):
    r"""
    Map-style dataset of fixed-length windows over one or more manifests.

    Windows are enumerated in manifest order, then by start index. With
    ``augment=True`` every item is resized to ``round(crop_scale * resolution)``
    and then randomly cropped back to ``resolution`` and possibly flipped,
    drawing from ``numpy.random.default_rng([seed, epoch, index])``. Items can
    be fetched by plain index or by the ``(epoch, index)`` keys of
    :class:`EpochSampler`.

    Parameters
    ----------
    manifest: DatasetManifest
        Clips to window.
    t_c: int
        Window length.
    stride: int
        Distance between window starts.
    resolution: tuple of int
        Output ``(H, W)``.
    augment: bool, optional
        (default: :obj:`False`)
    crop_scale: float, optional
        (default: :obj:`1.0`)
    flip_prob: float, optional
        (default: :obj:`0.5`)
    seed: int, optional
        (default: :obj:`0`)
    cache_clips: int, optional
        Decoded clips kept in memory, stored at the size windows are cut
        from; the least recently used clip is dropped first. (default: :obj:`16`)
    """

    def __init__(self, manifest: DatasetManifest, t_c: int, stride: int, resolution: Sequence[int],
                 augment: bool = False, crop_scale: float = 1.0, flip_prob: float = 0.5, seed: int = 0,
                 cache_clips: int = 16):
        if len(manifest) == 0:
            raise ValueError("empty dataset: the manifest lists no clips")
        if cache_clips < 1:
            raise ValueError(f"cache_clips must be >= 1, got {cache_clips}")
        if crop_scale < 1.0:
            raise ValueError(f"crop_scale must be >= 1, got {crop_scale}")
        self.manifest = manifest
        self.t_c = t_c
        self.stride = stride
        self.resolution = (int(resolution[0]), int(resolution[1]))
        self.augment = augment
        self.crop_scale = crop_scale
        self.flip_prob = flip_prob
        self.seed = seed
        self.cache_clips = cache_clips
        # clips are cached at the size windows are cut from
        if augment:
            self.source_hw = tuple(int(round(crop_scale * s)) for s in self.resolution)
        else:
            self.source_hw = self.resolution

        self.index = []
        for r_idx, record in enumerate(manifest.records):
            try:
                starts = window_starts(record.frame_count, t_c, stride)
            except ValueError as e:
                raise ValueError(f"clip {record.clip_id}: {e}") from e
            self.index.extend((r_idx, s) for s in starts)
        self._cache = OrderedDict()
        logger.info("%d windows of %d frames from %d clips", len(self.index), t_c, len(manifest))

    def __len__(self):
        return len(self.index)

    def _clip(self, r_idx):
        if r_idx in self._cache:
            self._cache.move_to_end(r_idx)
            return self._cache[r_idx]
        record = self.manifest.records[r_idx]
        clip, masks = load_clip(record.frame_dir, record.mask_dir)
        entry = resize_window(clip.frames, masks.masks, self.source_hw)
        self._cache[r_idx] = entry
        if len(self._cache) > self.cache_clips:
            self._cache.popitem(last=False)
        return entry

    def window(self, idx, epoch=0) -> ClipWindow:
        r_idx, start = self.index[idx]
        frames, mask = self._clip(r_idx)
        frames = frames[start:start + self.t_c]
        mask = mask[start:start + self.t_c]
        window = ClipWindow(frames, mask, self.manifest.records[r_idx].clip_id, start)
        if not self.augment:
            return window
        rng = np.random.default_rng([self.seed, epoch, idx])
        return augment(window, rng, self.resolution, self.flip_prob)

    def __getitem__(self, key):
        epoch, idx = key if isinstance(key, tuple) else (0, key)
        window = self.window(idx, epoch)
        return {
            'frames': window.frames,
            'masks': window.masks,
            'clip_id': window.source_clip_id,
            'start': window.start_index,
        }


class EpochSampler(Sampler):
    r"""
    Yields ``(epoch, index)`` keys, shuffled per epoch from ``(seed, epoch)``.

    The trainer calls :meth:`set_epoch` at the start of every epoch, which
    makes both the visiting order and the per-item augmentation a function of
    the seed and epoch only.
    """

    def __init__(self, num_items: int, shuffle: bool = True, seed: int = 0):
        self.num_items = num_items
        self.shuffle = shuffle
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self):
        return self.num_items

    def __iter__(self):
        if self.shuffle:
            g = torch.Generator()
            g.manual_seed(self.seed * 100003 + self.epoch)
            order: List[int] = torch.randperm(self.num_items, generator=g).tolist()
        else:
            order = list(range(self.num_items))
        for idx in order:
            yield self.epoch, idx


def collate_windows(items, dtype: Optional[torch.dtype] = torch.float32):
    r"""Stack window dicts into ``(B, T, C, H, W)`` frames and ``(B, T, H, W)`` masks."""
    return {
        'frames': torch.stack([it['frames'] for it in items]).to(dtype),
        'masks': torch.stack([it['masks'] for it in items]),
        'clip_id': [it['clip_id'] for it in items],
        'start': torch.tensor([it['start'] for it in items]),
    }
