import os.path as osp
import shutil
from typing import Callable, Optional

from fdin.data import DatasetManifest, load_clip, synth_generate


class SyntheticInpainting:
    r"""
    Procedurally generated inpainting clips with exact ground-truth masks.

    Each clip shows a panning textured background and a moving ellipse whose
    region has been overwritten by one of three fills: a normalized Gaussian
    blur (``blur_fill``), iterative neighbour averaging (``diffusion_fill``)
    or a copy from the background four frames earlier (``temporal_copy``).
    The first two leave low-frequency smoothing traces, the third a periodic
    copy misalignment. Clips are generated on first use under ``root`` and
    reused afterwards.

    Parameters
    ----------
    root: str
        Dataset directory.
    method: str, optional
        Fill method. (default: :obj:`'blur_fill'`)
    n_clips: int, optional
        (default: :obj:`20`)
    t: int, optional
        Frames per clip. (default: :obj:`16`)
    h: int, optional
        (default: :obj:`64`)
    w: int, optional
        (default: :obj:`112`)
    seed: int, optional
        (default: :obj:`0`)
    split: str, optional
        (default: :obj:`'train'`)
    transform: callable, optional
        Applied to every ``(VideoClip, MaskSequence)`` pair returned by :meth:`get`.
    force_reload: bool, optional
        Regenerate even if a manifest exists. (default: :obj:`False`)
    n_jobs: int, optional
        Synthesis workers. (default: :obj:`1`)
    """

    def __init__(self, root: str, method: str = 'blur_fill', n_clips: int = 20, t: int = 16, h: int = 64,
                 w: int = 112, seed: int = 0, split: str = 'train', transform: Optional[Callable] = None,
                 force_reload: bool = False, n_jobs: int = 1):
        self.root = root
        self.method = method
        self.n_clips = n_clips
        self.t, self.h, self.w = t, h, w
        self.seed = seed
        self.split = split
        self.transform = transform
        self.n_jobs = n_jobs
        if force_reload and osp.isdir(root):
            shutil.rmtree(root)
        if not osp.isfile(self.manifest_path):
            self.process()
        self.manifest = DatasetManifest.read(self.manifest_path)

    @property
    def processed_file_names(self) -> str:
        return 'manifest.tsv'

    @property
    def manifest_path(self):
        return osp.join(self.root, self.processed_file_names)

    def process(self):
        synth_generate(self.seed, self.n_clips, self.t, self.h, self.w, self.method, self.root,
                       split=self.split, n_jobs=self.n_jobs)

    def __len__(self):
        return len(self.manifest)

    def get(self, idx):
        record = self.manifest.records[idx]
        clip, masks = load_clip(record.frame_dir, record.mask_dir)
        if self.transform is not None:
            return self.transform(clip, masks)
        return clip, masks

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({self.method}, n_clips={len(self)})'
