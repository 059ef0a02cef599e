from .utils import makedirs, args_print, write_jsonl, open_jsonl_file, ManifestRecord, DatasetManifest, read_manifests
from .video import VideoClip, MaskSequence, ClipWindow, load_clip, load_frames, load_masks, save_frames, save_masks, sliding_windows, window_starts, anchored_starts, augment, resize_window, recompress_qf, psnr
from .synth import SyntheticClip, synth_clip, synth_generate, blur_fill, diffusion_fill, METHODS

__all__ = [
    'makedirs',
    'args_print',
    'write_jsonl',
    'open_jsonl_file',
    'ManifestRecord',
    'DatasetManifest',
    'read_manifests',
    'VideoClip',
    'MaskSequence',
    'ClipWindow',
    'load_clip',
    'load_frames',
    'load_masks',
    'save_frames',
    'save_masks',
    'sliding_windows',
    'window_starts',
    'anchored_starts',
    'augment',
    'resize_window',
    'recompress_qf',
    'psnr',
    'SyntheticClip',
    'synth_clip',
    'synth_generate',
    'blur_fill',
    'diffusion_fill',
    'METHODS',
]

classes = __all__
