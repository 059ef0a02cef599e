from .synthetic import SyntheticInpainting
from .windows import ClipWindowDataset, EpochSampler, collate_windows

__all__ = [
    'SyntheticInpainting',
    'ClipWindowDataset',
    'EpochSampler',
    'collate_windows',
]

classes = __all__
