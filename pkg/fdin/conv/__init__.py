from .spectral import dct_matrix, dct2, idct2, rfft_spatial, irfft_spatial, hermitian_energy
from .absr_conv import ABSR, BandSelect, absr_init, absr_forward
from .resblock_conv import ResBlock3D, resblock_forward, zero_residual_
from .ffca_conv import LFU, GFU, FFCA, split_channels, split_sizes, lfu_forward, gfu_forward, ffca_forward

__all__ = [
    'dct_matrix',
    'dct2',
    'idct2',
    'rfft_spatial',
    'irfft_spatial',
    'hermitian_energy',
    'ABSR',
    'BandSelect',
    'absr_init',
    'absr_forward',
    'ResBlock3D',
    'resblock_forward',
    'zero_residual_',
    'LFU',
    'GFU',
    'FFCA',
    'split_channels',
    'split_sizes',
    'lfu_forward',
    'gfu_forward',
    'ffca_forward',
]

classes = __all__
