from .fdin import FDIN, Encoder3D, MaskRefinementDecoder, encoder_forward, decoder_forward, binarize
from .fdin_pl import FDIN_pl, bce_loss, loss
from .utils import get_optimizer

__all__ = [
    'FDIN',
    'Encoder3D',
    'MaskRefinementDecoder',
    'encoder_forward',
    'decoder_forward',
    'binarize',
    'FDIN_pl',
    'bce_loss',
    'loss',
    'get_optimizer',
]

classes = __all__
