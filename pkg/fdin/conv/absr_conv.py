import torch
import torch.nn as nn
from torch import Tensor

from fdin.conv.spectral import apply_linear_2d, dct_matrix


def absr_init(h: int, w: int, seed: int, channels: int = None, dtype: torch.dtype = torch.float32) -> Tensor:
    r"""
    Draw a band-selection matrix with i.i.d. uniform entries on ``[0, 1]``.

    Parameters
    ----------
    h: int
        Height of the matrix.
    w: int
        Width of the matrix.
    seed: int
        Seed of the private generator; the same seed gives the same matrix.
    channels: int, optional
        If given, one matrix per channel with shape ``(channels, h, w)``.
        (default: :obj:`None`)
    """
    if h < 1 or w < 1:
        raise ValueError(f"band-selection matrix must be at least 1x1, got {h}x{w}")
    generator = torch.Generator().manual_seed(int(seed))
    shape = (h, w) if channels is None else (channels, h, w)
    return torch.rand(shape, generator=generator, dtype=torch.float64).to(dtype)


class BandSelect(torch.autograd.Function):
    r"""
    ``idct2(dct2(x) * L)`` with the backward pass written through the adjoint DCT pair.

    Since ``dct2`` and ``idct2`` are orthonormal, the adjoint of ``idct2`` is
    ``dct2``: the upstream gradient is moved to the spectral domain once, then
    ``grad_x = idct2(G * L)`` and ``grad_L`` is ``G * dct2(x)`` summed over the
    dims that ``L`` is broadcast along.
    """

    @staticmethod
    def forward(ctx, x, band, d_h, d_w):
        spectrum = apply_linear_2d(x, d_h, d_w)
        ctx.save_for_backward(spectrum, band, d_h, d_w)
        return apply_linear_2d(spectrum * band, d_h.transpose(0, 1), d_w.transpose(0, 1))

    @staticmethod
    def backward(ctx, grad_out):
        spectrum, band, d_h, d_w = ctx.saved_tensors
        grad_spectrum = apply_linear_2d(grad_out, d_h, d_w)
        grad_x = grad_band = None
        if ctx.needs_input_grad[0]:
            grad_x = apply_linear_2d(grad_spectrum * band, d_h.transpose(0, 1), d_w.transpose(0, 1))
        if ctx.needs_input_grad[1]:
            grad_band = grad_spectrum * spectrum
            lead = grad_band.dim() - band.dim()
            if lead > 0:
                grad_band = grad_band.sum(dim=tuple(range(lead)))
            for dim, size in enumerate(band.shape):
                if size == 1 and grad_band.shape[dim] != 1:
                    grad_band = grad_band.sum(dim=dim, keepdim=True)
        return grad_x, grad_band, None, None


def absr_forward(frame: Tensor, band: Tensor) -> Tensor:
    r"""
    Frequency-enhance frames with a band-selection matrix.

    Parameters
    ----------
    frame: Tensor
        Frames of shape ``(..., C, H, W)``.
    band: Tensor
        Matrix ``L`` of shape ``(H, W)``, or ``(C, H, W)`` for per-channel selection.

    Returns
    -------
    Tensor
        ``idct2(dct2(frame) * L)`` per channel, same shape as ``frame``.
    """
    if tuple(frame.shape[-2:]) != tuple(band.shape[-2:]):
        raise ValueError(
            f"frame resolution {tuple(frame.shape[-2:])} does not match "
            f"band-selection matrix {tuple(band.shape[-2:])}")
    if band.dim() == 3 and frame.shape[-3] != band.shape[0]:
        raise ValueError(f"per-channel band matrix has {band.shape[0]} channels, frame has {frame.shape[-3]}")
    if not torch.isfinite(frame).all():
        raise ValueError("absr_forward: frame contains non-finite values")
    h, w = frame.shape[-2:]
    d_h = dct_matrix(h, frame.dtype, frame.device)
    d_w = dct_matrix(w, frame.dtype, frame.device)
    return BandSelect.apply(frame, band.to(frame.dtype), d_h, d_w)


class ABSR(nn.Module):
    r"""
    Adaptive band selective response layer.

    Each frame is moved to the full-frame DCT domain, multiplied elementwise by
    a learnable matrix ``L`` and moved back. ``L`` is initialised uniformly on
    ``[0, 1]`` and left unconstrained during training.

    Parameters
    ----------
    resolution: tuple of int
        ``(H, W)`` of the frames the layer accepts.
    in_channels: int, optional
        Number of frame channels. (default: :obj:`3`)
    seed: int, optional
        Seed for the initial ``L``. (default: :obj:`0`)
    per_channel: bool, optional
        Learn one ``L`` per channel instead of a shared one.
        (default: :obj:`False`)
    concat_raw: bool, optional
        Concatenate the raw frame to the enhanced frame along channels.
        (default: :obj:`False`)
    """

    def __init__(self, resolution, in_channels=3, seed=0, per_channel=False, concat_raw=False):
        super(ABSR, self).__init__()
        h, w = int(resolution[0]), int(resolution[1])
        self.resolution = (h, w)
        self.in_channels = in_channels
        self.per_channel = per_channel
        self.concat_raw = concat_raw
        self.weight = nn.Parameter(absr_init(h, w, seed, channels=in_channels if per_channel else None))

    @property
    def out_channels(self):
        return 2 * self.in_channels if self.concat_raw else self.in_channels

    def forward(self, x):
        out = absr_forward(x, self.weight)
        if self.concat_raw:
            out = torch.cat([out, x], dim=-3)
        return out

    def band_image(self):
        r"""``L`` collapsed to one plane and min-max scaled to ``[0, 1]`` for inspection."""
        band = self.weight.detach()
        if band.dim() == 3:
            band = band.mean(dim=0)
        lo, hi = band.min(), band.max()
        if hi > lo:
            return (band - lo) / (hi - lo)
        return torch.zeros_like(band)

    def __repr__(self):
        return '{}(resolution={}, in_channels={}, per_channel={}, concat_raw={})'.format(
            self.__class__.__name__, self.resolution, self.in_channels, self.per_channel, self.concat_raw)
