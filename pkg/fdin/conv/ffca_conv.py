import torch
import torch.nn as nn
import torch.nn.functional as F

from fdin.conv.spectral import irfft_spatial, rfft_spatial


def split_sizes(channels, ratio_global):
    r"""Return ``(C_L, C_G)`` with ``C_G = round(ratio_global * C)``."""
    if not 0.0 < ratio_global < 1.0:
        raise ValueError(f"ratio_global must lie in (0, 1), got {ratio_global}")
    if channels < 2:
        raise ValueError(f"need at least 2 channels to split, got {channels}")
    c_g = int(round(ratio_global * channels))
    c_l = channels - c_g
    if c_g == 0 or c_l == 0:
        raise ValueError(
            f"ratio_global={ratio_global} on {channels} channels leaves an empty branch "
            f"(C_L={c_l}, C_G={c_g})")
    return c_l, c_g


def split_channels(z, ratio_global, dim=1):
    r"""
    Split a feature volume into contiguous local and global channel groups.

    Parameters
    ----------
    z: Tensor
        Feature volume, channels along ``dim``.
    ratio_global: float
        Share of channels routed to the global branch.
    dim: int, optional
        Channel dim. (default: :obj:`1`, the ``(B, C, T, H, W)`` layout)

    Returns
    -------
    tuple of Tensor
        ``(z_local, z_global)``; concatenating them along ``dim`` restores ``z``.
    """
    c_l, c_g = split_sizes(z.shape[dim], ratio_global)
    z_local, z_global = torch.split(z, [c_l, c_g], dim=dim)
    return z_local, z_global


class LFU(nn.Module):
    r"""
    Local unit: one 3x3x3 same-padding conv3d, BatchNorm3d, ReLU.

    Parameters
    ----------
    channels: int
        Channels in and out.
    """

    def __init__(self, channels):
        super(LFU, self).__init__()
        self.channels = channels
        self.conv = nn.Conv3d(channels, channels, kernel_size=3, padding=1, bias=False)
        self.bn = nn.BatchNorm3d(channels)

    def forward(self, z_local):
        if z_local.dim() != 5 or z_local.shape[1] != self.channels:
            raise ValueError(f"LFU expects (B, {self.channels}, T, H, W), got {tuple(z_local.shape)}")
        return F.relu(self.bn(self.conv(z_local)))


class GFU(nn.Module):
    r"""
    Global unit operating on the spatial spectrum of every frame.

    The volume goes through an orthonormal real FFT over ``(H, W)``, the real
    and imaginary parts are stacked as ``2 * C_G`` channels, refined by a
    pointwise conv, BatchNorm3d and ReLU, then unstacked and inverted back to
    ``(B, C_G, T, H, W)``.

    Parameters
    ----------
    channels: int
        Global-branch channels ``C_G``.
    """

    def __init__(self, channels):
        super(GFU, self).__init__()
        self.channels = channels
        self.conv = nn.Conv3d(2 * channels, 2 * channels, kernel_size=1, bias=False)
        self.bn = nn.BatchNorm3d(2 * channels)

    def forward(self, z_global):
        if z_global.dim() != 5 or z_global.shape[1] != self.channels:
            raise ValueError(f"GFU expects (B, {self.channels}, T, H, W), got {tuple(z_global.shape)}")
        h, w = z_global.shape[-2:]
        spectrum = rfft_spatial(z_global)
        stacked = torch.cat([spectrum.real, spectrum.imag], dim=1)
        refined = F.relu(self.bn(self.conv(stacked)))
        if not torch.isfinite(refined).all():
            raise ValueError("GFU: non-finite values in the refined spectrum")
        real, imag = torch.chunk(refined, 2, dim=1)
        return irfft_spatial(torch.complex(real.contiguous(), imag.contiguous()), (h, w))


class FFCA(nn.Module):
    r"""
    Fourier-convolution attention block applied to the deepest encoder output.

    ``out = z + fuse(concat(LFU(z_L), GFU(z_G)))`` where ``fuse`` is a 1x1x1
    conv over all channels. With ``fuse`` zeroed the block is the identity.

    Parameters
    ----------
    channels: int
        Channels of the input volume.
    ratio_global: float, optional
        Share of channels for the global branch. (default: :obj:`0.5`)
    """

    def __init__(self, channels, ratio_global=0.5):
        super(FFCA, self).__init__()
        self.channels = channels
        self.ratio_global = ratio_global
        self.local_channels, self.global_channels = split_sizes(channels, ratio_global)
        self.lfu = LFU(self.local_channels)
        self.gfu = GFU(self.global_channels)
        self.fuse = nn.Conv3d(channels, channels, kernel_size=1, bias=True)

    def forward(self, z):
        if z.dim() != 5 or z.shape[1] != self.channels:
            raise ValueError(f"FFCA expects (B, {self.channels}, T, H, W), got {tuple(z.shape)}")
        z_local, z_global = split_channels(z, self.ratio_global)
        # fixed (local, global) order
        combined = torch.cat([self.lfu(z_local), self.gfu(z_global)], dim=1)
        return z + self.fuse(combined)

    def zero_fuse_(self):
        with torch.no_grad():
            self.fuse.weight.zero_()
            self.fuse.bias.zero_()
        return self

    def __repr__(self):
        return '{}(channels={}, local={}, global={})'.format(
            self.__class__.__name__, self.channels, self.local_channels, self.global_channels)


def lfu_forward(z_local, lfu: LFU):
    return lfu(z_local)


def gfu_forward(z_global, gfu: GFU):
    return gfu(z_global)


def ffca_forward(z, ffca: FFCA):
    return ffca(z)
