import torch
import torch.nn as nn
import torch.nn.functional as F


class ResBlock3D(nn.Module):
    r"""
    Residual block of 3D convolutions, ``y = ReLU(shortcut(x) + F(x))``.

    ``F`` is conv3d -> BatchNorm3d -> ReLU -> conv3d -> BatchNorm3d with
    3x3x3 kernels and same padding. The shortcut is the identity when shapes
    match, otherwise a strided 1x1x1 projection. Volumes use the
    ``(B, C, T, H, W)`` layout; batch statistics are taken jointly over
    ``(B, T, H, W)`` per channel.

    Parameters
    ----------
    in_channels: int
        Input channels.
    out_channels: int
        Output channels.
    spatial_stride: int, optional
        Stride over ``H`` and ``W``; time is never strided. (default: :obj:`1`)
    """

    def __init__(self, in_channels, out_channels, spatial_stride=1):
        super(ResBlock3D, self).__init__()
        stride = (1, spatial_stride, spatial_stride)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.spatial_stride = spatial_stride

        self.conv1 = nn.Conv3d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, kernel_size=3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(out_channels)
        if in_channels != out_channels or spatial_stride != 1:
            self.shortcut = nn.Conv3d(in_channels, out_channels, kernel_size=1, stride=stride, bias=False)
        else:
            self.shortcut = nn.Identity()

    def residual(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        return self.bn2(self.conv2(out))

    def forward(self, x):
        if x.dim() != 5 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"ResBlock3D expects (B, {self.in_channels}, T, H, W), got {tuple(x.shape)}")
        return F.relu(self.shortcut(x) + self.residual(x))

    def __repr__(self):
        return '{}(in_channels={}, out_channels={}, spatial_stride={})'.format(
            self.__class__.__name__, self.in_channels, self.out_channels, self.spatial_stride)


def resblock_forward(x, block: ResBlock3D):
    r"""Functional entry point: run ``block`` on a ``(B, C, T, H, W)`` volume."""
    return block(x)


def zero_residual_(block: ResBlock3D):
    r"""Zero every weight of the residual body so the block reduces to ``ReLU(shortcut(x))``."""
    with torch.no_grad():
        for module in (block.conv1, block.conv2, block.bn1, block.bn2):
            module.weight.zero_()
            if getattr(module, 'bias', None) is not None:
                module.bias.zero_()
    return block
