import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from fdin.conv.absr_conv import ABSR
from fdin.conv.ffca_conv import FFCA
from fdin.conv.resblock_conv import ResBlock3D

logger = logging.getLogger(__name__)


class Encoder3D(nn.Module):
    r"""
    Stack of 3D residual blocks producing a feature pyramid.

    A stem conv maps the frames to ``stem_channels``; stage ``i`` then applies
    one downsampling :class:`ResBlock3D` (spatial stride 2, temporal stride 1)
    and one stride-1 block with ``channels[i]`` outputs.

    Parameters
    ----------
    in_channels: int
        Channels of the incoming clip.
    stem_channels: int, optional
        Stem output channels. (default: :obj:`16`)
    channels: list of int, optional
        Output channels per stage, strictly increasing.
        (default: :obj:`[16, 32, 64, 128]`)
    """

    def __init__(self, in_channels, stem_channels=16, channels=(16, 32, 64, 128)):
        super(Encoder3D, self).__init__()
        channels = list(channels)
        if any(b <= a for a, b in zip(channels, channels[1:])):
            raise ValueError(f"stage channels must be strictly increasing, got {channels}")
        self.in_channels = in_channels
        self.stem_channels = stem_channels
        self.channels = channels

        self.stem = nn.Sequential(
            nn.Conv3d(in_channels, stem_channels, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm3d(stem_channels),
            nn.ReLU(),
        )
        self.stages = nn.ModuleList()
        prev = stem_channels
        for c in channels:
            self.stages.append(nn.Sequential(ResBlock3D(prev, c, spatial_stride=2), ResBlock3D(c, c)))
            prev = c

    @property
    def reduction(self):
        return 2 ** len(self.stages)

    def forward_stages(self, features):
        h, w = features.shape[-2:]
        if h % self.reduction or w % self.reduction:
            raise ValueError(
                f"spatial size {h}x{w} is not divisible by {self.reduction} "
                f"({len(self.stages)} stride-2 stages); pad the input upstream")
        pyramid = []
        x = features
        for stage in self.stages:
            x = stage(x)
            pyramid.append(x)
        return pyramid

    def forward(self, x):
        return self.forward_stages(self.stem(x))


def encoder_forward(clip_features, encoder: Encoder3D):
    r"""
    Run the encoder stages on stem features.

    Parameters
    ----------
    clip_features: Tensor
        ``(B, C, T, H, W)`` with ``C == encoder.stem_channels``.

    Returns
    -------
    list of Tensor
        Feature pyramid, shallowest first.
    """
    if clip_features.shape[1] != encoder.stem_channels:
        raise ValueError(
            f"encoder expects {encoder.stem_channels} input channels, got {clip_features.shape[1]}")
    return encoder.forward_stages(clip_features)


class MaskRefinementDecoder(nn.Module):
    r"""
    Top-down decoder turning the pyramid into per-frame logits.

    Starting from the refined deepest volume, each step upsamples by 2 with
    nearest neighbour, concatenates the matching pyramid level and applies
    conv3d + BatchNorm3d + ReLU. A last 2x upsample and a 1-channel conv3d give
    logits at frame resolution.

    Parameters
    ----------
    channels: list of int
        Encoder stage channels, shallowest first.
    """

    def __init__(self, channels=(16, 32, 64, 128)):
        super(MaskRefinementDecoder, self).__init__()
        self.channels = list(channels)
        self.blocks = nn.ModuleList()
        prev = self.channels[-1]
        for c in reversed(self.channels[:-1]):
            self.blocks.append(nn.Sequential(
                nn.Conv3d(prev + c, c, kernel_size=3, padding=1, bias=False),
                nn.BatchNorm3d(c),
                nn.ReLU(),
            ))
            prev = c
        self.head = nn.Conv3d(prev, 1, kernel_size=3, padding=1, bias=True)

    @staticmethod
    def upsample(x):
        return F.interpolate(x, scale_factor=(1, 2, 2), mode='nearest')

    def forward(self, pyramid, ffca_out):
        if len(pyramid) != len(self.channels):
            raise ValueError(f"decoder built for {len(self.channels)} stages, got a {len(pyramid)}-level pyramid")
        if ffca_out.shape != pyramid[-1].shape:
            raise ValueError(
                f"refined volume {tuple(ffca_out.shape)} does not match deepest level {tuple(pyramid[-1].shape)}")
        x = ffca_out
        for block, skip in zip(self.blocks, reversed(pyramid[:-1])):
            x = self.upsample(x)
            if x.shape[-3:] != skip.shape[-3:]:
                raise ValueError(f"cannot merge {tuple(x.shape)} with skip {tuple(skip.shape)} by x2 steps")
            x = block(torch.cat([x, skip], dim=1))
        return self.head(self.upsample(x))


def decoder_forward(pyramid, ffca_out, decoder: MaskRefinementDecoder, out_hw=None):
    r"""Decode to ``(B, 1, T, H, W)`` logits, optionally checking the frame size ``out_hw``."""
    logits = decoder(pyramid, ffca_out)
    if out_hw is not None and tuple(logits.shape[-2:]) != tuple(out_hw):
        raise ValueError(f"decoded size {tuple(logits.shape[-2:])} cannot reach frame size {tuple(out_hw)}")
    return logits


def binarize(logits, threshold=0.5):
    r"""
    Threshold sigmoid probabilities into a binary mask.

    Pixels with ``sigmoid(logit) >= threshold`` are 1, so a zero logit maps to
    1 at the default threshold.

    Parameters
    ----------
    logits: Tensor
        Logits of any shape.
    threshold: float, optional
        Probability threshold in ``(0, 1)``. (default: :obj:`0.5`)
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (torch.sigmoid(logits) >= threshold).to(torch.uint8)


class FDIN(nn.Module):
    r"""
    Frequency-domain inpainting detection network.

    Frames are frequency-enhanced by :class:`~fdin.conv.ABSR`, encoded by
    :class:`Encoder3D`, the deepest level is refined by
    :class:`~fdin.conv.FFCA` and :class:`MaskRefinementDecoder` produces one
    logit map per frame. Disabled components are replaced by the identity.

    Parameters
    ----------
    resolution: tuple of int
        ``(H, W)`` accepted by the model; other sizes are rejected.
    in_channels: int, optional
        Frame channels. (default: :obj:`3`)
    stem_channels: int, optional
        (default: :obj:`16`)
    channels: list of int, optional
        Encoder stage channels. (default: :obj:`[16, 32, 64, 128]`)
    ratio_global: float, optional
        FFCA global-branch share. (default: :obj:`0.5`)
    enable_absr: bool, optional
        (default: :obj:`True`)
    enable_ffca: bool, optional
        (default: :obj:`True`)
    absr_per_channel: bool, optional
        (default: :obj:`False`)
    absr_concat_raw: bool, optional
        (default: :obj:`False`)
    band_seed: int, optional
        Seed for the band-selection matrix. (default: :obj:`0`)
    """

    def __init__(self, resolution, in_channels=3, stem_channels=16, channels=(16, 32, 64, 128),
                 ratio_global=0.5, enable_absr=True, enable_ffca=True, absr_per_channel=False,
                 absr_concat_raw=False, band_seed=0):
        super(FDIN, self).__init__()
        self.resolution = (int(resolution[0]), int(resolution[1]))
        self.enable_absr = enable_absr
        self.enable_ffca = enable_ffca

        if enable_absr:
            self.absr = ABSR(self.resolution, in_channels, seed=band_seed,
                             per_channel=absr_per_channel, concat_raw=absr_concat_raw)
            encoder_in = self.absr.out_channels
        else:
            self.absr = nn.Identity()
            encoder_in = in_channels
        self.encoder = Encoder3D(encoder_in, stem_channels, channels)
        self.ffca = FFCA(channels[-1], ratio_global) if enable_ffca else nn.Identity()
        self.decoder = MaskRefinementDecoder(channels)

    @classmethod
    def from_config(cls, model_cfg, resolution):
        return cls(
            resolution=resolution,
            in_channels=model_cfg.in_channels,
            stem_channels=model_cfg.stem_channels,
            channels=list(model_cfg.channels),
            ratio_global=model_cfg.ratio_global,
            enable_absr=model_cfg.enable_absr,
            enable_ffca=model_cfg.enable_ffca,
            absr_per_channel=model_cfg.absr_per_channel,
            absr_concat_raw=model_cfg.absr_concat_raw,
            band_seed=model_cfg.band_seed,
        )

    @property
    def device(self):
        return list(self.parameters())[0].device

    def forward(self, clips):
        r"""
        Parameters
        ----------
        clips: Tensor
            ``(B, T, C, H, W)`` frames in ``[0, 1]``.

        Returns
        -------
        Tensor
            ``(B, T, 1, H, W)`` logits.
        """
        if clips.dim() != 5:
            raise ValueError(f"expected clips of shape (B, T, C, H, W), got {tuple(clips.shape)}")
        h, w = clips.shape[-2:]
        if (h, w) != self.resolution:
            raise ValueError(f"clip resolution {(h, w)} does not match model resolution {self.resolution}")

        x = self.absr(clips).permute(0, 2, 1, 3, 4)
        # replicate-pad to a multiple of the encoder reduction, crop logits back
        r = self.encoder.reduction
        pad_h, pad_w = (-h) % r, (-w) % r
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h, 0, 0), mode='replicate')
        pyramid = self.encoder(x)
        refined = self.ffca(pyramid[-1])
        logits = self.decoder(pyramid, refined)[..., :h, :w]
        return logits.permute(0, 2, 1, 3, 4)
