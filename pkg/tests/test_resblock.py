import numpy as np
import pytest
import torch

from fdin.conv import LFU, ResBlock3D, resblock_forward, zero_residual_
from fdin.models import Encoder3D, encoder_forward


def direct_conv3d(x, weight):
    """Same-padded stride-1 3x3x3 convolution by explicit summation."""
    b, c_in, t, h, w = x.shape
    c_out = weight.shape[0]
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    out = np.zeros((b, c_out, t, h, w))
    for n in range(b):
        for o in range(c_out):
            for i in range(t):
                for j in range(h):
                    for k in range(w):
                        out[n, o, i, j, k] = np.sum(padded[n, :, i:i + 3, j:j + 3, k:k + 3] * weight[o])
    return out


def test_zero_residual_is_identity_on_nonnegative_input():
    block = zero_residual_(ResBlock3D(4, 4))
    x = torch.rand(2, 4, 3, 6, 6)
    assert torch.equal(resblock_forward(x, block), x)


def test_zero_residual_jacobian_is_identity():
    block = zero_residual_(ResBlock3D(3, 3)).double()
    x = torch.rand(1, 3, 2, 4, 4, dtype=torch.float64) + 0.1
    v = torch.randn_like(x)
    _, jvp = torch.autograd.functional.jvp(block, x, v)
    assert torch.allclose(jvp, v)


def test_conv_matches_direct_summation():
    torch.manual_seed(0)
    block = ResBlock3D(4, 4).eval()
    x = torch.randn(2, 4, 6, 6, 6)
    with torch.no_grad():
        ours = block.conv1(x).numpy()
    expected = direct_conv3d(x.numpy().astype(np.float64), block.conv1.weight.detach().numpy().astype(np.float64))
    assert np.abs(ours - expected).max() < 1e-5


def test_lfu_conv_matches_direct_summation():
    torch.manual_seed(1)
    unit = LFU(4).eval()
    x = torch.randn(2, 4, 6, 6, 6)
    with torch.no_grad():
        ours = unit.conv(x).numpy()
    weight = unit.conv.weight.detach().numpy().astype(np.float64)
    expected = direct_conv3d(x.numpy().astype(np.float64), weight)
    assert np.abs(ours - expected).max() < 1e-5


def test_output_shapes():
    x = torch.rand(2, 4, 3, 8, 10)
    assert ResBlock3D(4, 4)(x).shape == (2, 4, 3, 8, 10)
    assert ResBlock3D(4, 8, spatial_stride=2)(x).shape == (2, 8, 3, 4, 5)
    assert isinstance(ResBlock3D(4, 8).shortcut, torch.nn.Conv3d)
    assert isinstance(ResBlock3D(4, 4).shortcut, torch.nn.Identity)
    with pytest.raises(ValueError):
        ResBlock3D(4, 4)(torch.rand(2, 5, 3, 8, 8))


def test_batch_statistics_are_joint_over_batch_time_space():
    torch.manual_seed(0)
    block = ResBlock3D(3, 5).train()
    seen = {}
    block.bn1.register_forward_hook(lambda m, inp, out: seen.setdefault('out', out.detach()))
    block(torch.randn(4, 3, 3, 8, 8) * 3 + 1)
    out = seen['out']
    mean = out.mean(dim=(0, 2, 3, 4))
    var = out.var(dim=(0, 2, 3, 4), unbiased=False)
    assert torch.allclose(mean, torch.zeros(5), atol=1e-5)
    assert torch.allclose(var, torch.ones(5), atol=1e-2)


def test_eval_mode_is_deterministic():
    block = ResBlock3D(3, 6, spatial_stride=2)
    block(torch.rand(2, 3, 2, 8, 8))
    block.eval()
    x = torch.rand(2, 3, 2, 8, 8)
    assert torch.equal(block(x), block(x))


def test_encoder_pyramid_shapes():
    torch.manual_seed(0)
    encoder = Encoder3D(3, stem_channels=16, channels=[16, 32, 64, 128])
    features = torch.rand(1, 16, 8, 64, 64)
    pyramid = encoder_forward(features, encoder)
    assert [tuple(p.shape) for p in pyramid] == [
        (1, 16, 8, 32, 32), (1, 32, 8, 16, 16), (1, 64, 8, 8, 8), (1, 128, 8, 4, 4)]
    assert encoder.reduction == 16


def test_encoder_rejects_indivisible_size():
    encoder = Encoder3D(3, stem_channels=4, channels=[4, 8])
    with pytest.raises(ValueError, match='not divisible'):
        encoder_forward(torch.rand(1, 4, 2, 10, 8), encoder)
    with pytest.raises(ValueError, match='input channels'):
        encoder_forward(torch.rand(1, 3, 2, 8, 8), encoder)
    with pytest.raises(ValueError, match='strictly increasing'):
        Encoder3D(3, channels=[8, 8])


def test_encoder_full_forward_from_frames():
    encoder = Encoder3D(3, stem_channels=4, channels=[4, 8])
    pyramid = encoder(torch.rand(2, 3, 2, 16, 16))
    assert [tuple(p.shape) for p in pyramid] == [(2, 4, 2, 8, 8), (2, 8, 2, 4, 4)]
