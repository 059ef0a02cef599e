import math

import pytest
import torch

from fdin.config import load_config
from fdin.models import FDIN, FDIN_pl, MaskRefinementDecoder, bce_loss, binarize, decoder_forward, get_optimizer


def test_decoder_output_shape():
    decoder = MaskRefinementDecoder([4, 8, 16])
    pyramid = [torch.rand(2, 4, 3, 16, 16), torch.rand(2, 8, 3, 8, 8), torch.rand(2, 16, 3, 4, 4)]
    logits = decoder_forward(pyramid, pyramid[-1], decoder, out_hw=(32, 32))
    assert logits.shape == (2, 1, 3, 32, 32)
    with pytest.raises(ValueError, match='cannot reach'):
        decoder_forward(pyramid, pyramid[-1], decoder, out_hw=(30, 32))
    with pytest.raises(ValueError, match='pyramid'):
        decoder(pyramid[1:], pyramid[-1])


def test_binarize():
    logits = torch.tensor([-2.0, -1e-3, 0.0, 3.0])
    assert binarize(logits).tolist() == [0, 0, 1, 1]
    assert binarize(logits).dtype == torch.uint8
    assert binarize(logits, threshold=0.9).tolist() == [0, 0, 0, 1]
    with pytest.raises(ValueError):
        binarize(logits, threshold=1.0)


def test_forward_shape(tiny_model):
    logits = tiny_model(torch.rand(2, 3, 3, 32, 32))
    assert logits.shape == (2, 3, 1, 32, 32)
    assert torch.isfinite(logits).all()


def test_forward_pads_to_encoder_reduction():
    model = FDIN((18, 30), stem_channels=4, channels=[4, 8])
    assert model(torch.rand(1, 2, 3, 18, 30)).shape == (1, 2, 1, 18, 30)


def test_forward_rejects_wrong_resolution(tiny_model):
    with pytest.raises(ValueError, match='does not match model resolution'):
        tiny_model(torch.rand(1, 2, 3, 32, 48))
    with pytest.raises(ValueError):
        tiny_model(torch.rand(2, 3, 32, 32))


def test_every_parameter_receives_gradient():
    torch.manual_seed(0)
    model = FDIN((16, 16), stem_channels=4, channels=[4, 8])
    clips = torch.rand(2, 2, 3, 16, 16)
    masks = (torch.rand(2, 2, 16, 16) > 0.7).float()
    bce_loss(model(clips), masks).backward()
    for name, p in model.named_parameters():
        assert p.grad is not None and torch.isfinite(p.grad).all(), name
        assert p.grad.norm() > 1e-6, name


@pytest.mark.parametrize('enable_absr,enable_ffca', [(True, True), (True, False), (False, True), (False, False)])
def test_ablation_variants(enable_absr, enable_ffca):
    model = FDIN((16, 16), stem_channels=4, channels=[4, 8], enable_absr=enable_absr, enable_ffca=enable_ffca)
    assert isinstance(model.absr, torch.nn.Identity) != enable_absr
    assert isinstance(model.ffca, torch.nn.Identity) != enable_ffca
    assert model(torch.rand(1, 2, 3, 16, 16)).shape == (1, 2, 1, 16, 16)


def test_absr_variants_feed_encoder():
    model = FDIN((16, 16), stem_channels=4, channels=[4, 8], absr_concat_raw=True, absr_per_channel=True)
    assert model.encoder.in_channels == 6
    assert model.absr.weight.shape == (3, 16, 16)
    assert model(torch.rand(1, 2, 3, 16, 16)).shape == (1, 2, 1, 16, 16)


def test_loss_values():
    gt = torch.zeros(1, 2, 4, 4)
    gt[..., :2, :] = 1
    assert bce_loss(torch.zeros(1, 2, 1, 4, 4), gt).item() == pytest.approx(math.log(2), abs=1e-6)
    assert bce_loss(torch.ones(1, 1, 1, 1), torch.ones(1, 1, 1)).item() == pytest.approx(0.3133, abs=1e-4)
    saturated = (gt * 2 - 1) * 30
    assert bce_loss(saturated.unsqueeze(2), gt).item() < 1e-6
    with pytest.raises(ValueError, match='do not align'):
        bce_loss(torch.zeros(1, 2, 1, 4, 4), torch.zeros(1, 2, 4, 5))


def test_optimizer_factory():
    params = [torch.nn.Parameter(torch.zeros(2))]
    assert isinstance(get_optimizer(params, 'adam', {'lr': 1e-3}), torch.optim.Adam)
    assert isinstance(get_optimizer(params, 'adamw', {'lr': 1e-3}), torch.optim.AdamW)
    with pytest.raises(ValueError, match='unknown optimizer'):
        get_optimizer(params, 'sgd', {'lr': 1e-3})


def test_learning_rate_halves_after_milestone_epoch():
    cfg = load_config(overrides=['model.stem_channels=4', 'model.channels=[4,8]', 'train.resolution=[16,16]'])
    task = FDIN_pl(cfg.model, cfg.train)
    [optimizer], [scheduler] = task.configure_optimizers()
    assert scheduler['interval'] == 'epoch'
    lrs = []
    for _ in range(cfg.train.epochs):
        lrs.append(optimizer.param_groups[0]['lr'])
        optimizer.step()
        scheduler['scheduler'].step()
    assert lrs[:10] == [pytest.approx(1e-4)] * 10
    assert lrs[10:] == [pytest.approx(5e-5)] * 10
