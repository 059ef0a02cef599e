import os.path as osp

import numpy as np
import pytest
import torch

from fdin.config import load_config
from fdin.conv.absr_conv import BandSelect
from fdin.data import synth_generate
from fdin.models import FDIN

TINY_HW = (32, 32)


def tiny_overrides(manifest, output_dir, **extra):
    overrides = [
        f'output_dir={output_dir}',
        f'data.manifests=[{manifest}]',
        'data.flip_prob=0.5',
        'model.stem_channels=4',
        'model.channels=[4,8]',
        'train.learning_rate=1e-3',
        'train.lr_halve_epoch=1',
        'train.epochs=2',
        'train.batch_size=2',
        'train.t_c=4',
        'train.resolution=[32,32]',
    ]
    overrides += [f'{k}={v}' for k, v in extra.items()]
    return overrides


@pytest.fixture(scope='session')
def tiny_data(tmp_path_factory):
    root = str(tmp_path_factory.mktemp('tiny_data'))
    synth_generate(seed=3, n_clips=2, t=8, h=TINY_HW[0], w=TINY_HW[1], method='blur_fill', out_dir=root)
    return osp.join(root, 'manifest.tsv')


@pytest.fixture
def tiny_cfg(tiny_data, tmp_path):
    return load_config(overrides=tiny_overrides(tiny_data, str(tmp_path / 'run')))


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return FDIN(TINY_HW, stem_channels=4, channels=[4, 8])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def make_cfg(tiny_data, tmp_path):
    def _make(name, overwrite=None, **extra):
        return load_config(overrides=tiny_overrides(tiny_data, str(tmp_path / name), **extra), overwrite=overwrite)
    return _make


@pytest.fixture
def skewed_band_select(monkeypatch):
    """Scale the gradients of the band-selection backward pass by 1.5."""
    backward = BandSelect.backward

    def skewed(ctx, grad_out):
        return tuple(None if g is None else 1.5 * g for g in backward(ctx, grad_out))

    monkeypatch.setattr(BandSelect, 'backward', staticmethod(skewed))
