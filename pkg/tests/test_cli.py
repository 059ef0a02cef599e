import os
import os.path as osp

import numpy as np
import pandas as pd
import pytest
from PIL import Image
from typer.testing import CliRunner

from fdin.checkpoint import save_checkpoint
from fdin.cli import app
from fdin.config import load_config
from fdin.data import open_jsonl_file, synth_generate

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, list(args))


@pytest.fixture
def checkpoint(tmp_path, tiny_model):
    cfg = load_config(overrides=['model.stem_channels=4', 'model.channels=[4,8]'])
    return save_checkpoint(str(tmp_path / 'model.safetensors'), tiny_model, cfg.model, 'digest', t_c=8)


@pytest.fixture
def long_clips(tmp_path):
    root = str(tmp_path / 'long')
    synth_generate(2, 1, 10, 32, 32, 'blur_fill', root)
    return osp.join(root, 'manifest.tsv')


def test_synth(tmp_path):
    out = str(tmp_path / 'synth')
    result = invoke('synth', '-o', out, '--seed', '7', '--set', 'synth.n_clips=2', '--set', 'synth.t=4',
                    '--set', 'synth.h=32', '--set', 'synth.w=32')
    assert result.exit_code == 0, result.output
    assert osp.isfile(osp.join(out, 'manifest.tsv')) and osp.isfile(osp.join(out, 'config.yaml'))
    assert len(os.listdir(osp.join(out, 'frames'))) == 2


def test_synth_validation_errors_write_nothing(tmp_path):
    out = str(tmp_path / 'synth')
    result = invoke('synth', '-o', out, '--set', 'synth.method=poisson')
    assert result.exit_code == 1
    assert 'synth.method' in result.output and 'temporal_copy' in result.output
    result = invoke('synth', '-o', out, '--set', 'synth.h=8')
    assert result.exit_code == 1 and 'synth.h' in result.output
    assert not osp.exists(out)
    assert invoke('synth', '-o', out, '--set', 'synth.colour=red').exit_code == 1


def test_missing_checkpoint_is_a_validation_error(tmp_path, tiny_data):
    result = invoke('eval', '-o', str(tmp_path / 'e'), '--set', f'data.manifests=[{tiny_data}]',
                    '--set', f'eval.checkpoint={tmp_path / "none.safetensors"}')
    assert result.exit_code == 1 and 'eval.checkpoint' in result.output


def test_eval_of_ground_truth_predictions(tmp_path, tiny_data):
    out = str(tmp_path / 'eval')
    masks_root = osp.join(osp.dirname(tiny_data), 'masks')
    result = invoke('eval', '-o', out, '--set', f'eval.manifests=[{tiny_data}]',
                    '--set', f'eval.predictions_dir={masks_root}')
    assert result.exit_code == 0, result.output
    aggregate = open_jsonl_file(osp.join(out, 'metrics.jsonl'))[-1]
    assert aggregate['miou'] == 1.0 and aggregate['f1'] == 1.0 and aggregate['n_frames'] == 16


def test_eval_of_checkpoint(tmp_path, long_clips, checkpoint):
    out = str(tmp_path / 'eval')
    result = invoke('eval', '-o', out, '--set', f'eval.manifests=[{long_clips}]',
                    '--set', f'eval.checkpoint={checkpoint}')
    assert result.exit_code == 0, result.output
    records = open_jsonl_file(osp.join(out, 'metrics.jsonl'))
    assert len(records[0]['iou']) == 10
    assert records[-1]['config_digest'] == 'digest'
    assert len(os.listdir(osp.join(out, 'predictions', 'blur_fill_0000'))) == 10


def test_infer_covers_every_frame(tmp_path, long_clips, checkpoint):
    out = str(tmp_path / 'infer')
    result = invoke('infer', '-o', out, '--set', f'eval.manifests=[{long_clips}]',
                    '--set', f'eval.checkpoint={checkpoint}')
    assert result.exit_code == 0, result.output
    pred_dir = osp.join(out, 'predictions', 'blur_fill_0000')
    names = sorted(os.listdir(pred_dir))
    assert names == [f'mask_{i:05d}.png' for i in range(10)]
    assert set(np.unique(np.asarray(Image.open(osp.join(pred_dir, names[0]))))) <= {0, 255}


def test_robustness(tmp_path, long_clips, checkpoint):
    out = str(tmp_path / 'robust')
    result = invoke('robustness', '-o', out, '--set', f'eval.manifests=[{long_clips}]',
                    '--set', f'eval.checkpoint={checkpoint}')
    assert result.exit_code == 0, result.output
    summary = pd.read_csv(osp.join(out, 'robustness_summary.tsv'), sep='\t')
    assert summary['condition'].tolist() == ['uncompressed', 'QF90', 'QF70']
    assert summary['miou'].between(0, 1).all() and summary['f1'].between(0, 1).all()


def test_export_band_mask(tmp_path, checkpoint):
    out = str(tmp_path / 'band')
    result = invoke('export-band-mask', '-o', out, '--set', f'eval.checkpoint={checkpoint}')
    assert result.exit_code == 0, result.output
    image = Image.open(osp.join(out, 'band_mask.png'))
    assert image.mode == 'L' and image.size == (32, 32)


def test_train_refuses_existing_run(tmp_path, tiny_data):
    out = str(tmp_path / 'run')
    args = ['train', '-o', out, '--set', f'data.manifests=[{tiny_data}]', '--set', 'model.stem_channels=4',
            '--set', 'model.channels=[4,8]', '--set', 'train.t_c=4', '--set', 'train.resolution=[32,32]',
            '--set', 'train.epochs=1', '--set', 'train.lr_halve_epoch=1', '--set', 'train.max_steps=2']
    result = invoke(*args)
    assert result.exit_code == 0, result.output
    assert len(open_jsonl_file(osp.join(out, 'train_log.jsonl'))) == 2
    result = invoke(*args)
    assert result.exit_code == 2 and 'FileExistsError' in result.output
    assert invoke(*args, '--overwrite').exit_code == 0


def test_gradcheck():
    result = invoke('gradcheck')
    assert result.exit_code == 0, result.output
    assert 'decoder' in result.output and 'FAIL' not in result.output


def test_gradcheck_failure_names_module(skewed_band_select):
    result = invoke('gradcheck')
    assert result.exit_code == 2
    assert 'gradcheck failed: absr' in result.output
