import logging
import os.path as osp
from typing import List, Optional

import numpy as np
import typer
from PIL import Image
from omegaconf.errors import OmegaConfBaseException
from rich.logging import RichHandler
from texttable import Texttable
from tqdm import tqdm

from fdin.checkpoint import load_checkpoint
from fdin.config import ConfigError, eval_manifests, flatten, load_config, save_config, validate_config, worker_cap
from fdin.data.synth import synth_generate
from fdin.data.utils import args_print, makedirs, read_manifests
from fdin.data.video import load_frames, save_masks
from fdin.evaluate.evaluator import evaluate, evaluate_predictions, predict_clip, robustness_eval
from fdin.gradcheck import run_gradcheck
from fdin.trainer import train as run_training

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

app = typer.Typer(add_completion=False, help="Frequency-domain video inpainting detection.")

CONFIG_OPT = typer.Option(None, '--config', '-c', help="YAML config file.")
SET_OPT = typer.Option(None, '--set', help="Override one key, e.g. --set train.epochs=2. Repeatable.")
OUTPUT_OPT = typer.Option(None, '--output', '-o', help="Output directory.")
OVERWRITE_OPT = typer.Option(False, '--overwrite', help="Replace an existing run.")
SEED_OPT = typer.Option(None, '--seed', help="Seed for synthesis, training and gradient checks.")
LOG_LEVEL_OPT = typer.Option('INFO', '--log-level', help="Logging level.")


def setup_logging(level='INFO'):
    logging.basicConfig(level=level.upper(), format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(show_path=False)], force=True)


def _fail(message, code):
    typer.echo(message, err=True)
    raise typer.Exit(code=code)


def _execute(command, body, config, overrides, output, overwrite, seed, log_level):
    setup_logging(log_level)
    try:
        cfg = load_config(config, overrides or (), output_dir=output, overwrite=True if overwrite else None,
                          seed=seed)
        validate_config(cfg, command)
    except ConfigError as e:
        _fail(f"config error: {e}", EXIT_VALIDATION)
    args_print(flatten(cfg))
    try:
        body(cfg)
    except (ConfigError, OmegaConfBaseException) as e:
        _fail(f"config error: {e}", EXIT_VALIDATION)
    except typer.Exit:
        raise
    except Exception as e:
        logger.debug("%s failed", command, exc_info=True)
        _fail(f"{command} failed: {type(e).__name__}: {e}", EXIT_RUNTIME)


def _prepare_output(cfg):
    makedirs(cfg.output_dir)
    save_config(cfg, cfg.output_dir)


def _synth(cfg):
    s = cfg.synth
    _prepare_output(cfg)
    manifest = synth_generate(cfg.seed, s.n_clips, s.t, s.h, s.w, s.method, cfg.output_dir, split=s.split,
                              save_originals=s.save_originals, n_jobs=max(1, worker_cap(cfg.data.num_workers)))
    typer.echo(f"{manifest.path}\t{len(manifest)} clips")


def _train(cfg):
    result = run_training(cfg)
    typer.echo(f"{result.checkpoint}\t{len(result.losses)} steps, final loss {result.losses[-1]:.6f}")


def _eval(cfg):
    _prepare_output(cfg)
    manifest = read_manifests(eval_manifests(cfg))
    e = cfg.eval
    if e.predictions_dir is not None:
        report = evaluate_predictions(e.predictions_dir, manifest, seed=cfg.seed)
    else:
        report = evaluate(e.checkpoint, manifest, e.threshold, stride=cfg.data.eval_stride, seed=cfg.train.seed,
                          predictions_dir=osp.join(cfg.output_dir, 'predictions'))
    path = report.save(osp.join(cfg.output_dir, 'metrics.jsonl'))
    typer.echo(f"{path}\tmIoU {report.miou:.4f}\tF1 {report.f1:.4f}\tframes {report.n_frames}")


def _infer(cfg):
    _prepare_output(cfg)
    model, metadata = load_checkpoint(cfg.eval.checkpoint)
    t_c = int(metadata.get('t_c', cfg.train.t_c))
    pred_root = osp.join(cfg.output_dir, 'predictions')
    manifest = read_manifests(eval_manifests(cfg))
    n_frames = 0
    for record in tqdm(manifest.records, desc='infer'):
        clip = load_frames(record.frame_dir)
        pred = predict_clip(model, clip, t_c, cfg.eval.threshold, cfg.data.eval_stride)
        save_masks(pred.masks, osp.join(pred_root, record.clip_id))
        n_frames += len(pred)
    typer.echo(f"{pred_root}\t{len(manifest)} clips, {n_frames} masks")


def _robustness(cfg):
    _prepare_output(cfg)
    manifest = read_manifests(eval_manifests(cfg))
    reports = robustness_eval(cfg.eval.checkpoint, manifest, list(cfg.eval.qf_list), output_dir=cfg.output_dir,
                              threshold=cfg.eval.threshold, stride=cfg.data.eval_stride, seed=cfg.train.seed)
    t = Texttable()
    t.add_row(['condition', 'mIoU', 'F1', 'frames'])
    for label, report in reports.items():
        t.add_row([label, f'{report.miou:.4f}', f'{report.f1:.4f}', report.n_frames])
    typer.echo(t.draw())
    typer.echo(osp.join(cfg.output_dir, 'robustness_summary.tsv'))


def _gradcheck(cfg):
    g = cfg.gradcheck
    results = run_gradcheck(cfg.seed, g.tolerance, g.step, g.entries_per_param)
    t = Texttable()
    t.add_row(['module', 'max rel. error', 'entries', 'status'])
    for r in results:
        t.add_row([r.module, f'{r.max_rel_error:.3e}', r.n_checked, 'ok' if r.passed else 'FAIL'])
    typer.echo(t.draw())
    failed = [r.module for r in results if not r.passed]
    if failed:
        _fail(f"gradcheck failed: {', '.join(failed)}", EXIT_RUNTIME)


def _export_band_mask(cfg):
    _prepare_output(cfg)
    model, _ = load_checkpoint(cfg.eval.checkpoint)
    if not model.enable_absr:
        raise ValueError(f"checkpoint {cfg.eval.checkpoint} was trained without ABSR; there is no band mask")
    band = model.absr.band_image().cpu().numpy()
    path = osp.join(cfg.output_dir, 'band_mask.png')
    Image.fromarray(np.round(band * 255).astype(np.uint8), mode='L').save(path)
    typer.echo(path)


@app.command()
def synth(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT, output: Optional[str] = OUTPUT_OPT,
          overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT, log_level: str = LOG_LEVEL_OPT):
    """Write a synthetic inpainting dataset and its manifest."""
    _execute('synth', _synth, config, set_, output, overwrite, seed, log_level)


@app.command()
def train(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT, output: Optional[str] = OUTPUT_OPT,
          overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT, log_level: str = LOG_LEVEL_OPT):
    """Train a model; writes checkpoints and train_log.jsonl."""
    _execute('train', _train, config, set_, output, overwrite, seed, log_level)


@app.command(name='eval')
def eval_(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT, output: Optional[str] = OUTPUT_OPT,
          overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT, log_level: str = LOG_LEVEL_OPT):
    """Score a checkpoint, or a predictions directory, against ground truth."""
    _execute('eval', _eval, config, set_, output, overwrite, seed, log_level)


@app.command()
def infer(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT, output: Optional[str] = OUTPUT_OPT,
          overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT, log_level: str = LOG_LEVEL_OPT):
    """Predict a mask image for every frame of every clip."""
    _execute('infer', _infer, config, set_, output, overwrite, seed, log_level)


@app.command()
def robustness(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT,
               output: Optional[str] = OUTPUT_OPT, overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT,
               log_level: str = LOG_LEVEL_OPT):
    """Evaluate uncompressed and JPEG-recompressed versions of the clips."""
    _execute('robustness', _robustness, config, set_, output, overwrite, seed, log_level)


@app.command()
def gradcheck(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT,
              output: Optional[str] = OUTPUT_OPT, overwrite: bool = OVERWRITE_OPT, seed: Optional[int] = SEED_OPT,
              log_level: str = LOG_LEVEL_OPT):
    """Compare analytic and finite-difference gradients of every learnable module."""
    _execute('gradcheck', _gradcheck, config, set_, output, overwrite, seed, log_level)


@app.command(name='export-band-mask')
def export_band_mask(config: Optional[str] = CONFIG_OPT, set_: Optional[List[str]] = SET_OPT,
                     output: Optional[str] = OUTPUT_OPT, overwrite: bool = OVERWRITE_OPT,
                     seed: Optional[int] = SEED_OPT, log_level: str = LOG_LEVEL_OPT):
    """Save the learned band-selection matrix as a grayscale image."""
    _execute('export-band-mask', _export_band_mask, config, set_, output, overwrite, seed, log_level)


def main():
    app(prog_name='fdin')
