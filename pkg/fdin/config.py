import os
import json
import hashlib
import logging
import os.path as osp
from dataclasses import dataclass, field
from typing import List, Optional

from omegaconf import OmegaConf, DictConfig
from omegaconf.errors import OmegaConfBaseException

from fdin.data.synth import METHODS, MIN_SIZE
from fdin.data.utils import SPLITS

logger = logging.getLogger(__name__)

OPTIMIZERS = ('adam', 'adamw', 'radam')
COMMANDS = ('synth', 'train', 'eval', 'infer', 'robustness', 'gradcheck', 'export-band-mask')
NUM_WORKERS_ENV = 'FDIN_NUM_WORKERS'


class ConfigError(ValueError):
    r"""Invalid configuration; the message starts with the dotted field name."""


@dataclass
class DataConfig:
    manifests: List[str] = field(default_factory=list)
    train_stride: int = 1
    eval_stride: Optional[int] = None
    crop_scale: float = 1.0
    flip_prob: float = 0.5
    num_workers: int = 0
    cache_clips: int = 16


@dataclass
class ModelConfig:
    in_channels: int = 3
    stem_channels: int = 16
    channels: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    ratio_global: float = 0.5
    enable_absr: bool = True
    enable_ffca: bool = True
    absr_per_channel: bool = False
    absr_concat_raw: bool = False
    band_seed: int = 0
    pretrained_weights: Optional[str] = None


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    lr_halve_epoch: int = 10
    epochs: int = 20
    batch_size: int = 4
    t_c: int = 8
    resolution: List[int] = field(default_factory=lambda: [64, 112])
    seed: int = 0
    max_steps: int = -1
    optimizer: str = 'adam'
    accelerator: str = 'cpu'


@dataclass
class SynthConfig:
    n_clips: int = 20
    t: int = 16
    h: int = 64
    w: int = 112
    method: str = 'blur_fill'
    split: str = 'train'
    save_originals: bool = False


@dataclass
class EvalConfig:
    checkpoint: Optional[str] = None
    manifests: List[str] = field(default_factory=list)
    threshold: float = 0.5
    predictions_dir: Optional[str] = None
    qf_list: List[int] = field(default_factory=lambda: [70, 90])


@dataclass
class GradcheckConfig:
    tolerance: float = 1e-6
    step: float = 1e-6
    entries_per_param: int = 3


@dataclass
class RunConfig:
    r"""
    Complete configuration of one command invocation.

    ``seed`` drives synthesis and gradient checks; ``train.seed`` drives
    training. The ``--seed`` flag sets both.
    """
    output_dir: str = 'runs/fdin'
    overwrite: bool = False
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)


def load_config(path=None, overrides=(), output_dir=None, overwrite=None, seed=None) -> DictConfig:
    r"""
    Build the effective configuration.

    Later sources win: schema defaults, the YAML file at ``path``,
    ``key=value`` dotlist ``overrides``, then the dedicated arguments.
    Unknown keys and ill-typed values raise :class:`ConfigError`.

    Parameters
    ----------
    path: str, optional
        YAML config file.
    overrides: sequence of str, optional
        Dotlist entries such as ``train.epochs=2``.
    output_dir: str, optional
        Overrides ``output_dir``.
    overwrite: bool, optional
        Overrides ``overwrite``.
    seed: int, optional
        Overrides both ``seed`` and ``train.seed``.
    """
    cfg = OmegaConf.structured(RunConfig)
    OmegaConf.set_struct(cfg, True)
    try:
        if path is not None:
            if not osp.isfile(path):
                raise ConfigError(f"config: file not found: {path}")
            cfg = OmegaConf.merge(cfg, OmegaConf.load(path))
        if overrides:
            cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(overrides)))
        if output_dir is not None:
            cfg.output_dir = output_dir
        if overwrite is not None:
            cfg.overwrite = overwrite
        if seed is not None:
            cfg.seed = seed
            cfg.train.seed = seed
    except OmegaConfBaseException as e:
        key = getattr(e, 'full_key', None) or 'config'
        raise ConfigError(f"{key}: {e.msg if hasattr(e, 'msg') else e}") from e
    return cfg


def _require(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _require_files(paths, key):
    for p in paths:
        _require(osp.isfile(p), key, f"file not found: {p}")


def eval_manifests(cfg):
    r"""Manifests evaluated by eval/infer/robustness: ``eval.manifests``, else ``data.manifests``."""
    return list(cfg.eval.manifests) or list(cfg.data.manifests)


def validate_config(cfg: DictConfig, command: str):
    r"""
    Check ranges and referenced paths for ``command`` before any work starts.

    Raises
    ------
    ConfigError
        Naming the first offending field.
    """
    _require(command in COMMANDS, 'command', f"unknown command '{command}'")
    t, m, d, s, e, g = cfg.train, cfg.model, cfg.data, cfg.synth, cfg.eval, cfg.gradcheck

    _require(t.learning_rate > 0, 'train.learning_rate', "must be positive")
    _require(t.epochs > 0, 'train.epochs', "must be positive")
    _require(0 < t.lr_halve_epoch <= t.epochs, 'train.lr_halve_epoch', "must lie in [1, train.epochs]")
    _require(t.batch_size > 0, 'train.batch_size', "must be positive")
    _require(t.t_c > 0, 'train.t_c', "must be positive")
    _require(len(t.resolution) == 2 and all(v > 0 for v in t.resolution), 'train.resolution',
             "must be two positive integers [H, W]")
    _require(t.max_steps == -1 or t.max_steps > 0, 'train.max_steps', "must be -1 or positive")
    _require(t.optimizer in OPTIMIZERS, 'train.optimizer', f"must be one of {', '.join(OPTIMIZERS)}")

    channels = list(m.channels)
    _require(m.in_channels > 0 and m.stem_channels > 0, 'model.in_channels', "channel counts must be positive")
    _require(len(channels) > 0 and all(c > 0 for c in channels), 'model.channels', "must be non-empty and positive")
    _require(all(b > a for a, b in zip(channels, channels[1:])), 'model.channels', "must be strictly increasing")
    _require(0 < m.ratio_global < 1, 'model.ratio_global', "must lie in (0, 1)")
    c_g = int(round(m.ratio_global * channels[-1]))
    _require(0 < c_g < channels[-1], 'model.ratio_global',
             f"leaves an empty FFCA branch on {channels[-1]} channels")
    if m.pretrained_weights is not None:
        _require_files([m.pretrained_weights], 'model.pretrained_weights')

    _require(d.train_stride >= 1, 'data.train_stride', "must be >= 1")
    _require(d.eval_stride is None or d.eval_stride >= 1, 'data.eval_stride', "must be >= 1 or null")
    _require(d.crop_scale >= 1.0, 'data.crop_scale', "must be >= 1")
    _require(0.0 <= d.flip_prob <= 1.0, 'data.flip_prob', "must lie in [0, 1]")
    _require(d.num_workers >= 0, 'data.num_workers', "must be >= 0")
    _require(d.cache_clips >= 1, 'data.cache_clips', "must be >= 1")

    if command == 'synth':
        _require(s.n_clips >= 1, 'synth.n_clips', "must be >= 1")
        _require(s.t >= 1, 'synth.t', "must be >= 1")
        _require(s.h >= MIN_SIZE and s.w >= MIN_SIZE, 'synth.h', f"frames must be at least {MIN_SIZE}x{MIN_SIZE}")
        _require(s.method in METHODS, 'synth.method', f"must be one of {', '.join(METHODS)}")
        _require(s.split in SPLITS, 'synth.split', f"must be one of {', '.join(SPLITS)}")

    if command == 'train':
        _require(len(d.manifests) > 0, 'data.manifests', "at least one manifest is required for training")
        _require_files(d.manifests, 'data.manifests')

    if command in ('eval', 'infer', 'robustness', 'export-band-mask'):
        _require(0 < e.threshold < 1, 'eval.threshold', "must lie in (0, 1)")
        _require(all(1 <= q <= 100 for q in e.qf_list), 'eval.qf_list', "quality factors must lie in [1, 100]")
        model_free = command == 'eval' and e.predictions_dir is not None
        if model_free:
            _require(osp.isdir(e.predictions_dir), 'eval.predictions_dir', f"directory not found: {e.predictions_dir}")
        else:
            _require(e.checkpoint is not None, 'eval.checkpoint', "is required")
            _require_files([e.checkpoint], 'eval.checkpoint')
        if command != 'export-band-mask':
            manifests = eval_manifests(cfg)
            _require(len(manifests) > 0, 'eval.manifests', "at least one manifest is required")
            _require_files(manifests, 'eval.manifests')

    if command == 'gradcheck':
        _require(g.tolerance > 0, 'gradcheck.tolerance', "must be positive")
        _require(g.step > 0, 'gradcheck.step', "must be positive")
        _require(g.entries_per_param >= 1, 'gradcheck.entries_per_param', "must be >= 1")
    return cfg


def config_digest(cfg: DictConfig) -> str:
    r"""SHA-256 of the canonical JSON of the ``model`` and ``train`` sections."""
    payload = {
        'model': OmegaConf.to_container(cfg.model, resolve=True),
        'train': OmegaConf.to_container(cfg.train, resolve=True),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(',', ':')).encode()).hexdigest()


def save_config(cfg: DictConfig, output_dir: str):
    path = osp.join(output_dir, 'config.yaml')
    OmegaConf.save(cfg, path)
    return path


def flatten(cfg: DictConfig):
    r"""Dotted ``{key: value}`` view of a config for :func:`~fdin.data.args_print`."""
    out = {}

    def _walk(node, prefix):
        for k, v in node.items():
            key = f'{prefix}{k}'
            if isinstance(v, dict):
                _walk(v, key + '.')
            else:
                out[key] = v

    _walk(OmegaConf.to_container(cfg, resolve=True), '')
    return out


def worker_cap(requested: int) -> int:
    r"""Apply the ``FDIN_NUM_WORKERS`` cap, if set, to a requested worker count."""
    cap = os.environ.get(NUM_WORKERS_ENV)
    if cap is None:
        return requested
    try:
        cap = int(cap)
    except ValueError:
        raise ConfigError(f"{NUM_WORKERS_ENV}: expected an integer, got '{cap}'")
    return max(0, min(requested, cap))
