import json
import logging
import os.path as osp
from dataclasses import dataclass, field
from typing import List

import numpy as np
from lightning import Callback, Trainer, seed_everything
from torch.utils.data import DataLoader

from fdin.checkpoint import load_pretrained_weights, save_checkpoint
from fdin.config import config_digest, save_config, worker_cap
from fdin.data.utils import makedirs, read_manifests
from fdin.datasets.windows import ClipWindowDataset, EpochSampler, collate_windows
from fdin.models.fdin_pl import FDIN_pl

logger = logging.getLogger(__name__)

TRAIN_LOG = 'train_log.jsonl'
FINAL_CHECKPOINT = 'model.safetensors'


class JsonlTrainLog(Callback):
    r"""Append one ``{step, epoch, lr, loss}`` record per optimisation step; ``epoch`` is 1-based."""

    def __init__(self, file_path):
        self.file_path = file_path
        self.losses: List[float] = []
        self._epoch_losses: List[float] = []

    def on_train_start(self, trainer, pl_module):
        open(self.file_path, 'w').close()

    def on_train_batch_end(self, trainer, pl_module, outputs, batch, batch_idx):
        loss = outputs['loss'] if isinstance(outputs, dict) else outputs
        record = {
            'step': trainer.global_step,
            'epoch': trainer.current_epoch + 1,
            'lr': trainer.optimizers[0].param_groups[0]['lr'],
            'loss': float(loss),
        }
        self.losses.append(record['loss'])
        self._epoch_losses.append(record['loss'])
        with open(self.file_path, 'a') as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    def on_train_epoch_end(self, trainer, pl_module):
        if self._epoch_losses:
            logger.info("epoch %d lr %g mean loss %.5f", trainer.current_epoch + 1,
                        trainer.optimizers[0].param_groups[0]['lr'], float(np.mean(self._epoch_losses)))
        self._epoch_losses = []


class SafetensorsCheckpoint(Callback):
    r"""Write ``checkpoints/epoch_XXX.safetensors`` after every epoch and the final model on exit."""

    def __init__(self, output_dir, model_cfg, digest, t_c):
        self.output_dir = output_dir
        self.model_cfg = model_cfg
        self.digest = digest
        self.t_c = t_c
        self.epoch = 0

    def _save(self, trainer, pl_module, file_path):
        return save_checkpoint(file_path, pl_module.model, self.model_cfg, self.digest,
                               epoch=self.epoch, global_step=trainer.global_step, t_c=self.t_c)

    def on_train_epoch_end(self, trainer, pl_module):
        # 1-based; current_epoch only advances after this hook
        self.epoch = trainer.current_epoch + 1
        ckpt_dir = osp.join(self.output_dir, 'checkpoints')
        makedirs(ckpt_dir)
        self._save(trainer, pl_module, osp.join(ckpt_dir, f'epoch_{self.epoch:03d}.safetensors'))

    def on_train_end(self, trainer, pl_module):
        self._save(trainer, pl_module, osp.join(self.output_dir, FINAL_CHECKPOINT))


@dataclass
class TrainResult:
    checkpoint: str
    log: str
    losses: List[float] = field(default_factory=list)


def build_loader(cfg, manifest):
    t = cfg.train
    dataset = ClipWindowDataset(manifest, t.t_c, cfg.data.train_stride, t.resolution, augment=True,
                                crop_scale=cfg.data.crop_scale, flip_prob=cfg.data.flip_prob, seed=t.seed,
                                cache_clips=cfg.data.cache_clips)
    sampler = EpochSampler(len(dataset), shuffle=True, seed=t.seed)
    num_workers = worker_cap(cfg.data.num_workers)
    return DataLoader(dataset, batch_size=t.batch_size, sampler=sampler, num_workers=num_workers,
                      collate_fn=collate_windows, persistent_workers=num_workers > 0)


def train(cfg) -> TrainResult:
    r"""
    Train FDIN on ``cfg.data.manifests`` and write the run under ``cfg.output_dir``.

    The run directory receives ``config.yaml``, ``train_log.jsonl``, one
    checkpoint per epoch under ``checkpoints/`` and ``model.safetensors``.
    An existing run is only replaced when ``cfg.overwrite`` is set. Disabled
    modules (``model.enable_absr``, ``model.enable_ffca``) are identities.

    Parameters
    ----------
    cfg: DictConfig
        Validated :class:`~fdin.config.RunConfig`.

    Returns
    -------
    TrainResult
    """
    output_dir = cfg.output_dir
    final_path = osp.join(output_dir, FINAL_CHECKPOINT)
    log_path = osp.join(output_dir, TRAIN_LOG)
    if (osp.exists(final_path) or osp.exists(log_path)) and not cfg.overwrite:
        raise FileExistsError(f"{output_dir} already holds a training run; pass --overwrite to replace it")
    makedirs(output_dir)
    save_config(cfg, output_dir)
    digest = config_digest(cfg)

    seed_everything(cfg.train.seed, workers=True)
    manifest = read_manifests(list(cfg.data.manifests))
    loader = build_loader(cfg, manifest)

    task = FDIN_pl(cfg.model, cfg.train)
    if cfg.model.pretrained_weights is not None:
        load_pretrained_weights(task.model, cfg.model.pretrained_weights)

    train_log = JsonlTrainLog(log_path)
    trainer = Trainer(
        accelerator=cfg.train.accelerator,
        devices=1,
        max_epochs=cfg.train.epochs,
        max_steps=cfg.train.max_steps,
        deterministic=True if cfg.train.accelerator == 'cpu' else 'warn',
        callbacks=[train_log, SafetensorsCheckpoint(output_dir, cfg.model, digest, cfg.train.t_c)],
        logger=False,
        enable_checkpointing=False,
        enable_model_summary=False,
        use_distributed_sampler=False,
        log_every_n_steps=1,
    )
    logger.info("training on %d windows, digest %s", len(loader.dataset), digest[:12])
    trainer.fit(task, loader)
    return TrainResult(final_path, log_path, train_log.losses)
