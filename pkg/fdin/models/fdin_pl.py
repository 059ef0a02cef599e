import logging

import torch
import torch.nn.functional as F
from lightning import LightningModule
from torch.optim.lr_scheduler import MultiStepLR

from fdin.models.fdin import FDIN
from fdin.models.utils import get_optimizer

logger = logging.getLogger(__name__)


def bce_loss(logits, gt):
    r"""
    Mean per-pixel binary cross-entropy on logits.

    Parameters
    ----------
    logits: Tensor
        ``(..., T, 1, H, W)`` or the same shape as ``gt``.
    gt: Tensor
        Binary ``(..., T, H, W)`` masks.
    """
    if logits.dim() == gt.dim() + 1 and logits.shape[-3] == 1:
        logits = logits.squeeze(-3)
    if logits.shape != gt.shape:
        raise ValueError(f"logits {tuple(logits.shape)} and masks {tuple(gt.shape)} do not align")
    return F.binary_cross_entropy_with_logits(logits, gt.to(logits.dtype), reduction='mean')


loss = bce_loss


class FDIN_pl(LightningModule):
    r"""
    Training task around :class:`~fdin.models.FDIN`.

    Adam at ``learning_rate``, halved once when epoch ``lr_halve_epoch`` ends.
    A non-finite loss aborts the run with the global step index.

    Parameters
    ----------
    model_cfg: ModelConfig
        Architecture section of the run config.
    train_cfg: TrainConfig
        Optimisation section of the run config.
    """

    def __init__(self, model_cfg, train_cfg):
        super().__init__()
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.model = FDIN.from_config(model_cfg, tuple(train_cfg.resolution))

    def forward(self, clips):
        return self.model(clips)

    def training_step(self, batch, batch_idx):
        bs = batch['frames'].shape[0]
        logits = self(batch['frames'])
        loss = bce_loss(logits, batch['masks'])
        if not torch.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss {loss.item()} at step {self.global_step}")

        lr = self.trainer.optimizers[0].param_groups[0]['lr']
        log_dict = {'train_loss': loss.detach(), 'lr': lr}
        self.log_dict(log_dict, on_step=True, on_epoch=False, prog_bar=True, batch_size=bs)
        return loss

    def configure_optimizers(self):
        optimizer = get_optimizer(self.parameters(), self.train_cfg.optimizer,
                                  {'lr': self.train_cfg.learning_rate})
        scheduler = MultiStepLR(optimizer, milestones=[self.train_cfg.lr_halve_epoch], gamma=0.5)
        scheduler = {"scheduler": scheduler, "interval": "epoch", "frequency": 1}
        return [optimizer], [scheduler]
