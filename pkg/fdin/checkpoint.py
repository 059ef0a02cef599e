import os
import json
import logging
import os.path as osp

from omegaconf import OmegaConf
from safetensors import safe_open
from safetensors.torch import load_file, save_file

from fdin.config import ModelConfig
from fdin.models.fdin import FDIN

logger = logging.getLogger(__name__)

FORMAT_VERSION = '1'


def save_checkpoint(file_path, model: FDIN, model_cfg, config_digest, epoch=0, global_step=0, t_c=None):
    r"""
    Write model tensors and a versioned metadata header to a ``.safetensors`` file.

    The header records ``format_version``, ``config_digest``, ``resolution``
    as ``"HxW"``, the model section as JSON, ``epoch``, ``global_step`` and the
    training window length ``t_c`` when given.
    The file is written to a temporary name and renamed into place.
    """
    if not isinstance(model_cfg, dict):
        model_cfg = OmegaConf.to_container(model_cfg, resolve=True)
    h, w = model.resolution
    metadata = {
        'format_version': FORMAT_VERSION,
        'config_digest': str(config_digest),
        'resolution': f'{h}x{w}',
        'model_config': json.dumps(model_cfg, sort_keys=True),
        'epoch': str(int(epoch)),
        'global_step': str(int(global_step)),
    }
    if t_c is not None:
        metadata['t_c'] = str(int(t_c))
    tensors = {k: v.detach().cpu().contiguous() for k, v in model.state_dict().items()}
    tmp_path = file_path + '.tmp'
    save_file(tensors, tmp_path, metadata=metadata)
    os.replace(tmp_path, file_path)
    logger.info("saved checkpoint %s (epoch %d, step %d)", file_path, epoch, global_step)
    return file_path


def read_header(file_path):
    r"""Return the metadata header after checking its format version."""
    if not osp.isfile(file_path):
        raise FileNotFoundError(f"checkpoint not found: {file_path}")
    try:
        with safe_open(file_path, framework='pt') as f:
            metadata = f.metadata() or {}
    except Exception as e:
        raise RuntimeError(f"cannot read checkpoint {file_path}: {e}") from e
    version = metadata.get('format_version')
    if version != FORMAT_VERSION:
        raise RuntimeError(
            f"checkpoint {file_path} has format_version {version!r}, expected {FORMAT_VERSION!r}")
    for key in ('config_digest', 'resolution', 'model_config'):
        if key not in metadata:
            raise RuntimeError(f"checkpoint {file_path} header is missing '{key}'")
    return metadata


def parse_resolution(text):
    h, w = text.lower().split('x')
    return int(h), int(w)


def load_checkpoint(file_path, map_location='cpu'):
    r"""
    Rebuild an :class:`~fdin.models.FDIN` from a checkpoint.

    Parameters
    ----------
    file_path: str
        ``.safetensors`` file written by :func:`save_checkpoint`.
    map_location: str, optional
        Device for the tensors. (default: :obj:`'cpu'`)

    Returns
    -------
    tuple
        ``(model, metadata)``; the model is in eval mode.
    """
    metadata = read_header(file_path)
    model_cfg = OmegaConf.merge(OmegaConf.structured(ModelConfig), json.loads(metadata['model_config']))
    model = FDIN.from_config(model_cfg, parse_resolution(metadata['resolution']))
    state_dict = load_file(file_path, device=map_location)
    try:
        model.load_state_dict(state_dict, strict=True)
    except RuntimeError as e:
        raise RuntimeError(f"checkpoint {file_path} tensors do not match its model_config: {e}") from e
    model.to(map_location).eval()
    logger.info("load checkpoint from %s" % file_path)
    return model, metadata


def load_pretrained_weights(model: FDIN, file_path):
    r"""Load matching tensors from ``file_path`` non-strictly, logging what was left out."""
    if not osp.isfile(file_path):
        raise FileNotFoundError(f"pretrained weights not found: {file_path}")
    state_dict = load_file(file_path, device='cpu')
    own = model.state_dict()
    compatible = {k: v for k, v in state_dict.items() if k in own and own[k].shape == v.shape}
    skipped = sorted(set(state_dict) - set(compatible))
    msg = model.load_state_dict(compatible, strict=False)
    logger.info("Missing keys {}".format(msg.missing_keys))
    if skipped:
        logger.warning("skipped %d tensors with unknown names or shapes: %s", len(skipped), skipped)
    logger.info("load pretrained weights from %s" % file_path)
    return msg
