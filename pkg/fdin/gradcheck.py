import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import torch

from fdin.conv.absr_conv import ABSR
from fdin.conv.ffca_conv import FFCA, GFU, LFU
from fdin.conv.resblock_conv import ResBlock3D
from fdin.models.fdin import Encoder3D, MaskRefinementDecoder

logger = logging.getLogger(__name__)

# gradients are compared relative to at least this magnitude
GRAD_FLOOR = 1e-2


@dataclass
class GradcheckResult:
    module: str
    max_rel_error: float
    n_checked: int
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


@dataclass
class _Case:
    module: torch.nn.Module
    forward: Callable
    params: Sequence[str]
    inputs: Sequence[torch.Tensor] = ()


def relative_error(analytic, numeric, floor=GRAD_FLOOR):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _cases(g: torch.Generator) -> Dict[str, _Case]:
    def rand(*shape):
        return torch.randn(*shape, generator=g, dtype=torch.float64)

    absr = ABSR((8, 8), in_channels=3, seed=0)
    frames = rand(2, 2, 3, 8, 8).requires_grad_(True)

    encoder = Encoder3D(3, stem_channels=4, channels=[4, 8])
    clip = rand(2, 3, 2, 8, 8)

    block = ResBlock3D(4, 8, spatial_stride=2)
    volume = rand(2, 4, 2, 8, 8)

    lfu, gfu, ffca = LFU(2), GFU(2), FFCA(4, ratio_global=0.5)
    half, full = rand(2, 2, 2, 4, 4), rand(2, 4, 2, 4, 4)

    decoder = MaskRefinementDecoder([4, 8])
    pyramid = [rand(2, 4, 2, 4, 4), rand(2, 8, 2, 2, 2)]

    return {
        'absr': _Case(absr, lambda: absr(frames), ['weight'], [frames]),
        'encoder_stem': _Case(encoder, lambda: encoder(clip), ['stem.0.weight']),
        'resblock3d': _Case(block, lambda: block(volume), ['conv1.weight', 'conv2.weight', 'shortcut.weight']),
        'lfu': _Case(lfu, lambda: lfu(half), ['conv.weight', 'bn.weight', 'bn.bias']),
        'gfu': _Case(gfu, lambda: gfu(half), ['conv.weight']),
        'ffca_fuse': _Case(ffca, lambda: ffca(full), ['fuse.weight', 'fuse.bias']),
        'decoder': _Case(decoder, lambda: decoder(pyramid, pyramid[-1]),
                         ['blocks.0.0.weight', 'head.weight', 'head.bias']),
    }


MODULES = ('absr', 'encoder_stem', 'resblock3d', 'lfu', 'gfu', 'ffca_fuse', 'decoder')


def _outputs(out):
    return list(out) if isinstance(out, (list, tuple)) else [out]


def check_case(name, case: _Case, g: torch.Generator, tolerance, step, entries_per_param) -> GradcheckResult:
    r"""
    Compare autograd against central differences for a few entries of each listed tensor.

    The scalar objective is a fixed random projection of the module output,
    scaled to unit magnitude.
    """
    with torch.no_grad():
        projections = [torch.randn(o.shape, generator=g, dtype=torch.float64) / o.numel() ** 0.5
                       for o in _outputs(case.forward())]

    def objective():
        return sum((o * p).sum() for o, p in zip(_outputs(case.forward()), projections))

    named = dict(case.module.named_parameters())
    tensors = [named[p] for p in case.params] + list(case.inputs)
    case.module.zero_grad()
    for t in case.inputs:
        t.grad = None
    objective().backward()

    worst, checked = 0.0, 0
    for tensor in tensors:
        analytic = tensor.grad.detach().reshape(-1).clone()
        flat = tensor.data.view(-1)
        idx = torch.randint(0, flat.numel(), (entries_per_param,), generator=g)
        for i in idx.tolist():
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + step
                plus = objective().item()
                flat[i] = orig - step
                minus = objective().item()
                flat[i] = orig
            numeric = (plus - minus) / (2 * step)
            worst = max(worst, relative_error(analytic[i].item(), numeric))
            checked += 1
    return GradcheckResult(name, worst, checked, tolerance)


def run_gradcheck(seed=0, tolerance=1e-6, step=1e-6, entries_per_param=3, modules=MODULES) -> List[GradcheckResult]:
    r"""
    Finite-difference check of every learnable module type at tiny sizes in double precision.

    Modules are built and run in training mode, so BatchNorm uses batch
    statistics exactly as during optimisation.

    Parameters
    ----------
    seed: int, optional
        Seeds module initialisation, inputs and checked entries. (default: :obj:`0`)
    tolerance: float, optional
        Largest accepted relative error. (default: :obj:`1e-6`)
    step: float, optional
        Central difference step. (default: :obj:`1e-6`)
    entries_per_param: int, optional
        Entries checked per tensor. (default: :obj:`3`)
    modules: sequence of str, optional
        Subset of :data:`MODULES`.

    Returns
    -------
    list of GradcheckResult
        One result per module, in :data:`MODULES` order.
    """
    unknown = set(modules) - set(MODULES)
    if unknown:
        raise ValueError(f"unknown gradcheck modules {sorted(unknown)}, expected a subset of {list(MODULES)}")
    results = []
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        g = torch.Generator().manual_seed(seed)
        cases = _cases(g)
        for name in MODULES:
            if name not in modules:
                continue
            case = cases[name]
            case.module.double().train()
            result = check_case(name, case, g, tolerance, step, entries_per_param)
            logger.info("%s: max relative error %.3e over %d entries", name, result.max_rel_error, result.n_checked)
            results.append(result)
    return results
