import math
from functools import lru_cache
from typing import Tuple

import torch
from torch import Tensor


@lru_cache(maxsize=32)
def _dct_basis(n: int) -> Tensor:
    # rows are frequencies k, columns positions i, computed in float64
    k = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    i = torch.arange(n, dtype=torch.float64).unsqueeze(0)
    basis = torch.cos(math.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    basis[0] = basis[0] / math.sqrt(2.0)
    return basis


def dct_matrix(n: int, dtype: torch.dtype = torch.float32, device=None) -> Tensor:
    r"""
    Orthonormal type-II DCT matrix of size ``n x n``.

    Parameters
    ----------
    n: int
        Transform length.
    dtype: torch.dtype, optional
        Output dtype. (default: :obj:`torch.float32`)
    device: optional
        Output device.

    Returns
    -------
    Tensor
        ``D`` with ``D @ D.T == I``; ``D @ x`` is the DCT-II of ``x``.
    """
    if n < 1:
        raise ValueError(f"DCT length must be >= 1, got {n}")
    return _dct_basis(n).to(dtype=dtype, device=device)


def _check_finite(x: Tensor, name: str):
    if not torch.isfinite(x).all():
        raise ValueError(f"{name}: input contains non-finite values")


def apply_linear_2d(x: Tensor, d_h: Tensor, d_w: Tensor) -> Tensor:
    r"""Apply ``d_h`` along the rows axis and ``d_w`` along the columns axis of the last two dims."""
    return d_h @ x @ d_w.transpose(0, 1)


def dct2(plane: Tensor) -> Tensor:
    r"""
    Full-frame orthonormal 2D DCT-II over the last two dims.

    Parameters
    ----------
    plane: Tensor
        Real tensor of shape ``(..., H, W)``.

    Returns
    -------
    Tensor
        Spectrum of the same shape. ``[..., 0, 0]`` of a constant plane ``c``
        equals ``c * sqrt(H * W)``.
    """
    _check_finite(plane, "dct2")
    h, w = plane.shape[-2:]
    d_h = dct_matrix(h, plane.dtype, plane.device)
    d_w = dct_matrix(w, plane.dtype, plane.device)
    return apply_linear_2d(plane, d_h, d_w)


def idct2(spectrum: Tensor) -> Tensor:
    r"""
    Inverse of :func:`dct2`, which is also its adjoint under the orthonormal convention.

    Parameters
    ----------
    spectrum: Tensor
        Real tensor of shape ``(..., H, W)``.
    """
    _check_finite(spectrum, "idct2")
    h, w = spectrum.shape[-2:]
    d_h = dct_matrix(h, spectrum.dtype, spectrum.device)
    d_w = dct_matrix(w, spectrum.dtype, spectrum.device)
    return apply_linear_2d(spectrum, d_h.transpose(0, 1), d_w.transpose(0, 1))


def rfft_spatial(volume: Tensor) -> Tensor:
    r"""
    Orthonormal real 2D FFT over the spatial ``(H, W)`` axes of every leading slice.

    Parameters
    ----------
    volume: Tensor
        Real tensor of shape ``(..., H, W)``, typically ``(T, C, H, W)``.

    Returns
    -------
    Tensor
        Complex half-spectrum of shape ``(..., H, W // 2 + 1)``.
    """
    _check_finite(volume, "rfft_spatial")
    return torch.fft.rfftn(volume, dim=(-2, -1), norm="ortho")


def irfft_spatial(spectrum: Tensor, out_hw: Tuple[int, int]) -> Tensor:
    r"""
    Inverse of :func:`rfft_spatial`.

    Parameters
    ----------
    spectrum: Tensor
        Complex tensor of shape ``(..., H, W // 2 + 1)``.
    out_hw: tuple of int
        Target ``(H, W)``; disambiguates even and odd widths.
    """
    h, w = int(out_hw[0]), int(out_hw[1])
    if spectrum.shape[-2] != h or spectrum.shape[-1] != w // 2 + 1:
        raise ValueError(
            f"irfft_spatial: spectrum layout {tuple(spectrum.shape[-2:])} "
            f"is inconsistent with target shape {(h, w)}")
    if not torch.isfinite(torch.view_as_real(spectrum)).all():
        raise ValueError("irfft_spatial: input contains non-finite values")
    return torch.fft.irfftn(spectrum, s=(h, w), dim=(-2, -1), norm="ortho")


def hermitian_energy(spectrum: Tensor, width: int) -> Tensor:
    r"""
    Squared norm of the full spectrum reconstructed from an ``rfft`` half-spectrum.

    Bins other than column 0 and (for even ``width``) the Nyquist column have a
    conjugate twin in the discarded half and are counted twice.
    """
    weights = torch.full((spectrum.shape[-1],), 2.0, dtype=spectrum.real.dtype, device=spectrum.device)
    weights[0] = 1.0
    if width % 2 == 0:
        weights[-1] = 1.0
    return (spectrum.abs() ** 2 * weights).sum()
