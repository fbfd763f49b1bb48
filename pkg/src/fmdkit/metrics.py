"""PSNR and SSIM scoring.

Colour images are scored channel by channel and the per-channel values are
averaged.  Channels that match the reference exactly have infinite PSNR; they
are left out of the PSNR mean and reported through ``excluded_channels``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import Image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float
    excluded_channels: tuple[int, ...] = ()


def _check_pair(reference: Image, test: Image):
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if reference.peak != test.peak:
        raise ValueError(f"peak mismatch: {reference.peak} vs {test.peak}")


def _psnr(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gauss(x: np.ndarray) -> np.ndarray:
    # 11-tap window: radius 5 = truncate * sigma
    return ndimage.gaussian_filter(
        x, SSIM_SIGMA, mode="reflect", truncate=(SSIM_WINDOW // 2) / SSIM_SIGMA
    )


def ssim_map(x: np.ndarray, y: np.ndarray, peak: float) -> np.ndarray:
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mx, my = _gauss(x), _gauss(y)
    sxx = _gauss(x * x) - mx * mx
    syy = _gauss(y * y) - my * my
    sxy = _gauss(x * y) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def _ssim(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    if np.array_equal(x, y):
        return 1.0
    return float(np.mean(ssim_map(x, y, peak)))


def psnr(reference: Image, test: Image) -> float:
    """``10 log10(peak^2 / MSE)`` over all samples; ``inf`` for identical images."""
    _check_pair(reference, test)
    return _psnr(reference.data, test.data, reference.peak)


def ssim(reference: Image, test: Image) -> float:
    """Mean SSIM, averaged over channels."""
    _check_pair(reference, test)
    vals = [
        _ssim(reference.channel(k), test.channel(k), reference.peak)
        for k in range(reference.channels)
    ]
    return float(np.mean(vals))


def score_pair(reference: Image, test: Image) -> QualityScore:
    if reference.channels != test.channels:
        raise ValueError(f"channel mismatch: {reference.channels} vs {test.channels}")
    if reference.channels == 1:
        return QualityScore(psnr(reference, test), ssim(reference, test))
    return score_multichannel(reference, test)


def score_multichannel(reference: Image, test: Image) -> QualityScore:
    """Arithmetic mean of per-channel PSNR and SSIM."""
    if reference.channels != test.channels:
        raise ValueError(f"channel mismatch: {reference.channels} vs {test.channels}")
    _check_pair(reference, test)
    p = [
        _psnr(reference.channel(k), test.channel(k), reference.peak)
        for k in range(reference.channels)
    ]
    s = [
        _ssim(reference.channel(k), test.channel(k), reference.peak)
        for k in range(reference.channels)
    ]
    finite = [v for v in p if math.isfinite(v)]
    excluded = tuple(k for k, v in enumerate(p) if not math.isfinite(v))
    mean_psnr = math.fsum(finite) / len(finite) if finite else math.inf
    return QualityScore(mean_psnr, math.fsum(s) / len(s), excluded)
