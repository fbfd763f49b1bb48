"""Generalized Anscombe transform and its inverses.

The forward map turns Poisson-Gaussian data into approximately unit-variance
Gaussian data.  Writing ``z' = z/a + b/a**2`` it is exactly the classical
Anscombe transform ``2*sqrt(z' + 3/8)``, so the closed-form approximation of
the exact unbiased inverse (Makitalo & Foi 2011), derived for unit Poisson
data, carries over by standardising, inverting and undoing the standardisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .image import Image
from .noise import NoiseParams

if TYPE_CHECKING:
    from .denoise import DenoiserSpec

_SQRT_3_2 = math.sqrt(1.5)
ANSCOMBE_MIN = 2.0 * math.sqrt(3.0 / 8.0)
# Below this value the negative powers of the closed form diverge.
D_MIN = ANSCOMBE_MIN + 1e-9


@dataclass(frozen=True, eq=False)
class TransformedImage:
    """Raster in the stabilised domain plus the parameters that produced it."""

    data: np.ndarray
    params: NoiseParams
    peak: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if np.any(arr < 0):
            raise ValueError("transformed samples must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def with_data(self, data) -> "TransformedImage":
        return TransformedImage(data, self.params, self.peak)


def gat(z, a: float, b: float):
    """Forward transform on raw arrays; ``b`` is used as given."""
    z = np.asarray(z, dtype=np.float64)
    return (2.0 / a) * np.sqrt(np.maximum(a * z + 0.375 * a * a + b, 0.0))


def closed_form_inverse(D):
    """Closed-form approximation of the exact unbiased inverse Anscombe map.

    Valid for ``D >= 2*sqrt(3/8)``; no clamping is done here.
    """
    D = np.asarray(D, dtype=np.float64)
    inv = 1.0 / D
    return (
        0.25 * D * D
        + 0.25 * _SQRT_3_2 * inv
        - 1.375 * inv * inv
        + 0.625 * _SQRT_3_2 * inv * inv * inv
        - 0.125
    )


def gat_forward(image: Image, params: NoiseParams) -> TransformedImage:
    data = gat(image.data, params.a, params.effective_b)
    return TransformedImage(data, params, image.peak)


def inverse_algebraic(t: TransformedImage) -> Image:
    a, b = t.params.a, t.params.effective_b
    d = t.data
    return Image(((a * d / 2.0) ** 2 - 0.375 * a * a - b) / a, t.peak)


def _unbiased(D, a: float, b: float):
    D = np.asarray(D, dtype=np.float64)
    low = D < D_MIN
    safe = np.where(low, D_MIN, D)
    y = a * closed_form_inverse(safe) - b / a
    if np.any(low):
        algebraic = ((a * D / 2.0) ** 2 - 0.375 * a * a - b) / a
        y = np.where(low, np.maximum(algebraic, 0.0), y)
    return y


def inverse_exact_unbiased(t: TransformedImage) -> Image:
    """Bias-corrected inverse; samples below the transform range map to the
    algebraic inverse floored at zero."""
    return Image(_unbiased(t.data, t.params.a, t.params.effective_b), t.peak)


def vst_denoise(image: Image, params: NoiseParams, denoiser: "DenoiserSpec") -> Image:
    """Transform, denoise at unit sigma, invert without bias, floor at zero."""
    from .denoise import denoise

    t = gat_forward(image, params)
    d = denoise(t.data, 1.0, denoiser).image
    # a denoiser may dip slightly below zero; the inverse handles that region
    y = _unbiased(d, params.a, params.effective_b)
    return image.with_data(np.maximum(y, 0.0))
