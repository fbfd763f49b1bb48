"""Poisson-Gaussian noise model.

A measured sample is ``z = a * Poisson(y / a) + Normal(0, b)``: ``a`` is the
detector value of a single photon and ``b`` the variance of the additive
Gaussian part.  Averaging ``S`` independent realizations keeps the mean at
``y`` and divides the variance ``a*y + b`` by ``S``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from . import _rng
from .image import Image

# Stream tags keep the Poisson and Gaussian draws of a pixel disjoint.
_POISSON_STREAM = 1
_GAUSS_STREAM = 2
_INVERSION_LIMIT = 10.0


@dataclass(frozen=True)
class NoiseParams:
    """Scaling coefficient ``a`` and Gaussian variance ``b``.

    ``b`` is stored as given; estimators can return negative values, which
    consumers clamp through :attr:`effective_b`.
    """

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"a must be positive, got {self.a}")
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def effective_b(self) -> float:
        return max(self.b, 0.0)

    def averaged(self, S: int) -> "NoiseParams":
        """Parameters of the mean of ``S`` independent realizations."""
        if S < 1:
            raise ValueError("S must be >= 1")
        return NoiseParams(self.a / S, self.b / S)


# ---------------------------------------------------------------------------
# Poisson sampling


def _poisson_inversion(lam, seed, index):
    """Sequential-search inversion, one uniform per pixel."""
    u = _rng.uniform(seed, index, 0)
    k = np.zeros(lam.shape, dtype=np.float64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    kk = 0
    while active.any():
        kk += 1
        p = np.where(active, p * lam / kk, p)
        k[active] = kk
        cdf = cdf + p
        active &= u > cdf
        # float round-off can leave cdf a hair below u deep in the tail
        if kk > 200:
            break
    return k


def _poisson_ptrs(lam, seed, index):
    """Hormann's transformed rejection with squeeze (PTRS), vectorised.

    Each pixel draws its ``t``-th attempt from slots ``2t`` and ``2t + 1`` of its
    own stream, so results do not depend on which other pixels are sampled.
    """
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    log_invalpha = np.log(1.1239 + 1.1328 / (b - 3.4))
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.empty(lam.shape, dtype=np.float64)
    todo = np.arange(lam.size)
    attempt = 0
    while todo.size:
        idx = index[todo]
        U = _rng.uniform(seed, idx, 2 * attempt) - 0.5
        V = _rng.uniform(seed, idx, 2 * attempt + 1)
        us = 0.5 - np.abs(U)
        at, bt, lt = a[todo], b[todo], lam[todo]
        k = np.floor((2.0 * at / us + bt) * U + lt + 0.43)

        fast = (us >= 0.07) & (V <= vr[todo])
        reject = (k < 0) | ((us < 0.013) & (V > us))
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(V) + log_invalpha[todo] - np.log(at / (us * us) + bt)
            rhs = -lt + k * loglam[todo] - special.gammaln(k + 1.0)
        accept = fast | (~reject & (lhs <= rhs))

        out[todo[accept]] = k[accept]
        todo = todo[~accept]
        attempt += 1
    return out


def sample_poisson(lam, seed: int, index=None) -> np.ndarray:
    """Poisson variates with means ``lam`` from counter-based streams.

    ``index`` gives the stream index of every element (defaults to the flat
    position).  Means below 10 use inversion, larger ones PTRS rejection.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("Poisson means must be finite and non-negative")
    flat = lam.reshape(-1)
    if index is None:
        index = np.arange(flat.size, dtype=np.uint64)
    index = np.asarray(index, dtype=np.uint64).reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)

    small = (flat > 0) & (flat < _INVERSION_LIMIT)
    large = flat >= _INVERSION_LIMIT
    if small.any():
        out[small] = _poisson_inversion(flat[small], seed, index[small])
    if large.any():
        out[large] = _poisson_ptrs(flat[large], seed, index[large])
    return out.reshape(lam.shape)


# ---------------------------------------------------------------------------
# public model


def sample_noisy(ground_truth: Image, params: NoiseParams, seed: int) -> Image:
    """Draw one Poisson-Gaussian realization of ``ground_truth``."""
    y = ground_truth.data
    if np.any(y < 0):
        raise ValueError("ground truth must be non-negative")
    index = np.arange(y.size, dtype=np.uint64).reshape(y.shape)
    poisson_seed = _rng.derive_seed(seed, _POISSON_STREAM)
    counts = sample_poisson(y / params.a, poisson_seed, index)
    z = params.a * counts
    b = params.effective_b
    if b > 0:
        gauss_seed = _rng.derive_seed(seed, _GAUSS_STREAM)
        z = z + math.sqrt(b) * _rng.standard_normal(gauss_seed, index, 0)
    return ground_truth.with_data(z)


def default_k_max(y: float, a: float) -> int:
    lam = y / a
    return int(math.ceil(lam + 12.0 * math.sqrt(max(lam, 1.0)) + 30.0))


def pg_pdf(z, y: float, params: NoiseParams, k_max: int | None = None):
    """Density of the Poisson-Gaussian mixture at ``z``.

    The Poisson sum is truncated at ``k_max``; it must leave less than 1e-12
    of the Poisson mass uncovered.
    """
    if y < 0:
        raise ValueError("y must be non-negative")
    b = params.effective_b
    if b <= 0:
        raise ValueError(
            "pg_pdf needs b > 0; with b = 0 the model is a lattice, use the Poisson pmf"
        )
    lam = y / params.a
    if k_max is None:
        k_max = default_k_max(y, params.a)
    tail = stats.poisson.sf(k_max, lam) if lam > 0 else 0.0
    if tail > 1e-12:
        raise ValueError(f"k_max={k_max} leaves Poisson tail mass {tail:.3g} > 1e-12")

    z = np.asarray(z, dtype=np.float64)
    k = np.arange(k_max + 1, dtype=np.float64)
    if lam > 0:
        log_w = k * math.log(lam) - lam - special.gammaln(k + 1.0)
    else:
        log_w = np.where(k == 0, 0.0, -np.inf)
    keep = log_w > -745.0
    k, w = k[keep], np.exp(log_w[keep])
    diff = z[..., None] - params.a * k
    dens = np.exp(-0.5 * diff * diff / b) @ w
    return dens / math.sqrt(2.0 * math.pi * b)


def average_images(images: Sequence[Image]) -> Image:
    """Pixelwise arithmetic mean of a sequence of images."""
    images = list(images)
    if not images:
        raise ValueError("cannot average an empty sequence")
    first = images[0]
    for im in images[1:]:
        if im.shape != first.shape or im.peak != first.peak:
            raise ValueError(f"image {im!r} does not match {first!r}")
    acc = np.zeros(first.shape)
    for im in images:
        acc += im.data
    return first.with_data(acc / len(images))


def predicted_moments(y: float, params: NoiseParams, S: int = 1) -> tuple[float, float]:
    """Mean and variance of an ``S``-fold average at signal ``y``."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if y < 0:
        raise ValueError("y must be non-negative")
    return float(y), (params.a * y + params.effective_b) / S
