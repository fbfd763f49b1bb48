"""Gaussian-noise denoisers behind a common interface.

``denoise(raster, sigma, spec)`` dispatches on ``spec.kind``:

* ``identity`` returns the input;
* ``box`` is a moving average with edge replication;
* ``nlm`` is non-local means (Buades, Coll & Morel 2005) with the noise
  compensated weight ``exp(-max(d2 - 2 sigma^2, 0) / (h sigma)^2)``, where ``d2``
  is the mean squared distance between patches;
* ``external`` pipes the raster, encoded as FMDF, through a child process.

Multi-channel rasters are filtered one channel at a time.
"""
from __future__ import annotations

import enum
import shlex
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .image import Image, ImageFormatError, decode_image, encode_image


class DenoiserKind(enum.Enum):
    IDENTITY = "identity"
    BOX = "box"
    NLM = "nlm"
    EXTERNAL = "external"


@dataclass(frozen=True)
class NLMParams:
    patch_radius: int = 3
    search_radius: int = 10
    h: float = 0.55

    def __post_init__(self):
        if self.patch_radius < 1 or self.search_radius < 1:
            raise ValueError("NLM radii must be >= 1")
        if not self.h > 0:
            raise ValueError("NLM h must be positive")


@dataclass(frozen=True)
class DenoiserSpec:
    kind: DenoiserKind = DenoiserKind.IDENTITY
    nlm: NLMParams = field(default_factory=NLMParams)
    box_radius: int = 1
    command: str | None = None
    timeout: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DenoiserKind(self.kind))
        if self.box_radius < 1:
            raise ValueError("box radius must be >= 1")
        if self.kind is DenoiserKind.EXTERNAL and not self.command:
            raise ValueError("external denoiser needs a command template")

    @classmethod
    def identity(cls):
        return cls(DenoiserKind.IDENTITY)

    @classmethod
    def box(cls, radius: int = 1):
        return cls(DenoiserKind.BOX, box_radius=radius)

    @classmethod
    def nonlocal_means(cls, patch_radius: int = 3, search_radius: int = 10, h: float = 0.55):
        return cls(DenoiserKind.NLM, nlm=NLMParams(patch_radius, search_radius, h))

    @classmethod
    def external(cls, command: str, timeout: float | None = None):
        return cls(DenoiserKind.EXTERNAL, command=command, timeout=timeout)

    @property
    def name(self) -> str:
        if self.kind is DenoiserKind.NLM:
            return "NLM"
        if self.kind is DenoiserKind.BOX:
            return f"Box{self.box_radius}"
        if self.kind is DenoiserKind.EXTERNAL:
            return shlex.split(self.command)[0].rsplit("/", 1)[-1]
        return "Identity"


@dataclass(frozen=True)
class DenoiseResult:
    image: np.ndarray
    elapsed: float


class ExternalDenoiserError(RuntimeError):
    pass


def _as_raster(x) -> np.ndarray:
    data = getattr(x, "data", x)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D raster, got shape {arr.shape}")
    return arr


def _per_channel(fn, arr, *args):
    if arr.ndim == 2:
        return fn(arr, *args)
    return np.stack([fn(arr[:, :, k], *args) for k in range(arr.shape[2])], axis=2)


def box_filter(x: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.uniform_filter(x, size=2 * radius + 1, mode="nearest")


def _patch_mean(x: np.ndarray, r: int) -> np.ndarray:
    # 'valid' box mean from shifted slices; unlike a summed-area table the
    # rounding does not depend on position, so filtering commutes with shifts
    n = 2 * r + 1
    rows = x.shape[0] - n + 1
    cols = x.shape[1] - n + 1
    acc = x[0:rows].copy()
    for i in range(1, n):
        acc += x[i : i + rows]
    out = acc[:, 0:cols].copy()
    for j in range(1, n):
        out += acc[:, j : j + cols]
    return out / (n * n)


def nlm_filter(x: np.ndarray, sigma: float, params: NLMParams) -> np.ndarray:
    """Non-local means of a single-channel raster, mirror-padded at edges."""
    p, s = params.patch_radius, params.search_radius
    H, W = x.shape
    pad = p + s
    xp = np.pad(x, pad, mode="symmetric")
    # region holding every patch centred on an output pixel
    ref = xp[s : s + H + 2 * p, s : s + W + 2 * p]
    denom = (params.h * sigma) ** 2
    offset = 2.0 * sigma * sigma

    num = np.zeros((H, W))
    wsum = np.zeros((H, W))
    for dy in range(-s, s + 1):
        for dx in range(-s, s + 1):
            other = xp[s + dy : s + dy + H + 2 * p, s + dx : s + dx + W + 2 * p]
            if dy == 0 and dx == 0:
                w = np.ones((H, W))
            else:
                d2 = _patch_mean((ref - other) ** 2, p)
                w = np.exp(-np.maximum(d2 - offset, 0.0) / denom)
            num += w * other[p : p + H, p : p + W]
            wsum += w
    return num / wsum


def _run_external(x: np.ndarray, sigma: float, spec: DenoiserSpec) -> np.ndarray:
    argv = [tok.replace("{sigma}", repr(float(sigma))) for tok in shlex.split(spec.command)]
    payload = encode_image(Image(x))
    try:
        proc = subprocess.run(
            argv, input=payload, capture_output=True, timeout=spec.timeout, check=False
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ExternalDenoiserError(f"external denoiser failed to run: {exc}") from exc
    if proc.returncode != 0:
        err = proc.stderr.decode(errors="replace").strip()
        raise ExternalDenoiserError(f"external denoiser exited {proc.returncode}: {err}")
    try:
        out = decode_image(proc.stdout, peak=1.0)
    except (ImageFormatError, ValueError) as exc:
        raise ExternalDenoiserError(f"malformed output raster: {exc}") from exc
    expect = x.shape if x.ndim == 3 else x.shape + (1,)
    if out.shape != expect:
        raise ExternalDenoiserError(
            f"malformed output raster: shape {out.shape} differs from input {expect}"
        )
    return np.array(out.data).reshape(x.shape)


def denoise(raster, sigma: float, spec: DenoiserSpec) -> DenoiseResult:
    """Denoise ``raster`` (array, Image or TransformedImage) at noise level ``sigma``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = _as_raster(raster)
    t0 = time.perf_counter()
    if spec.kind is DenoiserKind.IDENTITY:
        out = x.copy()
    elif spec.kind is DenoiserKind.BOX:
        out = _per_channel(box_filter, x, spec.box_radius)
    elif spec.kind is DenoiserKind.NLM:
        out = _per_channel(nlm_filter, x, sigma, spec.nlm)
    else:
        out = _run_external(x, sigma, spec)
    elapsed = time.perf_counter() - t0
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{spec.name} produced non-finite samples")
    return DenoiseResult(out, elapsed)


def residual(input, output) -> np.ndarray:
    """Method noise: ``input - output``."""
    x, y = _as_raster(input), np.asarray(getattr(output, "data", output), dtype=np.float64)
    if y.ndim == 0:
        y = np.broadcast_to(y, x.shape)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x - y
