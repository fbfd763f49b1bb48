"""Noise-parameter estimation, translation estimation and clipping statistics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .image import Image
from .noise import NoiseParams

log = logging.getLogger(__name__)

CONTEXT_SIZE = 8
N_SEGMENTS = 32
MIN_SEGMENT_SIZE = 16
CLIP_FRACTION_OF_PEAK = 0.999
CLIP_SIGMAS = 4.0
# E[r^2 | |r| <= 4 sd] / sd^2 for Gaussian r; see scripts/calibrate_clipping.py
CLIP_VARIANCE_FACTOR = 0.99892
# The cross-power spectrum is divided by |cross| ** WHITENING_EXPONENT (1 is
# classical phase correlation; 0.5 keeps some weight on strong frequencies,
# which is much less noise sensitive on smooth microscopy images) and then
# low-passed by a Gaussian of CORRELATION_SMOOTHING pixels.
WHITENING_EXPONENT = 0.5
CORRELATION_SMOOTHING = 2.0
REFINE_ITERATIONS = 6
A_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class NoiseFit:
    """Raw line fit ``variance = a * mean + b``.

    ``a`` and ``b`` are kept exactly as fitted, so ``b`` (and, on nearly pure
    Gaussian data, ``a``) may be negative.  :attr:`params` gives a usable
    :class:`NoiseParams`, with ``a`` floored at ``A_FLOOR * peak``.
    """

    a: float
    b: float
    n_segments: int
    residual: float
    peak: float = 1.0
    means: np.ndarray | None = None
    variances: np.ndarray | None = None

    @property
    def params(self) -> NoiseParams:
        return NoiseParams(max(self.a, A_FLOOR * self.peak), self.b)


@dataclass(frozen=True)
class Translation:
    dx: float
    dy: float
    confidence: float


def _block_statistics(z: np.ndarray):
    """Per 2x2 block: mean, diagonal Haar detail, and a median of the
    surrounding 8x8 window with the block itself left out."""
    H, W = (z.shape[0] // 2) * 2, (z.shape[1] // 2) * 2
    z = z[:H, :W]
    z00, z01 = z[0::2, 0::2], z[0::2, 1::2]
    z10, z11 = z[1::2, 0::2], z[1::2, 1::2]
    mean = 0.25 * (z00 + z01 + z10 + z11)
    detail = 0.5 * (z00 - z01 - z10 + z11)

    half = CONTEXT_SIZE // 2
    zp = np.pad(z, half - 1, mode="reflect")
    win = np.lib.stride_tricks.sliding_window_view(zp, (CONTEXT_SIZE, CONTEXT_SIZE))[::2, ::2]
    hole = np.ones((CONTEXT_SIZE, CONTEXT_SIZE), dtype=bool)
    hole[half - 1 : half + 1, half - 1 : half + 1] = False
    context = np.median(win[:, :, hole], axis=-1)
    return mean, detail, context


def _clipped_variance(r: np.ndarray, k: float = CLIP_SIGMAS) -> float:
    keep = np.ones(r.shape, dtype=bool)
    for _ in range(10):
        sd = np.sqrt(np.mean(r[keep] ** 2))
        nxt = np.abs(r) <= k * sd
        if sd == 0 or np.array_equal(nxt, keep):
            break
        keep = nxt
    return float(np.mean(r[keep] ** 2)) / CLIP_VARIANCE_FACTOR


def estimate_noise_params(image: Image, n_segments: int = N_SEGMENTS) -> NoiseFit:
    """Fit ``Var(z) = a*E(z) + b`` from a single image.

    The image is cut into 2x2 blocks.  The diagonal Haar detail
    ``(z00 - z01 - z10 + z11) / 2`` of a block cancels any locally linear
    signal and has variance ``a * mean + b`` (conditionally on the block sum,
    for Poisson data).  Blocks are ranked by the median of their surrounding
    window, which does not contain the block itself, and split into
    ``n_segments`` equal-population level sets.  Each set gives one point
    (mean intensity, sigma-clipped mean squared detail); a Theil-Sen line
    through the points yields ``a`` (slope) and ``b`` (intercept).  Blocks
    touching a sample at or above ``0.999 * peak`` are skipped as saturated.

    Only the first channel of colour images is used.  ``b`` is returned as
    estimated and may be negative.
    """
    z = image.data[:, :, 0]
    if min(z.shape) < 64:
        raise ValueError("noise estimation needs at least 64x64 pixels")
    if np.ptp(z) == 0:
        raise ValueError("cannot estimate noise on a constant image")

    mean, detail, context = _block_statistics(z)
    H, W = mean.shape[0] * 2, mean.shape[1] * 2
    sat = (z[:H, :W] >= CLIP_FRACTION_OF_PEAK * image.peak).reshape(H // 2, 2, W // 2, 2)
    valid = ~sat.any(axis=(1, 3))

    idx = np.flatnonzero(valid.ravel())
    # stable sort: ties resolved by block index
    order = idx[np.argsort(context.ravel()[idx], kind="stable")]
    means, variances = [], []
    for members in np.array_split(order, n_segments):
        if members.size < MIN_SEGMENT_SIZE:
            continue
        var = _clipped_variance(detail.ravel()[members])
        if var <= 0:
            continue
        means.append(float(np.mean(mean.ravel()[members])))
        variances.append(var)
    means = np.array(means)
    variances = np.array(variances)
    if means.size < 2 or np.ptp(means) == 0:
        raise ValueError("fewer than 2 non-degenerate level sets")

    slope, intercept, _, _ = stats.theilslopes(variances, means)
    rms = float(np.sqrt(np.mean((variances - (slope * means + intercept)) ** 2)))
    if slope <= 0:
        log.warning("estimated slope %.3g is not positive; no Poisson component", slope)
    return NoiseFit(
        float(slope), float(intercept), int(means.size), rms, image.peak, means, variances
    )


# ---------------------------------------------------------------------------


def _parabolic_peak(lo: float, mid: float, hi: float) -> float:
    den = lo - 2.0 * mid + hi
    if den >= 0:
        return 0.0
    return 0.5 * (lo - hi) / den


def _refine_shift(F_ref: np.ndarray, mov: np.ndarray, dx: float, dy: float):
    """Gauss-Newton least squares for the circular shift of ``F_ref`` onto ``mov``.

    Returns the start point unchanged if the fit does not lower the residual
    or wanders more than a pixel away.
    """
    H, W = mov.shape
    fy = np.fft.fftfreq(H)[:, None]
    fx = np.fft.fftfreq(W)[None, :]

    def model(d):
        shifted = F_ref * np.exp(-2j * math.pi * (fx * d[0] + fy * d[1]))
        return shifted, np.real(np.fft.ifft2(shifted))

    start = np.array([dx, dy])
    d = start.copy()
    shifted, m = model(d)
    r0 = float(np.sum((mov - m) ** 2))
    for _ in range(REFINE_ITERATIONS):
        gx = np.real(np.fft.ifft2(shifted * (-2j * math.pi * fx))).ravel()
        gy = np.real(np.fft.ifft2(shifted * (-2j * math.pi * fy))).ravel()
        r = (mov - m).ravel()
        JtJ = np.array([[gx @ gx, gx @ gy], [gx @ gy, gy @ gy]])
        if np.linalg.cond(JtJ) > 1e12:
            return dx, dy
        step = np.linalg.solve(JtJ, np.array([gx @ r, gy @ r]))
        d = d + step
        shifted, m = model(d)
        if np.max(np.abs(step)) < 1e-6:
            break
    if np.max(np.abs(d - start)) > 1.0 or float(np.sum((mov - m) ** 2)) > r0:
        return dx, dy
    return float(d[0]), float(d[1])


def estimate_translation(reference: Image, moving: Image) -> Translation:
    """Shift ``(dx, dy)`` such that ``moving(x, y) ~ reference(x - dx, y - dy)``.

    Phase correlation on channel 0.  The (partially) whitened cross-power
    spectrum is low-passed by a Gaussian so that the correlation peak is
    itself close to Gaussian; a parabola through the log of the 3x3
    neighbourhood of the integer peak gives a sub-pixel start, which a few
    Gauss-Newton steps on the squared difference between ``moving`` and the
    Fourier-shifted ``reference`` then polish.  Shifts are reported in
    ``(-N/2, N/2]``.  ``confidence`` is the peak-to-sidelobe ratio.
    """
    if reference.shape[:2] != moving.shape[:2]:
        raise ValueError(f"dimension mismatch: {reference.shape} vs {moving.shape}")
    ref = reference.data[:, :, 0]
    mov = moving.data[:, :, 0]
    ref = ref - ref.mean()
    mov = mov - mov.mean()
    if not np.any(ref) or not np.any(mov):
        raise ValueError("zero-energy image")

    H, W = ref.shape
    F_ref = np.fft.fft2(ref)
    cross = np.fft.fft2(mov) * np.conj(F_ref)
    mag = np.abs(cross)
    cross = np.where(mag > 0, cross / np.where(mag > 0, mag, 1.0) ** WHITENING_EXPONENT, 0.0)
    fy = np.fft.fftfreq(H)[:, None]
    fx = np.fft.fftfreq(W)[None, :]
    cross *= np.exp(-2.0 * (math.pi * CORRELATION_SMOOTHING) ** 2 * (fx * fx + fy * fy))
    surface = np.real(np.fft.ifft2(cross))

    iy, ix = np.unravel_index(int(np.argmax(surface)), surface.shape)
    peak = surface[iy, ix]
    if not peak > 0:
        raise ValueError("correlation surface has no positive peak")

    def at(j, i):
        return math.log(max(surface[(iy + j) % H, (ix + i) % W], 1e-12 * peak))

    sx = _parabolic_peak(at(0, -1), at(0, 0), at(0, 1)) if W > 2 else 0.0
    sy = _parabolic_peak(at(-1, 0), at(0, 0), at(1, 0)) if H > 2 else 0.0
    dx, dy = _refine_shift(F_ref, mov, ix + sx, iy + sy)
    if dx > W / 2:
        dx -= W
    if dy > H / 2:
        dy -= H

    mask = np.ones_like(surface, dtype=bool)
    rows = (iy + np.arange(-5, 6)) % H
    cols = (ix + np.arange(-5, 6)) % W
    mask[np.ix_(rows, cols)] = False
    side = surface[mask]
    if side.size > 1 and side.std() > 0:
        psr = float((peak - side.mean()) / side.std())
    else:
        psr = 0.0
    return Translation(float(dx), float(dy), max(psr, 0.0))


def clipped_fraction(image: Image) -> float:
    """Fraction of samples at or above the image peak."""
    return float(np.count_nonzero(image.data >= image.peak)) / image.data.size
