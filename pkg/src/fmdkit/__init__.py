"""Poisson-Gaussian denoising toolkit for fluorescence microscopy images."""

__version__ = "0.1.0"

from .image import Format, Image, ImageFormatError, Rect, crop, read_image, split_patches, write_image
from .noise import NoiseParams, average_images, pg_pdf, predicted_moments, sample_noisy
from .vst import (
    TransformedImage,
    gat_forward,
    inverse_algebraic,
    inverse_exact_unbiased,
    vst_denoise,
)
from .denoise import DenoiseResult, DenoiserKind, DenoiserSpec, NLMParams, denoise, residual
from .estimation import (
    NoiseFit,
    Translation,
    clipped_fraction,
    estimate_noise_params,
    estimate_translation,
)
from .metrics import QualityScore, psnr, score_multichannel, score_pair, ssim
from .dataset import (
    DatasetLayout,
    ImageSequence,
    PhantomSpec,
    build_dataset,
    circular_average,
    estimate_ground_truth,
    fmd_configurations,
    generate_synthetic_fov,
    make_phantom,
    manifest_counts,
)
from .bench import RAW, BenchmarkReport, Method, RunConfig, emit_report, parse_method, run_benchmark
