"""Synthetic fluorescence-microscopy datasets.

A dataset is a set of imaging configurations, each with several fields of view
(FOVs).  Every FOV holds ``R`` raw noise realizations of one phantom, their
circular averages at each requested noise level ``S``, and a ground truth
obtained by averaging all realizations.  On disk::

    root/<modality>_<sample>/fov<NN>/raw/<RR>.fmdf
    root/<modality>_<sample>/fov<NN>/avg<S>/<RR>.fmdf
    root/<modality>_<sample>/fov<NN>/gt.fmdf
    root/manifest.csv

The manifest has the columns ``config,fov,level,index,path,a,b,seed``.
``level`` is ``raw``, ``gt`` or the integer ``S``; ``a`` and ``b`` are the
noise parameters of that particular file (``a/S`` and ``b/S`` for an
``S``-fold average, see :meth:`NoiseParams.averaged`).
"""
from __future__ import annotations

import csv
import hashlib
import logging
import os
import shutil
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import _rng
from .image import Format, Image, read_image, write_image
from .noise import NoiseParams, average_images, sample_noisy

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ("config", "fov", "level", "index", "path", "a", "b", "seed")
INCOMPLETE_MARKER = ".incomplete"


@dataclass(frozen=True)
class ImageSequence:
    fov_id: str
    realizations: tuple[Image, ...]
    params: NoiseParams | None = None

    def __post_init__(self):
        reals = tuple(self.realizations)
        if not reals:
            raise ValueError("an image sequence needs at least one realization")
        first = reals[0]
        for im in reals[1:]:
            if im.shape != first.shape or im.peak != first.peak:
                raise ValueError(f"realization {im!r} does not match {first!r}")
        object.__setattr__(self, "realizations", reals)

    def __len__(self):
        return len(self.realizations)

    def __getitem__(self, j):
        return self.realizations[j]

    def __iter__(self):
        return iter(self.realizations)


# ---------------------------------------------------------------------------
# phantoms


@dataclass(frozen=True)
class PhantomSpec:
    """Procedural test object.

    ``kind`` is ``cells`` (smooth blobs with bright nuclei), ``filaments``
    (thin blurred curves), ``edges`` (piecewise-constant regions) or ``mixed``.
    Intensities run from ``background`` to about ``background + signal``.
    """

    kind: str = "mixed"
    size: int = 256
    background: float = 0.05
    signal: float = 0.5
    peak: float = 1.0
    n_objects: int = 12


def _blobs(rng, H, W, n):
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    out = np.zeros((H, W))
    for _ in range(n):
        cy, cx = rng.uniform(0, H), rng.uniform(0, W)
        sy, sx = rng.uniform(0.04, 0.12) * H, rng.uniform(0.04, 0.12) * W
        th = rng.uniform(0, np.pi)
        c, s = np.cos(th), np.sin(th)
        u = (c * (xx - cx) + s * (yy - cy)) / sx
        v = (-s * (xx - cx) + c * (yy - cy)) / sy
        body = np.exp(-0.5 * (u * u + v * v))
        nucleus = np.exp(-0.5 * (u * u + v * v) / 0.15)
        out += rng.uniform(0.4, 1.0) * body + 0.6 * nucleus
    return out


def _filaments(rng, H, W, n):
    canvas = np.zeros((H, W))
    for _ in range(n):
        t = np.linspace(0, 1, 4 * max(H, W))
        p0 = rng.uniform(0, 1, 2) * (H, W)
        d = rng.normal(size=2)
        d /= np.linalg.norm(d)
        bend = rng.normal(scale=0.25 * min(H, W))
        normal = np.array([-d[1], d[0]])
        length = rng.uniform(0.4, 1.0) * max(H, W)
        pts = p0 + np.outer(t * length, d) + np.outer(bend * np.sin(np.pi * t), normal)
        r = np.clip(np.round(pts[:, 0]).astype(int), 0, H - 1)
        c = np.clip(np.round(pts[:, 1]).astype(int), 0, W - 1)
        canvas[r, c] = rng.uniform(0.5, 1.0)
    out = ndimage.gaussian_filter(canvas, 1.2)
    return out / max(out.max(), 1e-12)


def _edges(rng, H, W, n):
    yy, xx = np.mgrid[0:H, 0:W]
    out = np.zeros((H, W))
    for _ in range(max(n // 3, 1)):
        y0, x0 = rng.integers(0, H), rng.integers(0, W)
        h, w = rng.integers(H // 8, H // 3), rng.integers(W // 8, W // 3)
        out[(yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)] += rng.uniform(0.3, 0.8)
    return ndimage.gaussian_filter(out, 0.7)


def make_phantom(spec: PhantomSpec = PhantomSpec(), seed: int = 0) -> Image:
    """Deterministic noise-free phantom in detector units."""
    rng = np.random.default_rng(_rng.derive_seed(seed, 0x50))
    H = W = spec.size
    parts = {
        "cells": lambda: _blobs(rng, H, W, spec.n_objects),
        "filaments": lambda: _filaments(rng, H, W, spec.n_objects),
        "edges": lambda: _edges(rng, H, W, spec.n_objects),
    }
    if spec.kind == "mixed":
        raw = 0.6 * parts["cells"]() + 0.4 * parts["filaments"]() + 0.3 * parts["edges"]()
    elif spec.kind in parts:
        raw = parts[spec.kind]()
    else:
        raise ValueError(f"unknown phantom kind {spec.kind!r}")
    raw = raw / max(raw.max(), 1e-12)
    return Image(spec.background + spec.signal * raw, spec.peak)


# ---------------------------------------------------------------------------
# sequences


def generate_synthetic_fov(
    phantom: Image, params: NoiseParams, R: int, seed: int, fov_id: str = "fov"
) -> ImageSequence:
    """``R`` independent realizations; realization ``j`` uses ``derive_seed(seed, j)``."""
    if R < 1:
        raise ValueError("R must be >= 1")
    reals = [sample_noisy(phantom, params, _rng.derive_seed(seed, j)) for j in range(R)]
    return ImageSequence(fov_id, tuple(reals), params)


def circular_average(seq: ImageSequence, S: int) -> ImageSequence:
    """Average each realization with its ``S - 1`` circular successors."""
    R = len(seq)
    if not 1 <= S <= R:
        raise ValueError(f"S must be in [1, {R}], got {S}")
    params = seq.params.averaged(S) if seq.params is not None else None
    if S == 1:
        return ImageSequence(seq.fov_id, seq.realizations, params)
    stack = np.stack([im.data for im in seq])
    out = []
    for j in range(R):
        idx = [(j + k) % R for k in range(S)]
        acc = np.zeros(stack.shape[1:])
        for i in idx:
            acc += stack[i]
        out.append(seq[0].with_data(acc / S))
    return ImageSequence(seq.fov_id, tuple(out), params)


def estimate_ground_truth(seq: ImageSequence, expected: int | None = None) -> Image:
    """Pixelwise mean of every realization in ``seq``."""
    if expected is not None and len(seq) < expected:
        warnings.warn(
            f"ground truth of {seq.fov_id} averages {len(seq)} images, expected {expected}",
            stacklevel=2,
        )
    return average_images(seq.realizations)


# ---------------------------------------------------------------------------
# on-disk datasets


@dataclass(frozen=True)
class Configuration:
    modality: str
    sample: str
    params: NoiseParams
    phantom: PhantomSpec = PhantomSpec()

    @property
    def tag(self) -> str:
        return f"{self.modality}_{self.sample}"


# Noise parameters estimated on the real FMD configurations (confocal,
# two-photon and wide-field microscopes).
FMD_CONFIGURATIONS = (
    ("CF", "BPAE-Nuclei", 1.39e-2, -2.16e-4),
    ("CF", "BPAE-Factin", 1.37e-2, -1.85e-4),
    ("CF", "BPAE-Mito", 1.21e-2, -1.54e-4),
    ("CF", "Zebrafish", 9.43e-2, -1.60e-3),
    ("CF", "MouseBrain", 1.94e-2, -2.68e-4),
    ("TP", "BPAE-Nuclei", 3.31e-2, -8.39e-4),
    ("TP", "BPAE-Factin", 2.55e-2, -5.43e-4),
    ("TP", "BPAE-Mito", 2.10e-2, -4.57e-4),
    ("TP", "MouseBrain", 3.38e-2, -9.16e-4),
    ("WF", "BPAE-Nuclei", 2.29e-4, 2.35e-4),
    ("WF", "BPAE-Factin", 1.94e-3, 1.91e-4),
    ("WF", "BPAE-Mito", 3.55e-4, 1.95e-4),
)


def fmd_configurations(phantom: PhantomSpec = PhantomSpec()) -> list[Configuration]:
    kinds = {"Nuclei": "cells", "Factin": "filaments", "Mito": "mixed"}
    out = []
    for modality, sample, a, b in FMD_CONFIGURATIONS:
        kind = next((v for k, v in kinds.items() if k in sample), "mixed")
        spec = PhantomSpec(kind, phantom.size, phantom.background, phantom.signal, phantom.peak)
        out.append(Configuration(modality, sample, NoiseParams(a, b), spec))
    return out


@dataclass(frozen=True)
class DatasetLayout:
    root: Path
    configurations: tuple[Configuration, ...]
    fovs_per_config: int = 20
    realizations: int = 50
    noise_levels: tuple[int, ...] = (1, 2, 4, 8, 16)
    gt_average_count: int = 50

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "configurations", tuple(self.configurations))
        object.__setattr__(self, "noise_levels", tuple(int(s) for s in self.noise_levels))
        levels = self.noise_levels
        if not self.configurations:
            raise ValueError("layout needs at least one configuration")
        if self.fovs_per_config < 1 or self.realizations < 1:
            raise ValueError("fovs_per_config and realizations must be >= 1")
        if list(levels) != sorted(set(levels)) or not levels:
            raise ValueError("noise levels must be non-empty, unique and ascending")
        if levels[0] < 1 or levels[-1] > self.realizations:
            raise ValueError(f"noise levels must lie in [1, {self.realizations}]")
        if not 1 <= self.gt_average_count <= self.realizations:
            raise ValueError("gt_average_count must lie in [1, R]")


@dataclass(frozen=True)
class ManifestEntry:
    config: str
    fov: int
    level: str
    index: int
    path: str
    a: float
    b: float
    seed: int

    def row(self):
        return [self.config, self.fov, self.level, self.index, self.path,
                repr(self.a), repr(self.b), self.seed]


def fov_dir(config: str, fov: int) -> str:
    return f"{config}/fov{fov:02d}"


def fov_seed(seed: int, config_index: int, fov: int) -> int:
    return _rng.derive_seed(seed, config_index, fov)


def plan_manifest(layout: DatasetLayout, seed: int) -> list[ManifestEntry]:
    """Every file ``build_dataset`` writes for ``layout``, without writing."""
    entries = []
    R = layout.realizations
    for ci, cfg in enumerate(layout.configurations):
        for fov in range(1, layout.fovs_per_config + 1):
            base = fov_dir(cfg.tag, fov)
            fs = fov_seed(seed, ci, fov)
            p = cfg.params
            for j in range(R):
                entries.append(ManifestEntry(cfg.tag, fov, "raw", j, f"{base}/raw/{j:02d}.fmdf",
                                             p.a, p.b, _rng.derive_seed(fs, j)))
            for S in layout.noise_levels:
                q = p.averaged(S)
                for j in range(R):
                    entries.append(ManifestEntry(cfg.tag, fov, str(S), j,
                                                 f"{base}/avg{S}/{j:02d}.fmdf", q.a, q.b, fs))
            g = p.averaged(layout.gt_average_count)
            entries.append(ManifestEntry(cfg.tag, fov, "gt", 0, f"{base}/gt.fmdf", g.a, g.b, fs))
    return entries


def _build_fov(layout: DatasetLayout, ci: int, fov: int, seed: int):
    cfg = layout.configurations[ci]
    fs = fov_seed(seed, ci, fov)
    phantom = make_phantom(cfg.phantom, _rng.derive_seed(seed, ci, fov, 0x7068))
    seq = generate_synthetic_fov(phantom, cfg.params, layout.realizations, fs, f"{cfg.tag}/{fov}")
    base = layout.root / fov_dir(cfg.tag, fov)
    (base / "raw").mkdir(parents=True, exist_ok=True)
    for j, im in enumerate(seq):
        write_image(im, base / "raw" / f"{j:02d}.fmdf", Format.FMDF)
    for S in layout.noise_levels:
        d = base / f"avg{S}"
        d.mkdir(exist_ok=True)
        for j, im in enumerate(circular_average(seq, S)):
            write_image(im, d / f"{j:02d}.fmdf", Format.FMDF)
    gt_seq = ImageSequence(seq.fov_id, seq.realizations[: layout.gt_average_count], seq.params)
    gt = estimate_ground_truth(gt_seq, layout.gt_average_count)
    write_image(gt, base / "gt.fmdf", Format.FMDF)


def workers_from_env(default: int | None = None) -> int:
    value = os.environ.get("FMD_WORKERS")
    if value:
        return max(1, int(value))
    return default or min(8, os.cpu_count() or 1)


def build_dataset(layout: DatasetLayout, seed: int = 0, workers: int | None = None) -> list[ManifestEntry]:
    """Write the synthetic dataset and its manifest; returns the manifest.

    A ``.incomplete`` marker sits in the root until every file and the
    manifest have been written.
    """
    root = layout.root
    root.mkdir(parents=True, exist_ok=True)
    marker = root / INCOMPLETE_MARKER
    marker.touch()
    for cfg in layout.configurations:
        if (root / cfg.tag).exists():
            shutil.rmtree(root / cfg.tag)
    jobs = [(ci, fov) for ci in range(len(layout.configurations))
            for fov in range(1, layout.fovs_per_config + 1)]
    n = workers or workers_from_env()
    with ThreadPoolExecutor(max_workers=n) as pool:
        for fut in [pool.submit(_build_fov, layout, ci, fov, seed) for ci, fov in jobs]:
            fut.result()
    entries = plan_manifest(layout, seed)
    write_manifest(entries, root / MANIFEST_NAME)
    marker.unlink()
    log.info("built %d files under %s", len(entries), root)
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            w.writerow(e.row())


def read_manifest(root: str | os.PathLike) -> list[ManifestEntry]:
    root = Path(root)
    if (root / INCOMPLETE_MARKER).exists():
        raise RuntimeError(f"dataset at {root} is incomplete")
    with open(root / MANIFEST_NAME, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise ValueError(f"unexpected manifest header {reader.fieldnames}")
        return [
            ManifestEntry(r["config"], int(r["fov"]), r["level"], int(r["index"]), r["path"],
                          float(r["a"]), float(r["b"]), int(r["seed"]))
            for r in reader
        ]


def manifest_hash(root: str | os.PathLike) -> str:
    with open(Path(root) / MANIFEST_NAME, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def check_manifest_closed(root: str | os.PathLike) -> tuple[set[str], set[str]]:
    """Files on disk missing from the manifest, and manifest paths missing on disk."""
    root = Path(root)
    listed = {e.path for e in read_manifest(root)}
    present = {
        p.relative_to(root).as_posix()
        for p in root.rglob("*.fmdf")
    }
    return present - listed, listed - present


def load_entry(root: str | os.PathLike, entry: ManifestEntry, peak: float | None = None) -> Image:
    return read_image(Path(root) / entry.path, peak)


def manifest_counts(entries: Sequence[ManifestEntry]) -> dict[str, int]:
    raw = sum(e.level == "raw" for e in entries)
    gt = sum(e.level == "gt" for e in entries)
    return {"raw": raw, "noisy": len(entries) - raw - gt, "gt": gt}
