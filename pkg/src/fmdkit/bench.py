"""Benchmark harness: denoise test images of a dataset and score them.

For every configuration the test images come from one FOV (the 19th by
default).  At each noise level a fixed, seeded subset of its circular averages
is denoised by every method and scored against that FOV's ground truth.  The
report holds one row per (method, level) with mean PSNR, mean SSIM, mean
denoising time per image and the number of images, plus the same statistics
per configuration.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _rng
from .dataset import (
    ManifestEntry,
    check_manifest_closed,
    load_entry,
    manifest_hash,
    read_manifest,
    workers_from_env,
)
from .denoise import DenoiserSpec, denoise
from .estimation import estimate_noise_params
from .image import Image
from .metrics import score_pair
from .noise import NoiseParams
from .vst import vst_denoise

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "level", "psnr", "ssim", "time_s", "n")
TIME_NOTE = "time_s is the mean wall-clock denoising time per image in seconds"


@dataclass(frozen=True)
class Method:
    name: str
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec.identity)
    vst: bool = False

    def run(self, image: Image, params: NoiseParams) -> tuple[Image, float]:
        """Denoise ``image``; the time covers the transforms and the denoiser."""
        t0 = time.perf_counter()
        if self.vst:
            out = vst_denoise(image, params, self.denoiser)
        else:
            level = params.a * max(float(image.data.mean()), 0.0) + params.effective_b
            res = denoise(image.data, math.sqrt(max(level, 1e-300)), self.denoiser)
            out = image.with_data(res.image)
        return out, time.perf_counter() - t0


RAW = Method("Raw")


def parse_method(text: str, command: str | None = None, **nlm) -> Method:
    """Build a method from names such as ``raw``, ``nlm``, ``vst+nlm``, ``vst+box``."""
    key = text.strip().lower()
    vst = key.startswith("vst+")
    base = key[4:] if vst else key
    if base in ("raw", "identity"):
        spec = DenoiserSpec.identity()
        if not vst:
            return RAW
    elif base == "nlm":
        spec = DenoiserSpec.nonlocal_means(**nlm)
    elif base.startswith("box"):
        spec = DenoiserSpec.box(int(base[3:] or 1))
    elif base == "external":
        if not command:
            raise ValueError("external method needs a command template")
        spec = DenoiserSpec.external(command)
    else:
        raise ValueError(f"unknown method {text!r}")
    name = ("VST+" if vst else "") + spec.name
    return Method(name, spec, vst)


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path
    methods: tuple[Method, ...] = (RAW,)
    noise_levels: tuple[int, ...] = (1, 2, 4, 8, 16)
    test_fov: int = 19
    images_per_config: int | None = 4
    params_source: str = "manifest"
    configs: tuple[str, ...] | None = None
    seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "dataset_root", Path(self.dataset_root))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "noise_levels", tuple(int(s) for s in self.noise_levels))
        if not self.methods or not self.noise_levels:
            raise ValueError("a run needs at least one method and one noise level")
        if len({m.name for m in self.methods}) != len(self.methods):
            raise ValueError("method names must be unique")
        if self.params_source not in ("manifest", "estimate"):
            raise ValueError("params_source must be 'manifest' or 'estimate'")


@dataclass(frozen=True)
class ReportRow:
    method: str
    level: int
    psnr: float
    ssim: float
    time_s: float
    n: int
    config: str | None = None
    error: str | None = None


@dataclass
class BenchmarkReport:
    rows: list[ReportRow]
    config_rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, method: str, level: int) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.level == level:
                return r
        raise KeyError((method, level))

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def levels(self) -> list[int]:
        return sorted({r.level for r in self.rows})

    def psnr_by_config(self, method: str, level: int) -> dict[str, float]:
        return {
            r.config: r.psnr for r in self.config_rows if r.method == method and r.level == level
        }


def _select(entries: list[ManifestEntry], k: int | None, seed: int) -> list[ManifestEntry]:
    entries = sorted(entries, key=lambda e: e.index)
    if k is None or k >= len(entries):
        return entries
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(entries), size=k, replace=False))
    return [entries[i] for i in pick]


def _mean(values):
    return math.fsum(values) / len(values)


def run_benchmark(config: RunConfig) -> BenchmarkReport:
    root = config.dataset_root
    entries = read_manifest(root)
    extra, missing = check_manifest_closed(root)
    if extra or missing:
        raise RuntimeError(
            f"manifest is not closed: {len(extra)} unlisted files, {len(missing)} missing files"
        )
    tags = list(dict.fromkeys(e.config for e in entries))
    if config.configs is not None:
        unknown = set(config.configs) - set(tags)
        if unknown:
            raise ValueError(f"unknown configurations {sorted(unknown)}")
        tags = [t for t in tags if t in config.configs]

    gts: dict[str, Image] = {}
    tasks = []  # (config, level, entry)
    for ci, tag in enumerate(tags):
        fov = [e for e in entries if e.config == tag and e.fov == config.test_fov]
        gt_entry = next((e for e in fov if e.level == "gt"), None)
        if gt_entry is None:
            raise RuntimeError(f"missing ground truth for {tag} fov {config.test_fov}")
        gts[tag] = load_entry(root, gt_entry)
        for S in config.noise_levels:
            cands = [e for e in fov if e.level == str(S)]
            if not cands:
                raise RuntimeError(f"no images at level {S} for {tag} fov {config.test_fov}")
            pick_seed = _rng.derive_seed(config.seed, ci, S)
            for e in _select(cands, config.images_per_config, pick_seed):
                tasks.append((tag, S, e))

    def work(method: Method, tag: str, S: int, entry: ManifestEntry):
        gt = gts[tag]
        img = load_entry(root, entry, gt.peak)
        if config.params_source == "manifest":
            params = NoiseParams(entry.a, entry.b)
        else:
            params = estimate_noise_params(img).params
        out, elapsed = method.run(img, params)
        score = score_pair(gt, out)
        return score.psnr_db, score.ssim, elapsed

    jobs = [(m, t, S, e) for m in config.methods for (t, S, e) in tasks]
    n_workers = config.workers or workers_from_env()
    results = {}
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = {pool.submit(work, *job): job for job in jobs}
        for fut, (m, t, S, e) in futures.items():
            try:
                results[(m.name, t, S, e.path)] = fut.result()
            except Exception as exc:  # recorded per row, grid continues
                log.warning("%s failed on %s: %s", m.name, e.path, exc)
                results[(m.name, t, S, e.path)] = exc

    rows, config_rows = [], []
    for m in config.methods:
        for S in config.noise_levels:
            keys = [(m.name, t, S, e.path) for (t, lvl, e) in tasks if lvl == S]
            rows.append(_aggregate(m.name, S, [results[k] for k in keys]))
            for t in tags:
                sub = [results[k] for k in keys if k[1] == t]
                config_rows.append(_aggregate(m.name, S, sub, config=t))

    meta = {
        "manifest_sha256": manifest_hash(root),
        "toolkit_version": __version__,
        "seed": config.seed,
        "test_fov": config.test_fov,
        "params_source": config.params_source,
        "peak": next(iter(gts.values())).peak if gts else None,
        "note": TIME_NOTE,
    }
    return BenchmarkReport(rows, config_rows, meta)


def _aggregate(method, level, outcomes, config=None) -> ReportRow:
    errors = [o for o in outcomes if isinstance(o, Exception)]
    ok = [o for o in outcomes if not isinstance(o, Exception)]
    if errors or not ok:
        msg = str(errors[0]) if errors else "no images"
        return ReportRow(method, level, math.nan, math.nan, math.nan, 0, config, msg)
    return ReportRow(
        method,
        level,
        _mean([o[0] for o in ok]),
        _mean([o[1] for o in ok]),
        _mean([o[2] for o in ok]),
        len(ok),
        config,
    )


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(report: BenchmarkReport, path, format: str = "csv") -> None:
    """Write ``report`` as CSV (fixed header) or as a Markdown method x level grid."""
    if not report.rows:
        raise ValueError("refusing to write an empty report")
    fmt = format.lower()
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt in ("markdown", "md"):
        text = report_to_markdown(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    Path(path).write_text(text)


def report_to_csv(report: BenchmarkReport) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in report.rows:
        lines.append(",".join([r.method, str(r.level), _fmt(r.psnr), _fmt(r.ssim),
                               _fmt(r.time_s), str(r.n)]))
    return "\n".join(lines) + "\n"


def report_to_markdown(report: BenchmarkReport) -> str:
    levels = report.levels()
    head = "| Method | " + " | ".join(f"S = {s}" for s in levels) + " | Time (s) |"
    sep = "|---|" + "---|" * len(levels) + "---|"
    out = [head, sep]
    for m in report.methods():
        cells, times = [], []
        for s in levels:
            try:
                r = report.row(m, s)
            except KeyError:
                cells.append("n/a")
                continue
            if r.n == 0:
                cells.append("failed")
                continue
            cells.append(f"{r.psnr:.2f} / {r.ssim:.4f}")
            times.append(r.time_s)
        t = f"{_mean(times):.3g}" if times else "n/a"
        out.append(f"| {m} | " + " | ".join(cells) + f" | {t} |")
    out.append("")
    out.append(f"PSNR (dB) / SSIM per noise level; {TIME_NOTE}.")
    meta = report.metadata
    if meta:
        out.append("")
        out.append("; ".join(f"{k}: {v}" for k, v in meta.items() if k != "note"))
    return "\n".join(out) + "\n"


def read_report_csv(path) -> BenchmarkReport:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected report header {header}")
        rows = [
            ReportRow(m, int(lvl), float(p), float(s), float(t), int(n))
            for m, lvl, p, s, t, n in reader
        ]
    if not rows:
        raise ValueError("report has no rows")
    return BenchmarkReport(rows)
