"""Command-line interface.

Exit status: 0 on success, 1 when an operation fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    RAW,
    RunConfig,
    emit_report,
    parse_method,
    read_report_csv,
    report_to_csv,
    report_to_markdown,
    run_benchmark,
)
from .dataset import (
    DatasetLayout,
    ImageSequence,
    PhantomSpec,
    build_dataset,
    circular_average,
    fmd_configurations,
    manifest_counts,
)
from .estimation import clipped_fraction, estimate_noise_params, estimate_translation
from .image import Format, Image, ImageFormatError, read_image, write_image
from .metrics import score_pair
from .noise import NoiseParams, average_images

log = logging.getLogger("fmdkit")


def _levels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def _sequence_files(directory: Path) -> list[Path]:
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".fmdf", ".pgm", ".ppm"))
    if not files:
        raise ValueError(f"no images in {directory}")
    return files


def _read_sequence(directory: Path, peak: float | None) -> list[Image]:
    images = [read_image(f, peak) for f in _sequence_files(directory)]
    # FMDF peaks are inferred per file; put the whole sequence on one scale
    top = max(im.peak for im in images)
    return [im if im.peak == top else Image(im.data, top) for im in images]


def _nlm_kwargs(args) -> dict:
    return {"patch_radius": args.patch_radius, "search_radius": args.search_radius, "h": args.h}


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    configs = fmd_configurations(PhantomSpec(size=args.size))
    if args.configs:
        configs = configs[: args.configs]
    layout = DatasetLayout(
        args.root, configs, args.fovs, args.realizations, args.levels, args.gt_count
    )
    entries = build_dataset(layout, args.seed, args.workers)
    c = manifest_counts(entries)
    print(f"raw={c['raw']} noisy={c['noisy']} gt={c['gt']} root={layout.root}")
    return 0


def cmd_estimate(args) -> int:
    fit = estimate_noise_params(read_image(args.input, args.peak))
    print(f"a={fit.a:.6g} b={fit.b:.6g} segments={fit.n_segments} residual={fit.residual:.6g}")
    return 0


def cmd_denoise(args) -> int:
    img = read_image(args.input, args.peak)
    if args.a is None:
        params = estimate_noise_params(img).params
        log.info("estimated a=%g b=%g", params.a, params.b)
    else:
        params = NoiseParams(args.a, args.b)
    base = f"box{args.box_radius}" if args.method == "box" else args.method
    method = parse_method(("vst+" if args.vst else "") + base, args.command, **_nlm_kwargs(args))
    out, elapsed = method.run(img, params)
    write_image(out, args.output, Format(args.format))
    print(f"method={method.name} time_s={elapsed:.4g} output={args.output}")
    return 0


def cmd_average(args) -> int:
    seq = ImageSequence(args.dir, tuple(_read_sequence(Path(args.dir), args.peak)))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for j, im in enumerate(circular_average(seq, args.S)):
        write_image(im, out / f"{j:02d}.fmdf", Format.FMDF)
    if args.gt:
        write_image(average_images(seq.realizations), args.gt, Format.FMDF)
    print(f"wrote {len(seq)} averages (S={args.S}) to {out}")
    return 0


def cmd_register_check(args) -> int:
    files = _sequence_files(Path(args.dir))
    images = _read_sequence(Path(args.dir), args.peak)
    reference = images[0].with_data(np.mean([im.data for im in images], axis=0))
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    worst = 0.0
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "file", "dx", "dy", "abs_dx", "abs_dy", "confidence"])
        for j, (f, im) in enumerate(zip(files, images)):
            t = estimate_translation(reference, im)
            worst = max(worst, abs(t.dx), abs(t.dy))
            w.writerow([j, f.name, f"{t.dx:.6f}", f"{t.dy:.6f}",
                        f"{abs(t.dx):.6f}", f"{abs(t.dy):.6f}", f"{t.confidence:.3f}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    verdict = "aligned" if worst < 0.5 else "MISALIGNED"
    print(f"max |shift| = {worst:.4f} px ({verdict}, half-pixel threshold)", file=sys.stderr)
    return 0


def cmd_clipstats(args) -> int:
    fractions = []
    for f in args.inputs:
        frac = clipped_fraction(read_image(f, args.peak))
        fractions.append(frac)
        print(f"{f}\t{frac:.6%}")
    print(f"mean\t{np.mean(fractions):.6%}")
    return 0


def cmd_metrics(args) -> int:
    ref = read_image(args.reference, args.peak)
    test = read_image(args.test, ref.peak)
    s = score_pair(ref, test)
    extra = f" excluded_channels={list(s.excluded_channels)}" if s.excluded_channels else ""
    print(f"psnr={s.psnr_db:.4f} ssim={s.ssim:.6f} peak={ref.peak:g}{extra}")
    return 0


def cmd_benchmark(args) -> int:
    methods = [parse_method(m, args.command, **_nlm_kwargs(args)) for m in args.methods.split(",")]
    if args.include_raw and RAW not in methods:
        methods.insert(0, RAW)
    cfg = RunConfig(
        args.root,
        tuple(methods),
        args.levels,
        args.test_fov,
        None if args.images == 0 else args.images,
        args.params_source,
        tuple(args.config) if args.config else None,
        args.seed,
        args.workers,
    )
    report = run_benchmark(cfg)
    if args.output:
        emit_report(report, args.output, "csv")
    if args.markdown:
        emit_report(report, args.markdown, "markdown")
    print(report_to_markdown(report), end="")
    failed = [r for r in report.rows if r.n == 0]
    for r in failed:
        print(f"error: {r.method} at S={r.level}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_report(args) -> int:
    report = read_report_csv(args.input)
    if args.output:
        emit_report(report, args.output, args.format)
    else:
        print(report_to_markdown(report) if args.format != "csv" else report_to_csv(report), end="")
    return 0


# ---------------------------------------------------------------------------


def _add_nlm_options(p):
    p.add_argument("--patch-radius", type=int, default=3)
    p.add_argument("--search-radius", type=int, default=10)
    p.add_argument("--h", type=float, default=0.55, help="NLM strength in units of sigma")
    p.add_argument("--command", help="external denoiser command; {sigma} is substituted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmdkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fmdkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command_name", required=True)

    p = sub.add_parser("simulate", help="build a synthetic dataset")
    p.add_argument("--root", required=True)
    p.add_argument("--configs", type=int, default=0, help="use the first N configurations (0 = all 12)")
    p.add_argument("--fovs", type=int, default=20)
    p.add_argument("--realizations", type=int, default=50)
    p.add_argument("--levels", type=_levels, default=(1, 2, 4, 8, 16))
    p.add_argument("--gt-count", type=int, default=50)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate Poisson-Gaussian parameters of one image")
    p.add_argument("--input", required=True)
    p.add_argument("--peak", type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("denoise", help="denoise one image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--a", type=float, help="omit to estimate from the image")
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--method", choices=["identity", "box", "nlm", "external"], default="nlm")
    p.add_argument("--vst", action="store_true", help="wrap the denoiser in the Anscombe pipeline")
    p.add_argument("--box-radius", type=int, default=1)
    p.add_argument("--format", choices=[f.value for f in Format], default="fmdf")
    p.add_argument("--peak", type=float)
    _add_nlm_options(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("average", help="circular averages of a directory sequence")
    p.add_argument("--dir", required=True)
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--gt", help="also write the mean of all images here")
    p.add_argument("--peak", type=float)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("register-check", help="per-image translation against the sequence mean")
    p.add_argument("--dir", required=True)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--peak", type=float)
    p.set_defaults(func=cmd_register_check)

    p = sub.add_parser("clipstats", help="fraction of saturated pixels")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--peak", type=float)
    p.set_defaults(func=cmd_clipstats)

    p = sub.add_parser("metrics", help="PSNR and SSIM of a test image against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--peak", type=float)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("benchmark", help="run methods over a dataset")
    p.add_argument("--root", required=True)
    p.add_argument("--methods", default="raw,vst+nlm", help="comma list: raw, nlm, box3, vst+nlm, ...")
    p.add_argument("--include-raw", action="store_true")
    p.add_argument("--levels", type=_levels, default=(1, 2, 4, 8, 16))
    p.add_argument("--test-fov", type=int, default=19)
    p.add_argument("--images", type=int, default=4, help="images per configuration and level (0 = all)")
    p.add_argument("--params-source", choices=["manifest", "estimate"], default="manifest")
    p.add_argument("--config", action="append", help="restrict to a configuration tag (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="CSV report path")
    p.add_argument("--markdown", help="Markdown report path")
    _add_nlm_options(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="render a CSV report")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
