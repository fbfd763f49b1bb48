import math
import sys

import numpy as np
import pytest

from fmdkit.bench import (
    CSV_HEADER,
    RAW,
    BenchmarkReport,
    ReportRow,
    RunConfig,
    emit_report,
    parse_method,
    read_report_csv,
    report_to_markdown,
    run_benchmark,
)
from fmdkit.cli import main
from fmdkit.dataset import DatasetLayout, PhantomSpec, build_dataset, fmd_configurations
from fmdkit.image import Format, Image, read_image, write_image
from fmdkit.noise import NoiseParams, sample_noisy


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cfgs = fmd_configurations(PhantomSpec(size=64))[:2]
    build_dataset(DatasetLayout(root, cfgs, 2, 4, (1, 2, 4), 4), seed=3, workers=2)
    return root


def test_parse_method():
    assert parse_method("raw") is RAW
    assert parse_method("VST+NLM").name == "VST+NLM"
    m = parse_method("box2")
    assert (m.name, m.vst, m.denoiser.box_radius) == ("Box2", False, 2)
    assert parse_method("vst+raw").name == "VST+Identity"
    with pytest.raises(ValueError):
        parse_method("bm4d")
    with pytest.raises(ValueError):
        parse_method("external")


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig(tmp_path, methods=())
    with pytest.raises(ValueError):
        RunConfig(tmp_path, methods=(RAW, RAW))
    with pytest.raises(ValueError):
        RunConfig(tmp_path, params_source="guess")


def test_benchmark_rows_and_monotone_raw(dataset):
    cfg = RunConfig(dataset, (RAW, parse_method("vst+box1")), (1, 2, 4), test_fov=2,
                    images_per_config=None)
    report = run_benchmark(cfg)
    assert report.methods() == ["Raw", "VST+Box1"]
    assert report.levels() == [1, 2, 4]
    assert all(r.n == 8 for r in report.rows)
    raw = [report.row("Raw", s).psnr for s in (1, 2, 4)]
    assert raw[0] < raw[1] < raw[2]
    assert len(report.psnr_by_config("Raw", 1)) == 2
    assert len(report.metadata["manifest_sha256"]) == 64


def test_benchmark_subset_is_seeded(dataset):
    cfg = RunConfig(dataset, (RAW,), (1,), test_fov=1, images_per_config=2, seed=5)
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    assert [(r.psnr, r.ssim, r.n) for r in a.rows] == [(r.psnr, r.ssim, r.n) for r in b.rows]
    assert a.rows[0].n == 4


def test_benchmark_estimated_params(dataset):
    cfg = RunConfig(dataset, (parse_method("vst+box1"),), (1,), test_fov=1,
                    images_per_config=1, params_source="estimate")
    row = run_benchmark(cfg).rows[0]
    assert row.n == 2 and math.isfinite(row.psnr)


def test_failing_method_is_recorded(dataset, tmp_path):
    script = tmp_path / "fail.py"
    script.write_text("import sys\nsys.exit(1)\n")
    bad = parse_method("external", f"{sys.executable} {script}")
    cfg = RunConfig(dataset, (RAW, bad), (1,), test_fov=1, images_per_config=1)
    report = run_benchmark(cfg)
    assert report.row("Raw", 1).n == 2
    failed = report.row(bad.name, 1)
    assert failed.n == 0 and math.isnan(failed.psnr) and "exited 1" in failed.error


def test_unknown_config_and_missing_fov(dataset):
    with pytest.raises(ValueError):
        run_benchmark(RunConfig(dataset, configs=("nope",), noise_levels=(1,), test_fov=1))
    with pytest.raises(RuntimeError):
        run_benchmark(RunConfig(dataset, noise_levels=(1,), test_fov=19))


def sample_report():
    rows = [ReportRow("Raw", 1, 20.5, 0.5, 0.0, 4), ReportRow("Raw", 2, 23.25, 0.6, 0.0, 4),
            ReportRow("X", 1, math.nan, math.nan, math.nan, 0, error="boom"),
            ReportRow("X", 2, 30.0, 0.9, 0.125, 4)]
    return BenchmarkReport(rows)


def test_csv_round_trip(tmp_path):
    rep = sample_report()
    emit_report(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert tuple(lines[0].split(",")) == CSV_HEADER
    back = read_report_csv(tmp_path / "r.csv")
    for a, b in zip(rep.rows, back.rows):
        assert (a.method, a.level, a.n) == (b.method, b.level, b.n)
        assert a.psnr == b.psnr or (math.isnan(a.psnr) and math.isnan(b.psnr))


def test_markdown_grid():
    md = report_to_markdown(sample_report())
    assert "| Method | S = 1 | S = 2 | Time (s) |" in md
    assert "| Raw | 20.50 / 0.5000 | 23.25 / 0.6000 |" in md
    assert "failed" in md
    assert "mean wall-clock denoising time per image" in md


def test_emit_report_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(BenchmarkReport([]), tmp_path / "r.csv")
    with pytest.raises(ValueError):
        emit_report(sample_report(), tmp_path / "r.txt", "html")


# ---------------------------------------------------------------------------
# CLI


def noisy_file(tmp_path, name="z.fmdf", seed=0):
    from fmdkit.dataset import make_phantom

    gt = make_phantom(PhantomSpec("cells", size=128), 1)
    z = sample_noisy(gt, NoiseParams(0.02, 1e-4), seed)
    write_image(z, tmp_path / name, Format.FMDF)
    return gt, tmp_path / name


def test_cli_usage_errors(capsys):
    assert main([]) == 2
    assert main(["denoise"]) == 2
    assert main(["metrics", "--reference", "x", "--test", "y", "--bogus"]) == 2


def test_cli_estimate(tmp_path, capsys):
    _, path = noisy_file(tmp_path)
    assert main(["estimate", "--input", str(path)]) == 0
    out = capsys.readouterr().out
    fields = dict(tok.split("=") for tok in out.split())
    assert float(fields["a"]) == pytest.approx(0.02, rel=0.2)
    assert int(fields["segments"]) >= 2


def test_cli_denoise_and_metrics(tmp_path, capsys):
    gt, path = noisy_file(tmp_path)
    write_image(gt, tmp_path / "gt.fmdf")
    out = tmp_path / "d.fmdf"
    assert main(["denoise", "--input", str(path), "--output", str(out), "--a", "0.02",
                 "--b", "1e-4", "--vst", "--method", "box"]) == 0
    assert read_image(out).shape == gt.shape
    capsys.readouterr()
    assert main(["metrics", "--reference", str(tmp_path / "gt.fmdf"), "--test", str(out),
                 "--peak", "1"]) == 0
    line = capsys.readouterr().out
    assert line.startswith("psnr=") and "ssim=" in line


def test_cli_bad_input_exits_one(tmp_path, capsys):
    (tmp_path / "bad.fmdf").write_bytes(b"FMDFxx")
    assert main(["estimate", "--input", str(tmp_path / "bad.fmdf")]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_average_and_register_check(tmp_path, capsys):
    seq = tmp_path / "seq"
    seq.mkdir()
    for j in range(4):
        noisy_file(seq, f"{j:02d}.fmdf", seed=j)
    assert main(["average", "--dir", str(seq), "--S", "2", "--output", str(tmp_path / "avg"),
                 "--gt", str(tmp_path / "gt.fmdf")]) == 0
    assert len(list((tmp_path / "avg").iterdir())) == 4
    csv_path = tmp_path / "reg.csv"
    assert main(["register-check", "--dir", str(seq), "--output", str(csv_path)]) == 0
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "index,file,dx,dy,abs_dx,abs_dy,confidence"
    assert len(rows) == 5
    assert "aligned" in capsys.readouterr().err


def test_cli_clipstats(tmp_path, capsys):
    write_image(Image(np.array([[0, 255, 255, 3]] * 4, float), 255.0), tmp_path / "c.pgm",
                Format.PGM8)
    assert main(["clipstats", str(tmp_path / "c.pgm")]) == 0
    assert "50.000000%" in capsys.readouterr().out


def test_cli_simulate_benchmark_report(tmp_path, capsys):
    root = tmp_path / "ds"
    assert main(["simulate", "--root", str(root), "--configs", "1", "--fovs", "1",
                 "--realizations", "4", "--levels", "1,2", "--gt-count", "4",
                 "--size", "32"]) == 0
    assert "raw=4 noisy=8 gt=1" in capsys.readouterr().out
    csv_path, md_path = tmp_path / "r.csv", tmp_path / "r.md"
    assert main(["benchmark", "--root", str(root), "--methods", "raw,vst+box1",
                 "--levels", "1,2", "--test-fov", "1", "--output", str(csv_path),
                 "--markdown", str(md_path)]) == 0
    assert md_path.read_text().startswith("| Method |")
    capsys.readouterr()
    assert main(["report", "--input", str(csv_path)]) == 0
    assert "VST+Box1" in capsys.readouterr().out
