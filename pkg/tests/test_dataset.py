import warnings

import numpy as np
import pytest

from fmdkit.dataset import (
    INCOMPLETE_MARKER,
    DatasetLayout,
    ImageSequence,
    PhantomSpec,
    build_dataset,
    check_manifest_closed,
    circular_average,
    estimate_ground_truth,
    fmd_configurations,
    generate_synthetic_fov,
    load_entry,
    make_phantom,
    manifest_counts,
    plan_manifest,
    read_manifest,
    workers_from_env,
)
from fmdkit.image import Image
from fmdkit.noise import NoiseParams


def small_seq(R=6, n=16, seed=0):
    gt = Image(np.full((n, n), 0.4))
    return generate_synthetic_fov(gt, NoiseParams(0.02, 1e-4), R, seed)


@pytest.mark.parametrize("kind", ["cells", "filaments", "edges", "mixed"])
def test_phantom_range_and_determinism(kind):
    spec = PhantomSpec(kind, size=64)
    p = make_phantom(spec, 3)
    assert p.shape == (64, 64, 1)
    assert p.data.min() >= spec.background - 1e-12
    assert p.data.max() <= spec.peak
    assert p == make_phantom(spec, 3)


def test_phantom_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_phantom(PhantomSpec("stars", size=32))


def test_sequence_must_be_consistent():
    with pytest.raises(ValueError):
        ImageSequence("x", ())
    with pytest.raises(ValueError):
        ImageSequence("x", (Image(np.zeros((4, 4))), Image(np.zeros((4, 5)))))


@pytest.mark.parametrize("S", [1, 2, 3, 6])
def test_circular_average_count_and_definition(S):
    seq = small_seq()
    out = circular_average(seq, S)
    assert len(out) == len(seq)
    j = 4
    idx = [(j + k) % 6 for k in range(S)]
    expect = np.mean([seq[i].data for i in idx], axis=0)
    assert np.allclose(out[j].data, expect, rtol=0, atol=1e-15)
    assert out.params.a == pytest.approx(0.02 / S)


def test_circular_average_preserves_pixel_mean():
    seq = small_seq(R=7)
    raw_mean = np.mean([im.data for im in seq], axis=0)
    for S in (2, 3, 5):
        avg_mean = np.mean([im.data for im in circular_average(seq, S)], axis=0)
        assert np.allclose(avg_mean, raw_mean, rtol=0, atol=1e-14)


def test_circular_average_bounds():
    with pytest.raises(ValueError):
        circular_average(small_seq(), 0)
    with pytest.raises(ValueError):
        circular_average(small_seq(), 7)


def test_ground_truth_noise_floor():
    seq = small_seq(R=50, n=64)
    gt = estimate_ground_truth(seq)
    rms = np.sqrt(np.mean((gt.data - 0.4) ** 2))
    assert rms == pytest.approx(np.sqrt((0.02 * 0.4 + 1e-4) / 50), rel=0.1)


def test_ground_truth_warns_on_short_sequence():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        estimate_ground_truth(small_seq(R=3), expected=50)
    assert any("expected 50" in str(x.message) for x in w)


def test_fmd_configurations():
    cfgs = fmd_configurations()
    assert len(cfgs) == 12
    assert len({c.tag for c in cfgs}) == 12
    assert cfgs[0].params.a == 1.39e-2 and cfgs[0].params.effective_b == 0.0


def test_layout_validation(tmp_path):
    cfg = fmd_configurations()[:1]
    with pytest.raises(ValueError):
        DatasetLayout(tmp_path, cfg, 1, 4, (1, 8))
    with pytest.raises(ValueError):
        DatasetLayout(tmp_path, cfg, 1, 4, (2, 1))
    with pytest.raises(ValueError):
        DatasetLayout(tmp_path, cfg, 1, 4, (1,), gt_average_count=5)


def test_canonical_plan_counts(tmp_path):
    layout = DatasetLayout(tmp_path, fmd_configurations())
    assert manifest_counts(plan_manifest(layout, 0)) == {"raw": 12000, "noisy": 60000, "gt": 240}


def tiny_layout(root):
    cfgs = fmd_configurations(PhantomSpec(size=32))[:2]
    return DatasetLayout(root, cfgs, 2, 4, (1, 2), 4)


def test_build_dataset_closed_and_consistent(tmp_path):
    layout = tiny_layout(tmp_path / "ds")
    entries = build_dataset(layout, seed=1, workers=2)
    assert manifest_counts(entries) == {"raw": 16, "noisy": 32, "gt": 4}
    assert read_manifest(layout.root) == entries
    assert check_manifest_closed(layout.root) == (set(), set())
    assert not (layout.root / INCOMPLETE_MARKER).exists()
    raws = [load_entry(layout.root, e) for e in entries
            if e.level == "raw" and e.fov == 1 and e.config == entries[0].config]
    gt = load_entry(layout.root, next(e for e in entries if e.level == "gt"))
    assert np.allclose(gt.data, np.mean([r.data for r in raws], axis=0), atol=1e-15)


def test_build_dataset_is_deterministic(tmp_path):
    a = build_dataset(tiny_layout(tmp_path / "a"), seed=7, workers=3)
    build_dataset(tiny_layout(tmp_path / "b"), seed=7, workers=1)
    for e in a:
        assert (tmp_path / "a" / e.path).read_bytes() == (tmp_path / "b" / e.path).read_bytes()
    assert (tmp_path / "a/manifest.csv").read_bytes() == (tmp_path / "b/manifest.csv").read_bytes()


def test_incomplete_dataset_is_refused(tmp_path):
    layout = tiny_layout(tmp_path)
    build_dataset(layout, seed=0, workers=1)
    (tmp_path / INCOMPLETE_MARKER).touch()
    with pytest.raises(RuntimeError):
        read_manifest(tmp_path)


def test_stray_file_breaks_closure(tmp_path):
    layout = tiny_layout(tmp_path)
    entries = build_dataset(layout, seed=0, workers=1)
    (tmp_path / "stray.fmdf").write_bytes(b"")
    (tmp_path / entries[0].path).unlink()
    extra, missing = check_manifest_closed(tmp_path)
    assert extra == {"stray.fmdf"} and missing == {entries[0].path}


def test_workers_from_env(monkeypatch):
    monkeypatch.setenv("FMD_WORKERS", "3")
    assert workers_from_env() == 3
    monkeypatch.delenv("FMD_WORKERS")
    assert workers_from_env(5) == 5
