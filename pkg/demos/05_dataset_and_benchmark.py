"""
A small synthetic dataset and benchmark
=======================================

Twelve imaging configurations, each with raw captures, circular averages at
S = 1, 2, 4, 8, 16 and a ground truth from the mean of all captures.  The
benchmark scores Raw (the averages themselves) and VST+NLM on one FOV.

Set FMD_WORKERS to control the thread count.
"""

import tempfile
from pathlib import Path

from fmdkit import (
    RAW,
    DatasetLayout,
    PhantomSpec,
    RunConfig,
    build_dataset,
    fmd_configurations,
    manifest_counts,
    parse_method,
    run_benchmark,
)
from fmdkit.bench import report_to_markdown

root = Path(tempfile.mkdtemp(prefix="fmd_"))
layout = DatasetLayout(root, fmd_configurations(PhantomSpec(size=128)), fovs_per_config=1,
                       realizations=50)
entries = build_dataset(layout, seed=0)
print(manifest_counts(entries), "under", root)

config = RunConfig(root, (RAW, parse_method("vst+nlm")), test_fov=1, images_per_config=2)
report = run_benchmark(config)
print(report_to_markdown(report))

# per-configuration view at the noisiest level
raw = report.psnr_by_config("Raw", 1)
nlm = report.psnr_by_config("VST+NLM", 1)
for tag in raw:
    print(f"{tag:18s} raw {raw[tag]:6.2f}  vst+nlm {nlm[tag]:6.2f}")
