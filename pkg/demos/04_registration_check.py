"""
Is the sequence aligned?
========================

Each capture is registered against the mean of the sequence.  Ground truth
by averaging is only meaningful if no shift reaches half a pixel.
"""

import numpy as np

from fmdkit import (
    Image,
    NoiseParams,
    PhantomSpec,
    average_images,
    estimate_translation,
    generate_synthetic_fov,
    make_phantom,
)

gt = make_phantom(PhantomSpec("filaments", size=256), seed=4)
seq = generate_synthetic_fov(gt, NoiseParams(2.55e-2, 0.0), 10, seed=5)
ref = average_images(seq.realizations)

shifts = [estimate_translation(ref, im) for im in seq]
for j, t in enumerate(shifts):
    print(f"{j:2d}  dx={t.dx:+.4f}  dy={t.dy:+.4f}  psr={t.confidence:.1f}")
print("worst:", max(max(abs(t.dx), abs(t.dy)) for t in shifts))

# a capture drifted by a third of a pixel is caught
fy = np.fft.fftfreq(256)[:, None]
fx = np.fft.fftfreq(256)[None, :]
drift = np.real(np.fft.ifft2(np.fft.fft2(seq[0].data[:, :, 0]) * np.exp(-2j * np.pi * fx / 3)))
print("drifted capture:", estimate_translation(ref, Image(drift)))
