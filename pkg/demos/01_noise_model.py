"""
Poisson-Gaussian noise and averaging
====================================

A pixel with clean value y is recorded as z = a * Poisson(y / a) + N(0, b).
Averaging S such captures keeps the mean and divides the variance by S.
"""

import numpy as np

from fmdkit import Image, NoiseParams, average_images, predicted_moments, sample_noisy

# a flat scene at 0.3 of the full scale, confocal-like gain
params = NoiseParams(a=1.39e-2, b=1e-4)
scene = Image(np.full((256, 256), 0.3))

# every seed gives a fixed, reproducible realization
captures = [sample_noisy(scene, params, seed=s) for s in range(16)]

print(" S   mean      var       predicted var")
for S in (1, 2, 4, 8, 16):
    avg = average_images(captures[:S])
    _, var = predicted_moments(0.3, params, S)
    print(f"{S:2d}  {avg.data.mean():.5f}  {avg.data.var():.3e}  {var:.3e}")

# the density is a Gaussian-blurred Poisson comb; it integrates to one
from fmdkit import pg_pdf

z = np.linspace(-0.2, 1.0, 24001)
dens = pg_pdf(z, 0.3, params)
print("integral of pdf:", np.sum((dens[1:] + dens[:-1]) / 2 * np.diff(z)))
