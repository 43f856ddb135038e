"""
Wasserstein distance and image metrics
======================================

W2 between a sample and its codebook, then PSNR and SSIM on a quantized
synthetic image.
"""

import numpy as np

from otquant.metrics import WeightedAtoms, psnr, quantization_w2, ssim, w2_1d
from otquant.quantizers import ot_equal_mass_quantize, uniform_quantize

# two point masses at 0 and 1 against a single atom at 0.5
print("W2 hand case:", w2_1d(WeightedAtoms.create([0.0, 1.0]), WeightedAtoms.create([0.5])))

# nearest-level assignment is monotone, so W2 equals the root MSE here
v = np.random.default_rng(1).standard_normal(10_000)
for b in (2, 4, 6):
    cq = ot_equal_mass_quantize(v, b)
    print(f"bits {b}: W2 {quantization_w2(v, cq.levels, cq.assignments):.4f}")

# a smooth 64x64 gradient with texture, quantized to 4 bits
y, x = np.mgrid[0:64, 0:64]
img = 127.5 + 100 * np.sin(x / 9.0) * np.cos(y / 13.0)
img += np.random.default_rng(2).normal(0, 5, img.shape)
for name, q in (("uniform", uniform_quantize), ("equal-mass", ot_equal_mass_quantize)):
    cq = q(img - 127.5, 4)
    rec = cq.levels[cq.assignments].reshape(img.shape) + 127.5
    print(f"{name:>10}: PSNR {psnr(img, rec, 255):.2f} dB, "
          f"SSIM {ssim(img, rec, 255):.4f} (global), {ssim(img, rec, 255, 'window8'):.4f} (8x8 tiles)")
