"""
Quantizing a weight layer
=========================

Equal-mass codebooks against a uniform grid on a Gaussian layer with one
large outlier.
"""

import numpy as np

from otquant import QuantMethodSpec, TensorContainer, dequantize, quantize_tensor
from otquant.metrics import codebook_occupancy, mse

rng = np.random.default_rng(0)
w = rng.standard_normal((64, 256))
w[3, 17] = 10.0
layer = TensorContainer.from_array(w.astype(np.float32))

# one codebook per output row, 3 bits per weight
for kind in ("uniform", "ot", "pwl", "log2"):
    art = quantize_tensor(layer, QuantMethodSpec(kind, 3), per_channel=True)
    rec = dequantize(art).to_array()
    occ = np.mean([codebook_occupancy(a, art.levels).entropy_bits for a in art.assignments])
    print(f"{art.method:>14}  mse {mse(w, rec):.5f}  codebook entropy {occ:.3f} bits")

# the uniform grid spends most of its levels on the empty range the outlier
# stretched open; equal-mass levels follow the data, so every level is used
art = quantize_tensor(layer, QuantMethodSpec("uniform", 3), per_channel=True)
print("uniform levels, row 3:", np.round(art.codebooks[3], 2))
art = quantize_tensor(layer, QuantMethodSpec("ot", 3), per_channel=True)
print("equal-mass levels, row 3:", np.round(art.codebooks[3], 2))
