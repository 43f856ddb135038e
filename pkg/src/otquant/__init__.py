"""Equal-mass (optimal-transport) scalar quantization of weight tensors,
baseline quantizers, fidelity metrics, closed-form error bounds and a toy
flow simulator for checking trajectory-error envelopes."""

from .bounds import (
    DensityModel, LipschitzParams, alpha_gaussian, alpha_laplace, bennett_distortion,
    bit_budget, bound_report, delta_u, eps_e, eps_u, fid_bound_ot, fid_bound_uniform,
    min_bits_for_fid, rho,
)
from .flow_sim import (
    LinearField, SimConfig, analytic_linear_error, integrate, paired_error,
    spectral_norm, verify_gronwall,
)
from .metrics import (
    WeightedAtoms, alpha_empirical, codebook_occupancy, latent_variance_stats, mse,
    psnr, quantization_w2, ssim, w2_1d,
)
from .quantizers import (
    QuantMethodSpec, brute_force_optimal_partition, equal_mass_split, lloyd_max_refine,
    log2_quantize, ot_equal_mass_quantize, pwl_quantize, quantize_tensor, uniform_quantize,
)
from .tensor_store import (
    QuantArtifact, TensorContainer, dequantize, read_artifact, read_tensor,
    write_artifact, write_tensor,
)

__version__ = "0.1.0"
