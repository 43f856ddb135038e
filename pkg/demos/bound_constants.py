"""
Bound constants and bit budgets
===============================

Front constants of the uniform and equal-mass bounds, their ratio, and the
smallest bit-width that meets a target.
"""

from otquant.bounds import (
    DensityModel, LipschitzParams, alpha_gaussian, alpha_laplace, bit_budget,
    bound_report, fid_bound_uniform, min_bits_for_fid,
)

print(f"alpha_gaussian(1)^3 = {alpha_gaussian(1.0) ** 3:.4f}")
print(f"alpha_laplace(1)^3  = {alpha_laplace(1.0) ** 3:.4f}")

params = LipschitzParams()
gauss = DensityModel("gaussian", 1.0)
# clip at 10 sigma, the usual k-sigma rule
for b in range(2, 9):
    rep = bound_report(params, 10.0, gauss, b)
    print(f"b={b}  uniform {rep.fid_bound_uniform:.3e}  equal-mass {rep.fid_bound_ot:.3e}")
print(f"rho {rep.rho:.4f}, tail ratio alpha^3/R^2 {rep.tail_ratio:.4f}")

# how many bits keep the uniform bound under 1e-4?
c_u = fid_bound_uniform(params, 1.0, 0).constant
print("bits needed:", bit_budget(1e-4, c_u), f"(real-valued {min_bits_for_fid(1e-4, c_u):.3f})")
