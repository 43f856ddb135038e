"""Closed-form error bounds linking bit-width to trajectory and FID error.

All bounds share the shape ``C * 2**(-2b)``. The uniform constant scales with
the squared clipping range ``R**2``; the equal-mass constant scales with
``alpha**3 / 12`` where ``alpha = ∫ f(w)^(1/3) dw`` for the weight density f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# below this |L_x| the envelope switches to its L_x -> 0 limit
LX_LIMIT = 1e-12

GAUSSIAN_ALPHA_COEF = math.sqrt(6 * math.pi) / (2 * math.pi) ** (1 / 6)
LAPLACE_ALPHA_COEF = 6.0 * 2.0 ** (-1 / 3)


@dataclass(frozen=True)
class LipschitzParams:
    L_x: float = 1.0
    L_theta_inf: float = 1.0
    L_theta_2: float = 1.0
    L_phi: float = 1.0
    p: int = 1
    T: float = 1.0

    def __post_init__(self):
        for name in ("L_x", "L_theta_inf", "L_theta_2", "L_phi"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be a finite non-negative number, got {val!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")


@dataclass(frozen=True)
class DensityModel:
    """Weight density used to resolve alpha: gaussian(sigma), laplace(beta) or empirical(alpha)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "empirical"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if not self.param > 0:
            raise ValueError(f"{self.kind} density parameter must be positive")

    @property
    def alpha(self) -> float:
        if self.kind == "gaussian":
            return alpha_gaussian(self.param)
        if self.kind == "laplace":
            return alpha_laplace(self.param)
        return float(self.param)

    @property
    def sigma(self) -> float | None:
        """Standard deviation of the model, when it has one."""
        if self.kind == "gaussian":
            return float(self.param)
        if self.kind == "laplace":
            return math.sqrt(2.0) * self.param
        return None


class DeltaU(NamedTuple):
    printed: float  # R / 2**(b-1), the constant carried into the FID bound
    true_half_step: float  # R / 2**b, the actual worst case of a mid-rise grid


class BoundPair(NamedTuple):
    constant: float
    bound: float


class RhoReport(NamedTuple):
    rho: float
    tail_ratio: float


def alpha_gaussian(sigma: float) -> float:
    return GAUSSIAN_ALPHA_COEF * sigma ** (2 / 3)


def alpha_laplace(beta: float) -> float:
    return LAPLACE_ALPHA_COEF * beta ** (2 / 3)


def delta_u(R: float, b: int) -> DeltaU:
    return DeltaU(math.ldexp(R, 1 - b), math.ldexp(R, -b))


def gronwall_envelope(t, gap: float, L_x: float):
    """Solution of ``y' = L_x y + gap``, ``y(0) = 0``: ``gap/L_x * (exp(L_x t) - 1)``."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    if abs(L_x) < LX_LIMIT:
        out = gap * t_arr
    else:
        out = gap * np.expm1(L_x * t_arr) / L_x
    return float(out) if out.ndim == 0 else out


def eps_u(t, b: int, params: LipschitzParams, R: float):
    """Worst-case trajectory error envelope for uniform quantization."""
    return gronwall_envelope(t, params.L_theta_inf * delta_u(R, b).printed, params.L_x)


def eps_e(t, b: int, params: LipschitzParams, d_e: float):
    """Mean trajectory error envelope for equal-mass quantization with distortion ``d_e``."""
    if d_e < 0:
        raise ValueError("d_e must be non-negative")
    return gronwall_envelope(t, params.L_theta_2 * math.sqrt(params.p * d_e), params.L_x)


def bennett_distortion(alpha: float, b: int) -> float:
    return math.ldexp(alpha**3 / 12.0, -2 * b)


def _growth(params: LipschitzParams) -> float:
    # (exp(L_x T) - 1) / L_x with its L_x -> 0 limit
    return gronwall_envelope(params.T, 1.0, params.L_x)


def fid_bound_uniform(params: LipschitzParams, R: float, b: int) -> BoundPair:
    c_u = params.L_phi**2 * (params.L_theta_inf * _growth(params) * R) ** 2
    return BoundPair(c_u, math.ldexp(c_u, -2 * b))


def fid_bound_ot(params: LipschitzParams, density: DensityModel | float, b: int) -> BoundPair:
    alpha = density.alpha if isinstance(density, DensityModel) else float(density)
    front = params.L_theta_2 * math.sqrt(params.p) * _growth(params)
    c_e = params.L_phi**2 * front**2 * alpha**3 / 12.0
    return BoundPair(c_e, math.ldexp(c_e, -2 * b))


def rho(params: LipschitzParams, R: float, density: DensityModel | float) -> RhoReport:
    """Ratio of the equal-mass to uniform front constants, and ``alpha**3 / R**2``."""
    denom = (params.L_theta_inf * R) ** 2
    if denom == 0:
        raise ZeroDivisionError("rho is undefined when L_theta_inf * R == 0")
    alpha = density.alpha if isinstance(density, DensityModel) else float(density)
    a3 = alpha**3
    return RhoReport((params.L_theta_2**2 * params.p) / denom * a3 / 12.0, a3 / R**2)


def bit_budget(delta_max: float, c: float) -> int:
    """Smallest integer ``b >= 1`` with ``c * 2**(-2b) <= delta_max``."""
    if not (delta_max > 0 and c > 0):
        raise ValueError("delta_max and c must be positive")
    b = max(1, math.ceil(0.5 * math.log2(c / delta_max)))
    # the log estimate can be off by one near exact powers of four
    while b > 1 and math.ldexp(c, -2 * (b - 1)) <= delta_max:
        b -= 1
    while math.ldexp(c, -2 * b) > delta_max:
        b += 1
    return b


def min_bits_for_fid(fid_goal: float, c: float) -> float:
    if not (fid_goal > 0 and c > 0):
        raise ValueError("fid_goal and c must be positive")
    return 0.5 * math.log2(c / fid_goal)


class BoundReport(NamedTuple):
    bits: int
    delta_u: float
    d_e: float
    time_grid: np.ndarray
    eps_u: np.ndarray
    eps_e: np.ndarray
    c_u: float
    c_e: float
    fid_bound_uniform: float
    fid_bound_ot: float
    rho: float
    tail_ratio: float


def bound_report(params: LipschitzParams, R: float, density: DensityModel | float,
                 b: int, time_grid=None) -> BoundReport:
    """Evaluate every bound for one bit-width."""
    alpha = density.alpha if isinstance(density, DensityModel) else float(density)
    if time_grid is None:
        time_grid = np.linspace(0.0, params.T, 11)
    time_grid = np.asarray(time_grid, dtype=np.float64)
    d_e = bennett_distortion(alpha, b)
    u = fid_bound_uniform(params, R, b)
    e = fid_bound_ot(params, alpha, b)
    r = rho(params, R, alpha)
    return BoundReport(
        b, delta_u(R, b).printed, d_e, time_grid,
        np.asarray(eps_u(time_grid, b, params, R)), np.asarray(eps_e(time_grid, b, params, d_e)),
        u.constant, e.constant, u.bound, e.bound, r.rho, r.tail_ratio,
    )
