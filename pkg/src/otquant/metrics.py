"""Fidelity metrics: 1-D Wasserstein-2, MSE, PSNR, SSIM and friends."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

PSNR_CAP_DB = 99.0
_MASS_TOL = 1e-12


class WeightedAtoms(NamedTuple):
    """Discrete distribution on the real line."""

    positions: np.ndarray
    masses: np.ndarray

    @classmethod
    def create(cls, positions, masses=None) -> "WeightedAtoms":
        x = np.asarray(positions, dtype=np.float64).reshape(-1)
        if masses is None:
            m = np.full(x.size, 1.0 / x.size) if x.size else np.zeros(0)
        else:
            m = np.asarray(masses, dtype=np.float64).reshape(-1)
        if x.size == 0 or m.shape != x.shape:
            raise ValueError("positions and masses must be non-empty and the same length")
        if not np.all(np.isfinite(x)):
            raise ValueError("atom positions must be finite")
        if np.any(m < 0) or abs(math.fsum(m.tolist()) - 1.0) > _MASS_TOL:
            raise ValueError("masses must be non-negative and sum to 1")
        return cls(x, m)

    @classmethod
    def empirical(cls, sample) -> "WeightedAtoms":
        return cls.create(sample)


class LatentStats(NamedTuple):
    per_dim_variance: np.ndarray
    variance_mean: float
    variance_std: float


class AlphaEstimate(NamedTuple):
    value: float
    degenerate: bool


class Occupancy(NamedTuple):
    counts: np.ndarray
    entropy_bits: float


def _cumulative(p: WeightedAtoms) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(p.positions, kind="stable")
    cdf = np.cumsum(p.masses[order])
    cdf[-1] = 1.0
    return p.positions[order], cdf


def w2_squared_1d(p: WeightedAtoms, q: WeightedAtoms) -> float:
    """Squared 2-Wasserstein distance by integrating over the quantile coupling."""
    xp, cp = _cumulative(p)
    xq, cq = _cumulative(q)
    t = np.union1d(cp, cq)
    t = t[t > 0]
    dt = np.diff(np.concatenate([[0.0], t]))
    mid = t - 0.5 * dt
    ip = np.minimum(np.searchsorted(cp, mid, side="left"), xp.size - 1)
    iq = np.minimum(np.searchsorted(cq, mid, side="left"), xq.size - 1)
    return math.fsum((dt * (xp[ip] - xq[iq]) ** 2).tolist())


def w2_1d(p: WeightedAtoms, q: WeightedAtoms) -> float:
    return math.sqrt(w2_squared_1d(p, q))


def codebook_atoms(levels, assignments) -> WeightedAtoms:
    """Codebook levels weighted by how many elements point at them."""
    levels = np.asarray(levels, dtype=np.float64)
    counts = np.bincount(np.asarray(assignments), minlength=levels.size)
    return WeightedAtoms.create(levels, counts / counts.sum())


def quantization_w2(v, levels, assignments) -> float:
    """W2 between the empirical sample and its occupancy-weighted codebook.

    The identity coupling (element -> its assigned level) is admissible, so
    ``W2**2`` never exceeds the reconstruction MSE; a violation raises.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    assignments = np.asarray(assignments).reshape(-1)
    if v.size != assignments.size:
        raise ValueError(f"sample has {v.size} elements but {assignments.size} assignments")
    levels = np.asarray(levels, dtype=np.float64)
    # Every mass is a multiple of 1/N, so the quantile coupling is the sorted
    # pairing; doing it in counts avoids cumulative-mass rounding.
    counts = np.bincount(assignments, minlength=levels.size)
    order = np.argsort(levels, kind="stable")
    paired = np.repeat(levels[order], counts[order])
    w2sq = mse(np.sort(v), paired)
    err = mse(v, levels[assignments])
    if w2sq > err * (1 + 1e-12) + 1e-300:
        raise ArithmeticError(f"W2^2 = {w2sq!r} exceeds reconstruction MSE {err!r}")
    return math.sqrt(w2sq)


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    d = (a - b).reshape(-1)
    return math.fsum((d * d).tolist()) / d.size


def psnr(a, b, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; exactly ``PSNR_CAP_DB`` for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    err = mse(a, b)
    if err == 0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(peak * peak / err)


def _ssim_stats(a: np.ndarray, b: np.ndarray, c1: float, c2: float) -> np.ndarray:
    # a, b: (..., n) windows flattened on the last axis
    mu_a, mu_b = a.mean(axis=-1), b.mean(axis=-1)
    da, db = a - mu_a[..., None], b - mu_b[..., None]
    var_a, var_b = (da * da).mean(axis=-1), (db * db).mean(axis=-1)
    cov = (da * db).mean(axis=-1)
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )


def ssim(a, b, peak: float, mode: str = "global") -> float:
    """Structural similarity with ``C1 = (0.01 peak)**2``, ``C2 = (0.03 peak)**2``.

    ``global`` treats the whole array as one window. ``window8`` averages over
    non-overlapping 8x8 tiles of the last two axes; partial edge tiles are
    dropped and leading axes are treated as separate channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    if mode == "global":
        return float(_ssim_stats(a.reshape(-1), b.reshape(-1), c1, c2))
    if mode != "window8":
        raise ValueError(f"unknown SSIM mode {mode!r}")
    if a.ndim < 2 or a.shape[-1] < 8 or a.shape[-2] < 8:
        raise ValueError(f"window8 SSIM needs at least 8x8 images, got shape {a.shape}")
    h, w = (a.shape[-2] // 8) * 8, (a.shape[-1] // 8) * 8

    def tiles(x):
        x = x[..., :h, :w].reshape(-1, h // 8, 8, w // 8, 8)
        return x.transpose(0, 1, 3, 2, 4).reshape(-1, 64)

    return float(_ssim_stats(tiles(a), tiles(b), c1, c2).mean())


def latent_variance_stats(samples) -> LatentStats:
    """Per-dimension unbiased variance, summarised by its mean and population std."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an (n, d) sample matrix with n >= 2")
    var = x.var(axis=0, ddof=1)
    return LatentStats(var, float(var.mean()), float(var.std()))


def alpha_empirical(v, bins: int = 256) -> AlphaEstimate:
    """Plug-in estimate of ``∫ f(w)^(1/3) dw`` from an equal-width histogram."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size < 100 or bins < 8:
        raise ValueError("need at least 100 samples and 8 bins")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return AlphaEstimate(0.0, True)
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    width = (hi - lo) / bins
    density = counts / (v.size * width)
    return AlphaEstimate(math.fsum(np.cbrt(density).tolist()) * width, False)


def codebook_occupancy(assignments, K: int) -> Occupancy:
    counts = np.bincount(np.asarray(assignments, dtype=np.int64).reshape(-1), minlength=K)
    total = counts.sum()
    if total == 0:
        return Occupancy(counts, 0.0)
    p = counts[counts > 0] / total
    return Occupancy(counts, max(0.0, -math.fsum((p * np.log2(p)).tolist())))
