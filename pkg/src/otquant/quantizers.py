"""Scalar weight quantizers.

Every quantizer maps a 1-D sample ``v`` to a sorted codebook of ``K = 2**bits``
levels plus one level index per element. Assignment is always to the nearest
level, ties going to the smaller index.

The schemes:

* ``ot-equal-mass`` -- sort, split into K contiguous groups of (almost) equal
  count, level = group mean, then reassign every element to its nearest level.
* ``uniform`` -- mid-rise grid of K bin centres over ``[-R, R]``.
* ``pwl`` -- two-segment piecewise-uniform grid, dense inside a breakpoint,
  sparse in the tails.
* ``log2`` -- signed powers of two below ``max|v|``.

``lloyd_max_refine`` and ``brute_force_optimal_partition`` are reference
solvers used to measure how far a codebook is from MSE-optimal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor_store import METHODS, QuantArtifact, TensorContainer

METHOD_ALIASES = {"ot": "ot-equal-mass", "equal-mass": "ot-equal-mass", "logbase2": "log2"}

MAX_BITS = 16
BRUTE_FORCE_MAX_N = 16
BRUTE_FORCE_MAX_K = 4


class ChannelQuant(NamedTuple):
    levels: np.ndarray
    assignments: np.ndarray
    range_meta: float


class EqualMassPartition(NamedTuple):
    boundaries: np.ndarray  # K + 1 indices into the sorted sample
    sizes: np.ndarray


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name.lower(), name.lower())
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS} or 'ot'")
    return name


@dataclass(frozen=True)
class QuantMethodSpec:
    """Which quantizer to run and with what knobs.

    ``range_rule`` applies to ``uniform`` only: ``"absmax"`` uses
    ``R = max|v|``, ``"ksigma"`` uses ``R = k * std(v)``.
    """

    kind: str
    bits: int
    range_rule: str = "absmax"
    k: float = 10.0
    breakpoint_quantile: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_method(self.kind))
        if not isinstance(self.bits, (int, np.integer)) or not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must be an integer in [1, {MAX_BITS}], got {self.bits!r}")
        if self.range_rule not in ("absmax", "ksigma"):
            raise ValueError(f"range_rule must be 'absmax' or 'ksigma', got {self.range_rule!r}")
        if self.range_rule == "ksigma" and not self.k > 0:
            raise ValueError("ksigma rule requires k > 0")
        if not 0.0 < self.breakpoint_quantile < 1.0:
            raise ValueError("breakpoint_quantile must lie in (0, 1)")
        if self.kind in ("pwl", "log2") and self.bits < 2:
            raise ValueError(f"{self.kind} quantization needs bits >= 2")


def _as_sample(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot quantize an empty sample")
    if not np.all(np.isfinite(v)):
        raise ValueError("sample contains non-finite values")
    return v


def _mean(x: np.ndarray) -> float:
    # fsum is exactly rounded, so the result is independent of summation order
    return math.fsum(x.tolist()) / x.size


def nearest_level(v, levels) -> np.ndarray:
    """Index of the nearest entry of sorted ``levels`` for each value of ``v``.

    Ties, including duplicated levels, resolve to the smallest index.
    """
    v = np.asarray(v, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    K = levels.size
    pos = np.searchsorted(levels, v, side="left")
    lo = np.maximum(pos - 1, 0)
    hi = np.minimum(pos, K - 1)
    d_lo = np.where(pos > 0, v - levels[lo], np.inf)
    d_hi = np.where(pos < K, levels[hi] - v, np.inf)
    use_lo = d_lo <= d_hi
    # Rounded distances to the levels below v are non-increasing in the index,
    # so several lower levels can tie with levels[lo]; bisect for the first.
    left = np.zeros_like(lo)
    right = np.where(use_lo, lo, 0)
    while np.any(left < right):
        mid = (left + right) // 2
        ok = v - levels[mid] <= d_lo
        right = np.where(ok, mid, right)
        left = np.where(ok, left, mid + 1)
    return np.where(use_lo, right, hi).astype(np.int64)


def equal_mass_split(sorted_v, K: int) -> EqualMassPartition:
    """Split ``N`` sorted values into ``K`` contiguous bins of near-equal count.

    The first ``N mod K`` bins hold one extra element.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    N = len(sorted_v)
    base, extra = divmod(N, K)
    sizes = np.full(K, base, dtype=np.int64)
    sizes[:extra] += 1
    boundaries = np.concatenate([[0], np.cumsum(sizes)])
    return EqualMassPartition(boundaries, sizes)


def ot_equal_mass_quantize(v, bits: int) -> ChannelQuant:
    v = _as_sample(v)
    K = 1 << bits
    s = np.sort(v, kind="stable")
    part = equal_mass_split(s, K)
    levels = np.empty(K)
    for k in range(K):
        lo, hi = part.boundaries[k], part.boundaries[k + 1]
        # K > N leaves trailing bins empty; they repeat the last non-empty level
        levels[k] = _mean(s[lo:hi]) if hi > lo else levels[k - 1]
    # means of consecutive sorted groups are ordered; this only guards rounding
    levels = np.maximum.accumulate(levels)
    return ChannelQuant(levels, nearest_level(v, levels), float(np.max(np.abs(v))))


def uniform_quantize(v, bits: int, range_rule: str = "absmax", k: float = 10.0) -> ChannelQuant:
    """Mid-rise uniform quantizer on ``[-R, R]`` with step ``2R / 2**bits``."""
    v = _as_sample(v)
    if range_rule == "absmax":
        R = float(np.max(np.abs(v)))
    elif range_rule == "ksigma":
        if not k > 0:
            raise ValueError("ksigma rule requires k > 0")
        R = k * float(np.std(v))
    else:
        raise ValueError(f"unknown range rule {range_rule!r}")
    K = 1 << bits
    levels = R * (2.0 * np.arange(K) + 1.0 - K) / K
    return ChannelQuant(levels, nearest_level(v, levels), R)


def pwl_levels(q: float, m: float, K: int) -> np.ndarray:
    """Levels of the two-segment grid: K/2 inside ``[-q, q]``, K/4 per tail up to ``m``."""
    n_in, n_out = K // 2, K // 4
    inner = q * (2.0 * np.arange(n_in) + 1.0 - n_in) / n_in
    step = max(m - q, 0.0) / n_out
    tail = q + step * (np.arange(n_out) + 0.5)
    return np.sort(np.concatenate([-tail[::-1], inner, tail]))


def pwl_quantize(v, bits: int, breakpoint_quantile: float = 0.99) -> ChannelQuant:
    v = _as_sample(v)
    if bits < 2:
        raise ValueError("pwl quantization needs bits >= 2")
    mags = np.abs(v)
    q = float(np.quantile(mags, breakpoint_quantile))
    levels = pwl_levels(q, float(mags.max()), 1 << bits)
    return ChannelQuant(levels, nearest_level(v, levels), q)


def log2_quantize(v, bits: int) -> ChannelQuant:
    """Signed powers of two ``±m·2^-j``, ``j < K/2``; no zero level."""
    v = _as_sample(v)
    if bits < 2:
        raise ValueError("log2 quantization needs bits >= 2")
    m = float(np.max(np.abs(v)))
    half = (1 << bits) // 2
    pos = np.ldexp(m, -np.arange(half))
    levels = np.concatenate([-pos, pos[::-1]])
    return ChannelQuant(levels, nearest_level(v, levels), m)


def quantize_channel(v, spec: QuantMethodSpec) -> ChannelQuant:
    if spec.kind == "ot-equal-mass":
        return ot_equal_mass_quantize(v, spec.bits)
    if spec.kind == "uniform":
        return uniform_quantize(v, spec.bits, spec.range_rule, spec.k)
    if spec.kind == "pwl":
        return pwl_quantize(v, spec.bits, spec.breakpoint_quantile)
    return log2_quantize(v, spec.bits)


def quantize_tensor(t: TensorContainer, spec: QuantMethodSpec, per_channel: bool = False) -> QuantArtifact:
    """Quantize a whole tensor, either flattened or channel by channel along axis 0."""
    data = t.data.astype(np.float64)
    K = 1 << spec.bits
    C = t.shape[0] if per_channel and t.shape else 1
    if C == 0:
        return QuantArtifact(spec.kind, spec.bits, (), (), t.shape, np.zeros(0))
    rows = data.reshape(C, -1)
    books, assigns, metas = [], [], []
    for row in rows:
        if row.size == 0:
            cq = ChannelQuant(np.zeros(K), np.zeros(0, dtype=np.int64), 0.0)
        else:
            cq = quantize_channel(row, spec)
        books.append(cq.levels)
        assigns.append(cq.assignments)
        metas.append(cq.range_meta)
    return QuantArtifact(spec.kind, spec.bits, tuple(books), tuple(assigns), t.shape, np.array(metas))


def reconstruction_mse(v, levels, assignments) -> float:
    v = np.asarray(v, dtype=np.float64)
    err = v - np.asarray(levels)[np.asarray(assignments)]
    return math.fsum((err * err).tolist()) / v.size


def lloyd_max_refine(v, init, iters: int = 100) -> np.ndarray:
    """Alternate nearest-level assignment and centroid update.

    Stops early once the levels stop moving. A level that attracts no points
    keeps its previous value.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    s = np.sort(_as_sample(v))
    levels = np.sort(np.asarray(init, dtype=np.float64))
    for _ in range(iters):
        # s is sorted, so each level's cell is a contiguous slice
        cells = np.searchsorted(nearest_level(s, levels), np.arange(levels.size + 1))
        new = levels.copy()
        for k in range(levels.size):
            if cells[k + 1] > cells[k]:
                new[k] = _mean(s[cells[k]:cells[k + 1]])
        new = np.sort(new)
        if np.array_equal(new, levels):
            break
        levels = new
    return levels


def brute_force_optimal_partition(v, K: int) -> tuple[np.ndarray, float]:
    """Exhaustive search over contiguous partitions of the sorted sample.

    Returns the MSE-minimising codebook of length ``K`` (padded by repeating
    the top level when ``N < K``) and its MSE. Limited to ``N <= 16``,
    ``K <= 4``.
    """
    s = np.sort(_as_sample(v))
    N = s.size
    if N > BRUTE_FORCE_MAX_N or not 1 <= K <= BRUTE_FORCE_MAX_K:
        raise ValueError(
            f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, 1 <= K <= {BRUTE_FORCE_MAX_K}"
        )
    groups = min(K, N)
    best_sse, best_levels = math.inf, None
    for cuts in itertools.combinations(range(1, N), groups - 1):
        edges = (0, *cuts, N)
        levels, sq = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            mu = _mean(s[a:b])
            levels.append(mu)
            sq.extend(((s[a:b] - mu) ** 2).tolist())
        sse = math.fsum(sq)
        if sse < best_sse:
            best_sse, best_levels = sse, levels
    best_levels += [best_levels[-1]] * (K - groups)
    return np.array(best_levels), best_sse / N
