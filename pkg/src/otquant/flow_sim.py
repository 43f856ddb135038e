"""Toy probability-flow ODEs for checking trajectory-error envelopes.

A velocity field here is affine, ``f(x) = A x + c``, so its state-Lipschitz
constant is exactly the spectral norm of ``A`` and the exact flow is a
matrix exponential. Two fields (reference and perturbed) are integrated from
the same standard-normal starting points and the per-time error norms are
compared with the Grönwall envelope ``gap / L_x * (exp(L_x t) - 1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bounds import LipschitzParams, gronwall_envelope

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
EXPM_NORM_GUARD = 50.0


@dataclass(frozen=True, eq=False)
class LinearField:
    """Affine velocity field ``f(x) = A x + c``."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if A.shape[0] != A.shape[1] or c.size != A.shape[0]:
            raise ValueError(f"A must be square and match c; got A {A.shape}, c {c.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
            raise ValueError("field entries must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def lipschitz(self) -> float:
        return spectral_norm(self.A)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.A.T + self.c

    def perturbed(self, dA=None, dc=None) -> "LinearField":
        A = self.A if dA is None else self.A + np.asarray(dA, dtype=np.float64)
        c = self.c if dc is None else self.c + np.asarray(dc, dtype=np.float64)
        return LinearField(A, c)


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    step: float = 1e-3
    integrator: str = "rk4"
    n_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if not (self.T > 0 and self.step > 0 and self.step <= self.T):
            raise ValueError("need 0 < step <= T")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"integrator must be 'euler' or 'rk4', got {self.integrator!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def n_steps(self) -> int:
        n = round(self.T / self.step)
        if abs(n * self.step - self.T) > 1e-9 * self.T:
            raise ValueError(f"step {self.step} does not divide T = {self.T}")
        return n

    @property
    def time_grid(self) -> np.ndarray:
        n = self.n_steps
        return self.T * np.arange(n + 1) / n


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray  # (len(times), n, d)
    diverged: bool


class TrajectoryErrorReport(NamedTuple):
    time_grid: np.ndarray
    max_error: np.ndarray
    mean_error: np.ndarray
    envelope: np.ndarray | None = None
    satisfied: bool | None = None
    min_margin: float | None = None
    diverged: bool = False


# -- deterministic ensemble -------------------------------------------------


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1] keyed by ``(seed, row, col)``.

    ``h = mix(mix(mix(seed) ^ row) ^ col)`` with the SplitMix64 finaliser, then
    ``(h >> 11 + 1) * 2**-53``.
    """
    h = _splitmix64(np.full(np.broadcast(rows, cols).shape, seed, dtype=np.uint64))
    h = _splitmix64(h ^ np.asarray(rows, dtype=np.uint64))
    h = _splitmix64(h ^ np.asarray(cols, dtype=np.uint64))
    return ((h >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53


def standard_normals(seed: int, n: int, d: int) -> np.ndarray:
    """``(n, d)`` standard normals; Box-Muller over column pairs ``(2k, 2k+1)``."""
    pairs = (d + 1) // 2
    rows = np.arange(n, dtype=np.uint64)[:, None]
    k = np.arange(pairs, dtype=np.uint64)[None, :]
    u1 = counter_uniforms(seed, rows, 2 * k)
    u2 = counter_uniforms(seed, rows, 2 * k + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((n, 2 * pairs))
    z[:, 0::2] = r * np.cos(2 * np.pi * u2)
    z[:, 1::2] = r * np.sin(2 * np.pi * u2)
    return z[:, :d]


# -- integration ------------------------------------------------------------


def integrate(field: LinearField, x0, config: SimConfig) -> Trajectory:
    """Fixed-step explicit integration on ``{0, step, ..., T}``.

    ``x0`` may be one state ``(d,)`` or a batch ``(n, d)``. On a non-finite
    state the integration stops and the partial trajectory is returned with
    ``diverged=True``.
    """
    x = np.array(x0, dtype=np.float64, ndmin=2)
    times = config.time_grid
    h = config.T / config.n_steps
    states = np.empty((times.size, *x.shape))
    states[0] = x
    for i in range(1, times.size):
        with np.errstate(over="ignore", invalid="ignore"):
            if config.integrator == "euler":
                x = x + h * field(x)
            else:
                k1 = field(x)
                k2 = field(x + 0.5 * h * k1)
                k3 = field(x + 0.5 * h * k2)
                k4 = field(x + h * k3)
                x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return Trajectory(times[:i], states[:i], True)
        states[i] = x
    return Trajectory(times, states, False)


def _error_norms(ref: Trajectory, pert: Trajectory) -> np.ndarray:
    n = min(ref.times.size, pert.times.size)
    # (time, sample), C-ordered so per-time means reduce over a contiguous axis
    return np.ascontiguousarray(np.linalg.norm(pert.states[:n] - ref.states[:n], axis=-1))


def paired_error(field: LinearField, perturbed: LinearField, config: SimConfig) -> TrajectoryErrorReport:
    """Integrate both fields from the same seeded N(0, I) draws and summarise ``|x̂_t - x_t|``."""
    if field.dim != perturbed.dim:
        raise ValueError("fields have different dimensions")
    x0 = standard_normals(config.seed, config.n_samples, field.dim)
    ref = integrate(field, x0, config)
    pert = integrate(perturbed, x0, config)
    err = _error_norms(ref, pert)
    return TrajectoryErrorReport(
        ref.times[: err.shape[0]], err.max(axis=1), err.mean(axis=1),
        diverged=ref.diverged or pert.diverged,
    )


# -- linear algebra oracles -------------------------------------------------


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring a truncated Taylor series."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    norm = np.abs(M).sum(axis=0).max() if M.size else 0.0
    if norm > EXPM_NORM_GUARD:
        raise ValueError(f"|M| = {norm:.3g} exceeds the guard {EXPM_NORM_GUARD}")
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    X = M / 2.0**s
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 40):
        term = term @ X / k
        out = out + term
        # |X| <= 1/2 makes the remaining tail at most twice the last term
        if np.abs(term).sum(axis=0).max() < 1e-17:
            break
    for _ in range(s):
        out = out @ out
    return out


def affine_flow(A, c, x0, t: float) -> np.ndarray:
    """Exact solution of ``x' = A x + c`` at time ``t`` via the augmented exponential."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    d = A.shape[0]
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = A
    aug[:d, d] = np.asarray(c, dtype=np.float64).reshape(-1)
    phi = expm(aug * t)
    x0 = np.asarray(x0, dtype=np.float64)
    return x0 @ phi[:d, :d].T + phi[:d, d]


def analytic_linear_error(A, E, c, x0, t: float, dc=None) -> np.ndarray:
    """Exact ``x̂_t - x_t`` for ``x' = A x + c`` versus ``x' = (A + E) x + c + dc``."""
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    c_hat = c if dc is None else c + np.asarray(dc, dtype=np.float64).reshape(-1)
    A = np.asarray(A, dtype=np.float64)
    return affine_flow(A + np.asarray(E), c_hat, x0, t) - affine_flow(A, c, x0, t)


def spectral_norm(A, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``AᵀA``.

    Warns with ``RuntimeWarning`` and returns the last estimate if the
    iteration has not settled to ``tol`` after ``max_iter`` steps.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if not np.any(A):
        return 0.0
    B = A.T @ A
    v = standard_normals(0x5EED, 1, B.shape[0])[0]
    v /= np.linalg.norm(v)
    lam = float(v @ B @ v)
    for _ in range(max_iter):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = float(v @ B @ v)
        if abs(new - lam) <= tol * max(new, 1e-300):
            return math.sqrt(max(new, 0.0))
        lam = new
    warnings.warn("spectral_norm power iteration did not converge", RuntimeWarning, stacklevel=2)
    return math.sqrt(max(lam, 0.0))


# -- envelope verification --------------------------------------------------


def velocity_gap(field: LinearField, perturbed: LinearField, config: SimConfig, kind: str = "uniform") -> float:
    """Measured parameter term ``|f̂(x_t) - f(x_t)|`` along the reference flow.

    ``uniform`` takes the supremum over samples and times; ``ot-mean`` the
    supremum over times of the ensemble mean.
    """
    x0 = standard_normals(config.seed, config.n_samples, field.dim)
    ref = integrate(field, x0, config)
    gap = np.linalg.norm(perturbed(ref.states) - field(ref.states), axis=-1)
    return float(gap.max() if kind == "uniform" else gap.mean(axis=1).max())


def random_parameter_perturbation(field: LinearField, d_e: float, seed: int) -> LinearField:
    """Perturb every entry of ``A`` and ``c`` along a seeded random direction.

    The perturbation vector has norm exactly ``sqrt(p * d_e)`` with
    ``p = d*d + d`` parameters, i.e. it realises the mean-square budget of
    ``p`` independent errors of variance ``d_e`` deterministically.
    """
    d = field.dim
    p = d * d + d
    z = standard_normals(seed, 1, p)[0]
    z *= math.sqrt(p * d_e) / np.linalg.norm(z)
    return field.perturbed(z[: d * d].reshape(d, d), z[d * d:])


def verify_gronwall(
    field: LinearField,
    perturbed: LinearField,
    config: SimConfig,
    kind: str = "uniform",
    *,
    params: LipschitzParams | None = None,
    delta: float | None = None,
    d_e: float | None = None,
    gap: float | None = None,
    tolerance: float | None = None,
) -> TrajectoryErrorReport:
    """Compare measured trajectory error with the Grönwall envelope.

    ``kind="uniform"`` checks the ensemble maximum, ``kind="ot-mean"`` the
    ensemble mean. The velocity gap is, in order of precedence, ``gap``;
    ``params.L_theta_inf * delta`` (uniform) or
    ``params.L_theta_2 * sqrt(params.p * d_e)`` (ot-mean); or, failing both,
    measured along the reference flow. ``L_x`` comes from ``params`` when
    given, else from the spectral norm of the perturbed field. The check
    passes when the envelope minus the error never drops below
    ``-tolerance`` (default ``10 * step``).
    """
    if kind not in ("uniform", "ot-mean"):
        raise ValueError(f"kind must be 'uniform' or 'ot-mean', got {kind!r}")
    L_x = params.L_x if params is not None else spectral_norm(perturbed.A)
    if gap is None:
        if params is not None and kind == "uniform" and delta is not None:
            gap = params.L_theta_inf * delta
        elif params is not None and kind == "ot-mean" and d_e is not None:
            gap = params.L_theta_2 * math.sqrt(params.p * d_e)
        else:
            gap = velocity_gap(field, perturbed, config, kind)
    if tolerance is None:
        tolerance = 10.0 * config.step
    report = paired_error(field, perturbed, config)
    measured = report.max_error if kind == "uniform" else report.mean_error
    envelope = np.asarray(gronwall_envelope(report.time_grid, gap, L_x))
    min_margin = float(np.min(envelope - measured))
    return report._replace(
        envelope=envelope,
        min_margin=min_margin,
        satisfied=bool(min_margin >= -tolerance),
    )
