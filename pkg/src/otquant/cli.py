"""Command-line front end.

Exit codes: 0 success, 1 unexpected failure, 2 invalid input,
3 envelope verification failed (``simulate`` only).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, flow_sim, metrics
from .quantizers import QuantMethodSpec, canonical_method, quantize_tensor
from .tensor_store import (
    FormatError, QuantArtifact, TensorContainer, dequantize, read_artifact,
    read_tensor, write_artifact, write_tensor,
)

EXIT_OK, EXIT_FAILURE, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2, 3

SWEEP_COLUMNS = [
    "layer_id", "method", "bits", "mse", "w2", "psnr_db", "ssim",
    "occupancy_entropy_bits", "fid_bound",
]
BOUNDS_COLUMNS = [
    "bits", "c_u", "c_e", "rho", "tail_ratio", "ce_over_cu",
    "fid_bound_uniform", "fid_bound_ot", "delta_u", "d_e",
]
SIMULATE_COLUMNS = ["t", "max_error", "mean_error", "envelope", "margin"]
NA = "na"


class UsageError(ValueError):
    pass


# -- small parsers ----------------------------------------------------------


def read_kv_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()], dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def parse_matrix(text: str) -> np.ndarray:
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise UsageError(f"bad matrix {text!r}; rows are separated by ';'")
    return np.vstack(rows)


def parse_bits_range(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = (int(x) for x in text.split("..", 1))
        else:
            a = b = int(text)
    except ValueError as exc:
        raise UsageError(f"bits range must look like 'a..b', got {text!r}") from exc
    if not 1 <= a <= b <= 16:
        raise UsageError(f"bits range {text!r} must satisfy 1 <= a <= b <= 16")
    return list(range(a, b + 1))


def parse_density(text: str) -> bounds.DensityModel:
    """``gaussian:sigma=1``, ``laplace:beta=0.7``, ``empirical:alpha=3.2`` (or ``kind:value``)."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    value = arg.split("=", 1)[-1].strip() if arg else "1"
    try:
        return bounds.DensityModel(kind, float(value))
    except ValueError as exc:
        raise UsageError(f"bad density spec {text!r}: {exc}") from exc


def parse_params(kv: dict[str, str], **defaults) -> bounds.LipschitzParams:
    fields = {"L_x": float, "L_theta_inf": float, "L_theta_2": float, "L_phi": float, "p": int, "T": float}
    values = dict(defaults)
    try:
        for key, conv in fields.items():
            if key in kv:
                values[key] = conv(kv[key])
        return bounds.LipschitzParams(**values)
    except ValueError as exc:
        raise UsageError(f"bad params: {exc}") from exc


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


# -- shared measurement -----------------------------------------------------


def artifact_w2(t: TensorContainer, art: QuantArtifact) -> float:
    """Count-weighted root of the per-channel squared W2."""
    if t.size == 0:
        return 0.0
    rows = t.data.astype(np.float64).reshape(art.channels, -1)
    sq = [
        metrics.quantization_w2(row, book, idx) ** 2 * row.size
        for row, book, idx in zip(rows, art.codebooks, art.assignments)
        if row.size
    ]
    return math.sqrt(math.fsum(sq) / t.size)


def artifact_entropy(art: QuantArtifact) -> float:
    total = sum(a.size for a in art.assignments)
    if total == 0:
        return 0.0
    return math.fsum(
        metrics.codebook_occupancy(a, art.levels).entropy_bits * a.size for a in art.assignments
    ) / total


def sweep_row(layer_id, t: TensorContainer, method: str, b: int, per_channel: bool,
              params: bounds.LipschitzParams | None):
    art = quantize_tensor(t, QuantMethodSpec(method, b), per_channel=per_channel)
    ref = t.to_array().astype(np.float64)
    rec = dequantize(art).to_array()
    psnr_db = ssim_val = NA
    if ref.ndim in (2, 3) and ref.size:
        peak = float(ref.max() - ref.min()) or float(np.abs(ref).max()) or 1.0
        psnr_db = metrics.psnr(ref, rec, peak)
        ssim_val = metrics.ssim(ref, rec, peak)
    fid = NA
    if t.size:
        p = params or bounds.LipschitzParams(p=t.size)
        if art.method == "uniform":
            fid = bounds.fid_bound_uniform(p, float(art.range_meta.max()), b).bound
        elif art.method == "ot-equal-mass" and t.size >= 100:
            alpha = metrics.alpha_empirical(t.data)
            if not alpha.degenerate:
                fid = bounds.fid_bound_ot(p, alpha.value, b).bound
    return [
        layer_id, art.method, b, metrics.mse(ref, rec), artifact_w2(t, art),
        psnr_db, ssim_val, artifact_entropy(art), fid,
    ]


# -- commands ---------------------------------------------------------------


def cmd_quantize(args) -> int:
    spec = QuantMethodSpec(
        args.method, args.bits, range_rule=args.range_rule, k=args.k,
        breakpoint_quantile=args.breakpoint_quantile,
    )
    t = read_tensor(args.input)
    art = quantize_tensor(t, spec, per_channel=args.per_channel)
    write_artifact(art, args.output)
    err = metrics.mse(t.data, dequantize(art).data)
    print(f"method={art.method} bits={art.bits} mse={fmt(err)} w2={fmt(artifact_w2(t, art))}")
    return EXIT_OK


def cmd_dequantize(args) -> int:
    write_tensor(dequantize(read_artifact(args.input)), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    methods = [canonical_method(m) for m in args.methods.split(",") if m.strip()]
    bit_list = parse_bits_range(args.bits_range)
    for m in methods:
        QuantMethodSpec(m, bit_list[0])  # validates method/bit combinations early
    params_kv = read_kv_file(args.params) if args.params else None
    layers = [(Path(p).stem, read_tensor(p)) for p in args.inputs]
    tasks = []
    for layer_id, t in layers:
        params = parse_params(params_kv, p=max(t.size, 1)) if params_kv is not None else None
        tasks += [(layer_id, t, m, b, args.per_channel, params) for m in methods for b in bit_list]
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        rows = list(pool.map(lambda task: sweep_row(*task), tasks))
    write_csv(args.out, SWEEP_COLUMNS, rows)
    return EXIT_OK


def cmd_bounds(args) -> int:
    kv = read_kv_file(args.params)
    params = parse_params(kv)
    density = parse_density(args.density)
    try:
        if "R" in kv:
            R = float(kv["R"])
        elif "k" in kv and density.sigma is not None:
            R = float(kv["k"]) * density.sigma
        else:
            raise UsageError("params need R, or k with a gaussian/laplace density")
    except ValueError as exc:
        raise UsageError(f"bad R: {exc}") from exc
    rows = []
    for b in parse_bits_range(args.bits_range):
        rep = bounds.bound_report(params, R, density, b)
        rows.append([
            b, rep.c_u, rep.c_e, rep.rho, rep.tail_ratio, rep.c_e / rep.c_u,
            rep.fid_bound_uniform, rep.fid_bound_ot, rep.delta_u, rep.d_e,
        ])
    write_csv(args.out, BOUNDS_COLUMNS, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    field_kv = read_kv_file(args.field)
    A = parse_matrix(field_kv["A"]) if "A" in field_kv else None
    if A is None:
        raise UsageError("field file needs an 'A' matrix")
    c = parse_vector(field_kv["c"]) if "c" in field_kv else np.zeros(A.shape[0])
    field = flow_sim.LinearField(A, c)

    pert_kv = read_kv_file(args.perturb)
    dA = parse_matrix(pert_kv["dA"]) if "dA" in pert_kv else None
    dc = parse_vector(pert_kv["dc"]) if "dc" in pert_kv else None
    perturbed = field.perturbed(dA, dc)
    kind = pert_kv.get("kind", "uniform")

    cfg_kv = read_kv_file(args.config)
    seed = cfg_kv.get("seed", args.seed)
    if seed is None:
        raise UsageError("simulate needs a seed (config 'seed' or --seed)")
    try:
        config = flow_sim.SimConfig(
            T=float(cfg_kv.get("T", 1.0)), step=float(cfg_kv.get("step", 1e-3)),
            integrator=cfg_kv.get("integrator", "rk4"),
            n_samples=int(cfg_kv.get("n_samples", 64)), seed=int(seed),
        )
        config.n_steps
        L_theta = float(pert_kv.get("L_theta_inf", 1.0))
        L_x = float(pert_kv["L_x"]) if "L_x" in pert_kv else flow_sim.spectral_norm(perturbed.A)
        params = bounds.LipschitzParams(L_x=L_x, L_theta_inf=L_theta, L_theta_2=L_theta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if "delta_u" in pert_kv:
        delta = float(pert_kv["delta_u"])
    else:
        delta = flow_sim.velocity_gap(field, perturbed, config, kind)
    report = flow_sim.verify_gronwall(
        field, perturbed, config, kind, params=params, gap=L_theta * delta,
    )
    measured = report.max_error if kind == "uniform" else report.mean_error
    rows = zip(report.time_grid, report.max_error, report.mean_error, report.envelope,
               report.envelope - measured)
    write_csv(args.out, SIMULATE_COLUMNS, rows)
    if report.diverged:
        print("simulation diverged", file=sys.stderr)
        return EXIT_FAILURE
    if not report.satisfied:
        print(f"envelope violated: min margin {report.min_margin:.6g}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for randomized commands")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    parser = argparse.ArgumentParser(prog="otquant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", parents=[common], help="quantize a WTQ1 tensor into a WTQA artifact")
    q.add_argument("input")
    q.add_argument("output")
    q.add_argument("--method", required=True, help="uniform, ot, pwl or log2")
    q.add_argument("--bits", type=int, required=True)
    q.add_argument("--per-channel", action="store_true", help="one codebook per slice of axis 0")
    q.add_argument("--range-rule", default="absmax", choices=["absmax", "ksigma"])
    q.add_argument("--k", type=float, default=10.0, help="k for the ksigma range rule")
    q.add_argument("--breakpoint-quantile", type=float, default=0.99)
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("dequantize", parents=[common], help="reconstruct a binary64 tensor")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_dequantize)

    s = sub.add_parser("sweep", parents=[common], help="methods x bit-widths fidelity table")
    s.add_argument("inputs", nargs="+", help="one WTQ1 file per layer")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--methods", default="uniform,ot")
    s.add_argument("--bits-range", default="2..8")
    s.add_argument("--per-channel", action="store_true")
    s.add_argument("--params", help="key=value Lipschitz constants for the fid_bound column")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bounds", parents=[common], help="evaluate the closed-form bounds")
    b.add_argument("out")
    b.add_argument("--params", required=True)
    b.add_argument("--density", default="gaussian:sigma=1")
    b.add_argument("--bits-range", default="2..8")
    b.set_defaults(func=cmd_bounds)

    m = sub.add_parser("simulate", parents=[common], help="check the Grönwall envelope on a linear flow")
    m.add_argument("out")
    m.add_argument("--field", required=True)
    m.add_argument("--perturb", required=True)
    m.add_argument("--config", required=True)
    m.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, ValueError, KeyError, OSError) as exc:
        print(f"otquant {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"otquant {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
