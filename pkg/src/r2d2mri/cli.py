"""Command-line front door wiring the modules into reproducible pipelines.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, bad values),
3 numerical failure (non-convergence, non-finite results). Every subcommand
is a pure function of its flags, seed, and input files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import SCHEMA_VERSION, __version__
from .core import (
    DataError,
    NumericalError,
    read_complex,
    read_image,
    rng_stream,
    write_complex,
    write_image,
)
from .dcf import attach_weights, pipe_menon
from .engine import (
    PlanCache,
    TrainConfig,
    load_series,
    make_dc_context,
    reconstruct,
    save_series,
    stream_id,
    train_series,
)
from .metrics import EvalReport, ProblemResult, logsnr, snr
from .nufft import compute_psf, plan as make_plan
from .sim import PhantomSpec, back_project, make_phantom, noise_scale, simulate
from .traj import acceleration_factor, radial_trajectory, read_csv, write_csv

_S_SIM_NOISE = 8
_S_BENCH_DRAW = 9
_S_BENCH_NOISE = 10
_S_BENCH_PHANTOM = 11


def _cmd_traj(args) -> int:
    write_csv(args.out, radial_trajectory(args.spokes, args.radius))
    return 0


def _weighted_plan(traj_path, size: int, iters: int):
    t = read_csv(traj_path)
    p = make_plan(t.points, size, size)
    if iters > 0:
        p = attach_weights(p, pipe_menon(p, iters).d)
    return t, p


def _cmd_dcf(args) -> int:
    t = read_csv(args.traj)
    p = make_plan(t.points, args.size, args.size)
    d = pipe_menon(p, args.iters).d
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("index,weight\n")
        for i, w in enumerate(d):
            f.write(f"{i},{w:.17g}\n")
    return 0


def _cmd_simulate(args) -> int:
    gt = read_image(args.gt)
    h, w = gt.shape
    if h != w:
        raise DataError(f"simulate expects a square image, got {h}x{w}")
    radius = args.radius if args.radius is not None else h
    t = radial_trajectory(args.spokes, radius)
    p = make_plan(t.points, h, w)
    p = attach_weights(p, pipe_menon(p, args.dcf_iters).d)
    rng = rng_stream(args.seed, stream_id(_S_SIM_NOISE, 0))
    meas = simulate(p, gt, args.dr, rng, seed=args.seed)
    write_complex(args.out, meas.y)
    sidecar = {
        "tau": meas.tau,
        "n_spokes": args.spokes,
        "radius": radius,
        "dr": args.dr,
        "seed": args.seed,
        "dcf_iters": args.dcf_iters,
    }
    with open(str(args.out) + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


def load_train_config(path) -> dict:
    """RunConfig JSON: schema-checked, unknown fields rejected."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON") from exc
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    schema = doc.pop("schema", None)
    if schema != SCHEMA_VERSION:
        raise DataError(f"{path}: schema {schema!r} not supported (expected {SCHEMA_VERSION})")
    unknown = set(doc) - _TRAIN_FIELDS
    if unknown:
        raise DataError(f"{path}: unknown config fields {sorted(unknown)}")
    return doc


def _cmd_train(args) -> int:
    fields = load_train_config(args.config) if args.config else {}
    for name in _TRAIN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value  # flags win over the config file
    config = TrainConfig(**fields)
    series = train_series(config)
    save_series(args.out, series)
    val = series.history["val_snr_db"]
    for i, v in enumerate(val, start=1):
        print(f"stage {i}: validation SNR {v:.2f} dB")
    print(f"series written to {args.out}")
    return 0


def _cmd_reconstruct(args) -> int:
    series = load_series(args.series)
    if args.dc != series.dc_mode:
        raise DataError(
            f"--dc {args.dc} does not match the series dc mode {series.dc_mode!r}"
        )
    size = args.size
    if size is None:
        size = series.history.get("config", {}).get("size")
        if size is None:
            raise DataError("series metadata has no size; pass --size")
    y = read_complex(args.meas)
    t, p = _weighted_plan(args.traj, int(size), args.dcf_iters)
    if y.shape[0] != t.n_points:
        raise DataError(
            f"measurement length {y.shape[0]} does not match trajectory M={t.n_points}"
        )
    x_d = back_project(p, y)
    trace = reconstruct(series, x_d, make_dc_context(args.dc, p))
    write_image(args.out, trace.final)
    doc = {
        "iterations": series.iterations,
        "residual_norms": trace.residual_norms,
        "alphas": trace.alphas,
    }
    if args.gt is not None:
        gt = read_image(args.gt)
        doc["snr_db"] = [snr(x, gt) for x in trace.iterates]
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def _cmd_evaluate(args) -> int:
    recon = read_image(args.recon)
    gt = read_image(args.gt)
    doc = {
        "snr_db": snr(recon, gt),
        "logsnr_db": logsnr(recon, gt, args.dr),
        "dr": args.dr,
    }
    with open(args.json, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"SNR {doc['snr_db']:.2f} dB, logSNR {doc['logsnr_db']:.2f} dB")
    return 0


def _cmd_psf(args) -> int:
    _, p = _weighted_plan(args.traj, args.size, args.iters)
    write_image(args.out, compute_psf(p))
    return 0


def _cmd_bench(args) -> int:
    series = load_series(args.series)
    sizes = [int(s) for s in args.sizes.split(",")]
    spoke_counts = [int(s) for s in args.spokes.split(",")]
    if not sizes or not spoke_counts or args.problems_per_spoke < 1:
        raise DataError("bench needs at least one size, one spoke count, one problem")
    cache = PlanCache(dcf_iters=args.dcf_iters)
    contexts = {}
    lines = ["n_spokes,af,mean_snr,mean_logsnr,n_problems"]
    for size in sizes:
        gts = [
            make_phantom(
                PhantomSpec(
                    kind="random-ellipses",
                    size=size,
                    seed=(args.seed << 20) ^ stream_id(_S_BENCH_PHANTOM, g),
                )
            )
            for g in range(args.problems_per_spoke)
        ]
        report = EvalReport()
        for n_spokes in spoke_counts:
            radius = size
            p, scale = cache.get(size, n_spokes, radius)
            if id(p) not in contexts:
                contexts[id(p)] = make_dc_context(series.dc_mode, p)
            for g, gt in enumerate(gts):
                index = (size * 1_000_000) + (n_spokes * 1_000) + g
                draw = rng_stream(args.seed, stream_id(_S_BENCH_DRAW, index))
                dr = float(np.exp(draw.uniform(math.log(10.0), math.log(1e4))))
                noise = rng_stream(args.seed, stream_id(_S_BENCH_NOISE, index))
                meas = simulate(p, gt, dr, noise, scale=scale)
                x_d = back_project(p, meas.y)
                trace = reconstruct(series, x_d, contexts[id(p)])
                report.add(
                    ProblemResult(
                        n_spokes=n_spokes,
                        dr=dr,
                        snr_db=snr(trace.final, gt),
                        logsnr_db=logsnr(trace.final, gt, dr),
                        residual_norms=trace.residual_norms,
                    )
                )
        for n_spokes, agg in report.aggregate().items():
            af = acceleration_factor(n_spokes, size * size)
            lines.append(
                f"{n_spokes},{af:.17g},{agg['mean_snr']:.17g},"
                f"{agg['mean_logsnr']:.17g},{agg['n_problems']}"
            )
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="r2d2mri", description="radial MRI residual-series reconstruction"
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"r2d2mri {__version__} (schema {SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("traj", help="write a golden-angle radial trajectory CSV")
    s.add_argument("--spokes", type=int, required=True)
    s.add_argument("--radius", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_traj)

    s = sub.add_parser("dcf", help="compute density-compensation weights")
    s.add_argument("--traj", required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_dcf)

    s = sub.add_parser("simulate", help="simulate noisy k-space measurements")
    s.add_argument("--gt", required=True)
    s.add_argument("--spokes", type=int, required=True)
    s.add_argument("--dr", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--radius", type=int, default=None)
    s.add_argument("--dcf-iters", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("train", help="train a model series (JSON config + overrides)")
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--size", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--val-samples", dest="val_samples", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--spokes-min", dest="spokes_min", type=int)
    s.add_argument("--spokes-max", dest="spokes_max", type=int)
    s.add_argument("--dr-min", dest="dr_min", type=float)
    s.add_argument("--dr-max", dest="dr_max", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--dc", dest="dc_mode", choices=["exact", "fft"])
    s.add_argument("--radius", type=int)
    s.add_argument("--base-channels", dest="base_channels", type=int)
    s.add_argument("--depth", type=int)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("reconstruct", help="run the series on measurements")
    s.add_argument("--series", required=True)
    s.add_argument("--meas", required=True)
    s.add_argument("--traj", required=True)
    s.add_argument("--dc", choices=["exact", "fft"], required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", default=None)
    s.add_argument("--gt", default=None)
    s.add_argument("--size", type=int, default=None)
    s.add_argument("--dcf-iters", type=int, default=10)
    s.set_defaults(func=_cmd_reconstruct)

    s = sub.add_parser("evaluate", help="SNR / logSNR of a reconstruction")
    s.add_argument("--recon", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--dr", type=float, required=True)
    s.add_argument("--json", required=True)
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("bench", help="spoke-count sweep, CSV of mean SNR/logSNR")
    s.add_argument("--series", required=True)
    s.add_argument("--sizes", required=True, help="comma-separated image sizes")
    s.add_argument("--spokes", required=True, help="comma-separated spoke counts")
    s.add_argument("--problems-per-spoke", dest="problems_per_spoke", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dcf-iters", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_bench)

    s = sub.add_parser("psf", help="write the point-spread-function image")
    s.add_argument("--traj", required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_psf)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if (exc.code or 0) == 0 else 1
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def app() -> None:
    sys.exit(main())


if __name__ == "__main__":
    app()
