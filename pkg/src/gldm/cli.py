"""Command-line entry point: ``gldm <command> [flags]``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import errors
from .acquisition import (
    AcquisitionNoise,
    InterleavedScheme,
    MaskFamily,
    MaskSpec,
    OffsetMode,
    WindowMode,
    build_training_set,
    default_acs_lines,
    make_mask,
    read_training_set,
    undersample,
    write_training_set,
)
from .data import Domain, read_mask, read_series, write_mask, write_series
from .manifest import RunManifest, manifest_path
from .metrics import write_metrics_csv
from .optimizer import LowRankConfig
from .phantom import PhantomSpec, generate_phantom, load_config
from .pipeline import Mode, ReconConfig, evaluate_run, read_trace_csv, reconstruct, write_trace_csv
from .prior import NoiseSchedule, Role
from .sampler import SamplerConfig
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
from .transforms import to_kspace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_CONFIG_ERRORS = (
    errors.InvalidSpec,
    errors.InfeasibleSpec,
    errors.InfeasibleWindow,
    errors.ModelRoleMismatch,
    errors.MissingModel,
    errors.WindowTooLarge,
    errors.RankTooLarge,
    errors.NonPositiveSigma,
    errors.ScheduleOrderViolation,
)
_NUMERIC_ERRORS = (errors.Diverged, errors.NonFiniteValue, ArithmeticError, FloatingPointError)


class UsageError(Exception):
    pass


def _finish(args, config: dict, seeds: dict, inputs, outputs, start: float) -> None:
    man = RunManifest.build(sys.argv, config, seeds, inputs, outputs, time.perf_counter() - start)
    for out in outputs:
        man.write(manifest_path(out))


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------- commands


def cmd_generate_phantom(args) -> int:
    start = time.perf_counter()
    spec = load_config(args.config) if args.config else PhantomSpec()
    series = generate_phantom(spec)
    write_series(series, args.out)
    _finish(args, _config(args), {"seed": spec.seed}, [args.config] if args.config else [], [args.out], start)
    print(f"wrote {args.out}: {spec.nx}x{spec.ny}x{spec.nt}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    try:
        family = MaskFamily(args.mask_family)
    except ValueError:
        raise UsageError(f"unknown mask family {args.mask_family!r}; choose from {[f.value for f in MaskFamily]}")
    series = read_series(args.input)
    k = to_kspace(series) if series.domain == Domain.IMAGE else series
    mask = make_mask(MaskSpec(family, args.accel, args.acs, seed=args.seed), k.nx, k.ny, k.nt)
    y = undersample(k, mask, AcquisitionNoise(args.noise), seed=args.seed)
    write_series(y, args.out_y)
    write_mask(mask, args.out_mask)
    _finish(args, _config(args), {"seed": args.seed}, [args.input], [args.out_y, args.out_mask], start)
    print(f"realized acceleration {mask.acceleration:.4f} (fraction {mask.fraction:.4f})")
    return EXIT_OK


def cmd_build_trainset(args) -> int:
    start = time.perf_counter()
    merge = "average" if args.scheme == "avg" else "proposed"
    samples = []
    for i, path in enumerate(args.input):
        series = read_series(path)
        k = to_kspace(series) if series.domain == Domain.IMAGE else series
        acs = default_acs_lines(k.ny) if args.acs is None else args.acs
        scheme = InterleavedScheme(args.R, acs, OffsetMode(args.offset), WindowMode(args.window))
        if args.R > k.nt:
            raise errors.InfeasibleWindow(f"R={args.R} exceeds nt={k.nt}")
        try:
            samples += build_training_set(k, scheme, merge=merge, series_id=Path(path).stem, seed=args.seed + i)
        except (errors.IncompleteCoverage, errors.AmbiguousContributor) as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    write_training_set(samples, args.out)
    _finish(args, _config(args), {"seed": args.seed}, args.input, [args.out], start)
    print(f"{len(samples)} samples written to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    start = time.perf_counter()
    frames = [s.kspace for s in read_training_set(args.data)]
    schedule = NoiseSchedule(args.sigma_min, args.sigma_max, args.levels)
    cfg = TrainConfig(args.steps, args.batch_size, args.lr, channels=args.channels, depth=args.depth)

    def progress(step, loss):
        if args.verbose and (step % 100 == 0 or step == cfg.steps - 1):
            print(f"step {step} loss {loss:.3f}", file=sys.stderr)

    model = train(frames, Role(args.role), schedule, cfg, args.seed, progress)
    save_checkpoint(model, args.out)
    _finish(args, _config(args), {"seed": args.seed}, [args.data], [args.out], start)
    curve = model.loss_curve
    if curve:
        head = float(np.mean(curve[: min(100, len(curve))]))
        tail = float(np.mean(curve[-min(100, len(curve)):]))
        print(f"trained {args.role} model: loss {head:.3f} -> {tail:.3f}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    start = time.perf_counter()
    y = read_series(args.y)
    mask = read_mask(args.mask)
    gm = load_checkpoint(args.gm)
    if gm.role != Role.GLOBAL:
        raise errors.ModelRoleMismatch(f"{args.gm} holds a {gm.role.value} model, expected global")
    mode = Mode(args.mode)
    lm = None
    if mode == Mode.GLDM:
        if args.lm is None:
            raise UsageError("--lm is required with --mode gldm")
        lm = load_checkpoint(args.lm)
        if lm.role != Role.LOCAL:
            raise errors.ModelRoleMismatch(f"{args.lm} holds a {lm.role.value} model, expected local")
    truth = read_series(args.truth) if args.truth else None
    if args.trace and truth is None:
        raise UsageError("--trace needs --truth")
    lam = math.inf if args.lam.lower() in ("inf", "infinite") else float(args.lam)
    schedule = NoiseSchedule(args.sigma_min, args.sigma_max, args.T)
    config = ReconConfig(
        SamplerConfig(args.T, args.J, args.r, schedule),
        LowRankConfig(args.rank) if args.rank > 0 else None,
        lam,
        mode,
        args.seed,
    )
    events: list[tuple[int, str]] = []
    hook = (lambda ev, t, info: events.append((t, ev))) if args.events else None
    out, report = reconstruct(y, mask, gm, lm, config, truth=truth, hook=hook)
    write_series(out, args.out)
    outputs = [args.out]
    if truth is not None:
        write_metrics_csv([replace(f, series=Path(args.y).stem) for f in report.frames], args.report)
        print(f"PSNR {report.psnr:.3f} dB  SSIM {report.ssim:.4f}  MSE {report.mse * 1e4:.3f}e-4")
    else:
        with open(args.report, "w", newline="") as fh:
            csv.writer(fh).writerows([["key", "value"], ["wall_clock", f"{report.wall_clock:.3f}"]])
    outputs.append(args.report)
    if args.trace:
        write_trace_csv(report.trace, args.trace)
        outputs.append(args.trace)
    if args.events:
        with open(args.events, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "event"])
            w.writerows(events)
        outputs.append(args.events)
    inputs = [args.y, args.mask, args.gm] + [p for p in (args.lm, args.truth) if p]
    _finish(args, _config(args), {"seed": args.seed}, inputs, outputs, start)
    print(f"reconstruction written to {args.out} in {report.wall_clock:.1f}s")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    start = time.perf_counter()
    report = evaluate_run(read_series(args.recon), read_series(args.truth), Path(args.recon).stem)
    write_metrics_csv(report.frames, args.report)
    _finish(args, _config(args), {}, [args.recon, args.truth], [args.report], start)
    print(f"PSNR {report.psnr:.3f} dB  SSIM {report.ssim:.4f}  MSE {report.mse * 1e4:.3f}e-4")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    """Turn a per-level trace into an iteration-indexed table for plotting."""
    start = time.perf_counter()
    trace = read_trace_csv(args.trace)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "level", "sigma", "psnr", "mse_x1e4"])
        for i, e in enumerate(trace):
            w.writerow([i, e.level, f"{e.sigma:.6g}", f"{e.psnr:.6f}", f"{e.mse * 1e4:.6f}"])
    _finish(args, _config(args), {}, [args.trace], [args.out], start)
    print(f"{len(trace)} rows written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gldm", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-phantom", help="render a dynamic phantom to .kds")
    g.add_argument("--config", help="key=value phantom description")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_phantom)

    s = sub.add_parser("simulate", help="under-sample a series")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--mask-family", required=True)
    s.add_argument("--accel", type=float, required=True)
    s.add_argument("--acs", type=int, default=None)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-y", required=True)
    s.add_argument("--out-mask", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("build-trainset", help="merge interleaved frames into training samples")
    b.add_argument("--in", dest="input", nargs="+", required=True)
    b.add_argument("--scheme", choices=["global", "local", "avg"], required=True)
    b.add_argument("--R", type=int, required=True)
    b.add_argument("--window", choices=[m.value for m in WindowMode], default="sliding")
    b.add_argument("--offset", choices=[m.value for m in OffsetMode], default="uniform")
    b.add_argument("--acs", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_trainset)

    t = sub.add_parser("train", help="fit a score prior by denoising score matching")
    t.add_argument("--data", required=True)
    t.add_argument("--role", choices=[r.value for r in Role], required=True)
    t.add_argument("--steps", type=int, default=TrainConfig.steps)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    t.add_argument("--lr", type=float, default=TrainConfig.lr)
    t.add_argument("--channels", type=int, default=TrainConfig.channels)
    t.add_argument("--depth", type=int, default=TrainConfig.depth)
    t.add_argument("--sigma-min", type=float, default=0.01)
    t.add_argument("--sigma-max", type=float, default=378.0)
    t.add_argument("--levels", type=int, default=1000)
    t.add_argument("--verbose", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="reconstruct under-sampled k-space")
    r.add_argument("--y", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--gm", required=True)
    r.add_argument("--lm")
    r.add_argument("--mode", choices=[m.value for m in Mode], default="gldm")
    r.add_argument("--T", type=int, default=300)
    r.add_argument("--J", type=int, default=1)
    r.add_argument("--r", type=float, default=0.075)
    r.add_argument("--lambda", dest="lam", default="inf")
    r.add_argument("--rank", type=int, default=LowRankConfig.rank, help="Casorati rank; 0 disables")
    r.add_argument("--sigma-max", type=float, default=4.0)
    r.add_argument("--sigma-min", type=float, default=0.01)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--truth", help="ground truth for metrics and trace")
    r.add_argument("--trace", help="per-level PSNR/MSE CSV (needs --truth)")
    r.add_argument("--events", help="per-step event log CSV")
    r.add_argument("--out", required=True)
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="per-frame PSNR/SSIM/MSE")
    e.add_argument("--recon", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("plot-data", help="convergence table from a reconstruction trace")
    d.add_argument("--trace", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        import torch

        torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gldm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _CONFIG_ERRORS as exc:
        print(f"gldm: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"gldm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (errors.GLDMError, OSError, ValueError) as exc:
        print(f"gldm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
