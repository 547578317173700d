"""Global-to-local reconstruction loop, evaluation and ablation tables.

Each outer level runs the global prior's predictor/corrector on every frame,
then (in GLDM mode) the local prior's, then a Casorati low-rank projection and
data consistency over the whole series.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import Domain, DynamicSeries, SamplingMask
from .errors import MissingModel, ModelRoleMismatch, ShapeMismatch
from .metrics import FrameMetrics, MetricConfig, frame_metrics, psnr, mse
from .optimizer import DCConfig, LowRankConfig, data_consistency, lowrank_project
from .prior import NoiseSchedule, Role, ScoreModel, kspace_scale
from .sampler import Hook, SamplerConfig, Site, initial_state, sample_level
from .transforms import ForwardOperator, apply_adjoint, ifft2c

RECON_SCHEDULE = NoiseSchedule(0.01, 4.0, 300)


class Mode(str, Enum):
    GLDM = "gldm"
    GM_ONLY = "gm"


@dataclass(frozen=True)
class ReconConfig:
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(300, 1, 0.075, RECON_SCHEDULE))
    lowrank: LowRankConfig | None = field(default_factory=LowRankConfig)  # None disables LR
    lam: float = math.inf
    mode: Mode = Mode.GLDM
    seed: int = 0
    lowrank_from: int | None = None  # apply LR only at levels t <= lowrank_from; None -> every level


@dataclass(frozen=True)
class TraceEntry:
    level: int  # T for the initial state
    sigma: float
    psnr: float
    mse: float


@dataclass
class ReconReport:
    frames: list[FrameMetrics] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)
    wall_clock: float = 0.0

    def average(self, key: str) -> float:
        return float(np.mean([getattr(f, key) for f in self.frames]))

    @property
    def psnr(self) -> float:
        return self.average("psnr")

    @property
    def ssim(self) -> float:
        return self.average("ssim")

    @property
    def mse(self) -> float:
        return self.average("mse")


def _series_psnr_mse(k: np.ndarray, truth_mag: np.ndarray) -> tuple[float, float]:
    r = np.abs(ifft2c(k)) / truth_mag.max()
    t = truth_mag / truth_mag.max()
    cfg = MetricConfig(data_range=1.0)
    return (
        float(np.mean([psnr(r[i], t[i], cfg) for i in range(len(t))])),
        float(np.mean([mse(r[i], t[i]) for i in range(len(t))])),
    )


def _check_role(model, expected: Role, name: str) -> None:
    role = getattr(model, "role", None)
    if role is not None and Role(role) != expected:
        raise ModelRoleMismatch(f"{name} model has role {Role(role).value}, expected {expected.value}")


def _truth_image(truth: DynamicSeries | np.ndarray) -> np.ndarray:
    if isinstance(truth, DynamicSeries):
        return truth.array if truth.domain == Domain.IMAGE else ifft2c(truth.array)
    return np.asarray(truth)


def reconstruct(
    y: DynamicSeries,
    mask: SamplingMask,
    gm: ScoreModel,
    lm: ScoreModel | None,
    config: ReconConfig = ReconConfig(),
    truth: DynamicSeries | np.ndarray | None = None,
    hook: Hook | None = None,
) -> tuple[DynamicSeries, ReconReport]:
    """Reconstruct under-sampled k-space ``y``.

    When ``truth`` (image or k-space) is given the report carries per-frame
    metrics and a per-level trace of mean PSNR/MSE.  ``hook(event, level, info)``
    sees every GM/LM predictor and corrector step plus the LR and DC steps.
    """
    if y.domain != Domain.KSPACE:
        raise ShapeMismatch("y must be a k-space series")
    mask.check_matches(y)
    mode = Mode(config.mode)
    if gm is None:
        raise MissingModel("a global model is required")
    _check_role(gm, Role.GLOBAL, "gm")
    if mode == Mode.GLDM:
        if lm is None:
            raise MissingModel("GLDM mode needs a local model")
        _check_role(lm, Role.LOCAL, "lm")
    truth_mag = None
    if truth is not None:
        truth_mag = np.abs(_truth_image(truth))
        if truth_mag.shape != y.shape:
            raise ShapeMismatch(f"truth {truth_mag.shape} vs y {y.shape}")

    start = time.perf_counter()
    sc = config.sampler
    sc = SamplerConfig(sc.T, sc.J, sc.r, sc.schedule, config.seed)
    sigmas = sc.sigmas
    scale = np.array([kspace_scale(f) for f in y.array])[:, None, None]
    ys = y.array * scale
    dc = DCConfig(config.lam, mask, ys)
    report = ReconReport()

    def record(level, sigma, x):
        if truth_mag is not None:
            p, e = _series_psnr_mse(x / scale, truth_mag)
            report.trace.append(TraceEntry(level, float(sigma), p, e))

    x = initial_state(y.shape, sc)
    record(sc.T, sigmas[-1], x)
    for t in reversed(range(sc.T)):
        x = sample_level(x, gm, t, sc, site_pred=Site.GM_PRED, site_corr=Site.GM_CORR, hook=hook, tag="GM")
        if mode == Mode.GLDM:
            x = sample_level(x, lm, t, sc, site_pred=Site.LM_PRED, site_corr=Site.LM_CORR, hook=hook, tag="LM")
        if config.lowrank is not None and (config.lowrank_from is None or t <= config.lowrank_from):
            x = lowrank_project(x, config.lowrank)
            if hook:
                hook("LR", t, {"sigma": sigmas[t]})
        x = data_consistency(x, dc)
        if hook:
            hook("DC", t, {"sigma": sigmas[t]})
        record(t, sigmas[t], x)
    x = data_consistency(x, DCConfig(math.inf, mask, ys))
    out = DynamicSeries.from_array((x / scale).astype(np.complex64), Domain.KSPACE)
    if truth_mag is not None:
        report.frames = frame_metrics(ifft2c(out.array), truth_mag)
    report.wall_clock = time.perf_counter() - start
    return out, report


def zero_filled(y: DynamicSeries, mask: SamplingMask) -> DynamicSeries:
    """Adjoint reconstruction of single-coil data (image domain)."""
    return apply_adjoint(ForwardOperator.single_coil(mask), y)


def evaluate_run(recon: DynamicSeries | np.ndarray, truth: DynamicSeries | np.ndarray, series: str = "0") -> ReconReport:
    """Per-frame magnitude metrics; k-space inputs are transformed first."""
    r, t = _truth_image(recon), _truth_image(truth)
    if r.shape != t.shape:
        raise ShapeMismatch(f"recon {r.shape} vs truth {t.shape}")
    return ReconReport(frame_metrics(r, t, series))


def write_trace_csv(trace: Sequence[TraceEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "sigma", "psnr", "mse"])
        for e in trace:
            w.writerow([e.level, repr(e.sigma), repr(e.psnr), repr(e.mse)])


def read_trace_csv(path) -> list[TraceEntry]:
    with open(path, newline="") as fh:
        return [
            TraceEntry(int(r["level"]), float(r["sigma"]), float(r["psnr"]), float(r["mse"]))
            for r in csv.DictReader(fh)
        ]


def trace_converges(trace: Sequence[TraceEntry], tail: float = 0.2, slack: float = 0.5) -> bool:
    """PSNR over the final ``tail`` of levels never drops more than ``slack`` dB below its running max."""
    vals = [e.psnr for e in trace if e.level < trace[0].level]
    n = max(1, int(round(tail * len(vals))))
    tail_vals = np.asarray(vals[-n:])
    return bool(np.all(tail_vals >= np.maximum.accumulate(tail_vals) - slack))


# ---------------------------------------------------------------- ablation


@dataclass(frozen=True)
class Variant:
    """One row of an ablation table."""

    name: str
    mode: Mode
    gm: ScoreModel | None
    lm: ScoreModel | None = None


@dataclass(frozen=True)
class Case:
    y: DynamicSeries
    mask: SamplingMask
    truth: DynamicSeries | np.ndarray
    series_id: str = "0"


def ablate(
    cases: Sequence[Case],
    variants: Sequence[Variant],
    config: ReconConfig = ReconConfig(),
    path=None,
    progress: Callable[[str, str, ReconReport], None] | None = None,
) -> dict[str, list[ReconReport]]:
    """Reconstruct every case with every variant under the same seed and masks.

    Returns the reports per variant and, when ``path`` is given, writes a
    table of mean and standard deviation over cases.
    """
    for v in variants:
        if v.gm is None or (Mode(v.mode) == Mode.GLDM and v.lm is None):
            raise MissingModel(f"variant {v.name!r} is missing a model")
    results: dict[str, list[ReconReport]] = {}
    for v in variants:
        cfg = replace(config, mode=Mode(v.mode))
        reports = []
        for c in cases:
            _, rep = reconstruct(c.y, c.mask, v.gm, v.lm, cfg, truth=c.truth)
            rep.frames = [FrameMetrics(c.series_id, f.frame, f.psnr, f.ssim, f.mse) for f in rep.frames]
            reports.append(rep)
            if progress:
                progress(v.name, c.series_id, rep)
        results[v.name] = reports
    if path is not None:
        write_ablation_csv(results, path)
    return results


def summarize(reports: Sequence[ReconReport]) -> dict[str, float]:
    out = {}
    for key, factor in (("psnr", 1.0), ("ssim", 1.0), ("mse", 1e4)):
        vals = np.array([r.average(key) for r in reports]) * factor
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_std"] = float(vals.std())
    return out


def write_ablation_csv(results: Mapping[str, Sequence[ReconReport]], path) -> None:
    """Columns: variant, n, then mean and std of psnr, ssim and mse (x1e-4)."""
    cols = ["psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "mse_mean", "mse_std"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "n"] + [c.replace("mse", "mse_x1e4") for c in cols])
        for name, reports in results.items():
            s = summarize(reports)
            w.writerow([name, len(reports)] + [f"{s[c]:.6f}" for c in cols])
