"""Sampling masks, noisy under-sampling and time-interleaved frame merging.

Phase encoding runs along ``y`` (axis -2); every acquired line is read out
fully along ``x``.  Training sets for the score priors are built by merging
the under-sampled frames of a window of ``R`` adjacent frames into one fully
encoded frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Domain, DynamicSeries, SamplingMask, read_series, write_series
from .errors import (
    AmbiguousContributor,
    IncompleteCoverage,
    InfeasibleSpec,
    InfeasibleWindow,
    ShapeMismatch,
)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))  # ~111.25 degrees mod pi
ACCEL_TOLERANCE = 0.10


class MaskFamily(str, Enum):
    INTERLEAVED_UNIFORM = "interleaved-uniform"
    INTERLEAVED_RANDOM = "interleaved-random"
    RADIAL = "radial"
    CARTESIAN = "cartesian"


class OffsetMode(str, Enum):
    UNIFORM = "uniform"
    RANDOM = "random"


class WindowMode(str, Enum):
    SLIDING_CIRCULAR = "sliding"
    DISJOINT = "disjoint"


def default_acs_lines(ny: int) -> int:
    """8 lines at ny=192, scaled proportionally."""
    return max(1, round(8 * ny / 192))


def acs_band(ny: int, acs_lines: int) -> slice:
    start = ny // 2 - acs_lines // 2
    return slice(start, start + acs_lines)


@dataclass(frozen=True)
class MaskSpec:
    family: MaskFamily
    accel: float
    acs_lines: int | None = None  # None -> default_acs_lines(ny)
    spokes: int | None = None  # radial only; None -> chosen to hit accel
    seed: int = 0


@dataclass(frozen=True)
class AcquisitionNoise:
    sigma_eps: float = 0.0

    def __post_init__(self):
        if not self.sigma_eps >= 0:
            raise InfeasibleSpec(f"sigma_eps must be >= 0, got {self.sigma_eps}")


@dataclass(frozen=True)
class InterleavedScheme:
    """Time-interleaved acquisition used to build a training set.

    ``acs_mode`` selects how the ACS band of a merged frame is filled:
    ``"reference"`` keeps the window's reference (centre) frame unaltered,
    ``"mean"`` averages every contributing frame.
    """

    R: int
    acs_lines: int = 8
    offset_mode: OffsetMode = OffsetMode.UNIFORM
    window_mode: WindowMode = WindowMode.SLIDING_CIRCULAR
    acs_mode: str = "reference"

    @property
    def name(self) -> str:
        return f"R{self.R}-{self.offset_mode.value}-{self.window_mode.value}-{self.acs_mode}"

    def mask_spec(self, seed: int = 0) -> MaskSpec:
        family = (
            MaskFamily.INTERLEAVED_UNIFORM
            if self.offset_mode == OffsetMode.UNIFORM
            else MaskFamily.INTERLEAVED_RANDOM
        )
        return MaskSpec(family, self.R, self.acs_lines, seed=seed)


# ---------------------------------------------------------------- masks


def _interleaved(spec: MaskSpec, nx: int, ny: int, nt: int, acs: int) -> np.ndarray:
    R = spec.accel
    if R != int(R) or R < 1:
        raise InfeasibleSpec(f"interleaved masks need an integer R >= 1, got {R}")
    R = int(R)
    if R > nt:
        raise InfeasibleSpec(f"R={R} exceeds nt={nt}")
    if acs >= ny:
        raise InfeasibleSpec(f"acs_lines={acs} must be < ny={ny}")
    lines = np.zeros((nt, ny), dtype=bool)
    y = np.arange(ny)
    if spec.family == MaskFamily.INTERLEAVED_UNIFORM:
        for t in range(nt):
            lines[t, y % R == t % R] = True
    else:
        rng = np.random.default_rng(spec.seed)
        for start in range(0, nt, R):
            block = range(start, min(start + R, nt))
            owner = rng.permutation(np.arange(ny) % R)
            for t in block:
                lines[t, owner == t - start] = True
    lines[:, acs_band(ny, acs)] = True
    return np.repeat(lines[:, :, None], nx, axis=2)


def _spoke_cells(nx: int, ny: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.75 * max(nx, ny)
    s = np.arange(-half, half + 0.25, 0.5)
    xs = np.rint(nx // 2 + s * math.cos(theta)).astype(int)
    ys = np.rint(ny // 2 + s * math.sin(theta)).astype(int)
    keep = (xs >= 0) & (xs < nx) & (ys >= 0) & (ys < ny)
    return ys[keep], xs[keep]


def _radial(nx: int, ny: int, nt: int, spokes: int) -> np.ndarray:
    mask = np.zeros((nt, ny, nx), dtype=bool)
    for t in range(nt):
        # consecutive frames continue the golden-angle sequence
        for k in range(t * spokes, (t + 1) * spokes):
            ys, xs = _spoke_cells(nx, ny, k * GOLDEN_ANGLE)
            mask[t, ys, xs] = True
    return mask


def _radial_auto(nx: int, ny: int, nt: int, accel: float) -> np.ndarray:
    target = 1.0 / accel
    prev = None
    for n in range(1, 4 * max(nx, ny)):
        cur = _radial(nx, ny, nt, n)
        if cur.mean() >= target:
            if prev is not None and abs(prev.mean() - target) < abs(cur.mean() - target):
                return prev
            return cur
        prev = cur
    return cur


def _cartesian(spec: MaskSpec, nx: int, ny: int, nt: int, acs: int) -> np.ndarray:
    n_lines = round(ny / spec.accel)
    if acs > n_lines:
        raise InfeasibleSpec(f"{acs} ACS lines exceed the budget of {n_lines} lines per frame")
    rng = np.random.default_rng(spec.seed)
    band = acs_band(ny, acs)
    outer = np.setdiff1d(np.arange(ny), np.arange(ny)[band])
    lines = np.zeros((nt, ny), dtype=bool)
    for t in range(nt):
        lines[t, band] = True
        lines[t, rng.choice(outer, n_lines - acs, replace=False)] = True
    return np.repeat(lines[:, :, None], nx, axis=2)


def make_mask(spec: MaskSpec, nx: int, ny: int, nt: int) -> SamplingMask:
    """Generate a deterministic sampling mask of shape ``(nt, ny, nx)``.

    Radial and cartesian masks are tuned to the requested acceleration and
    rejected if the realised value misses it by more than 10%.  Interleaved
    masks follow the line pattern exactly, so the ACS band lowers their
    realised acceleration below ``R``.
    """
    if not spec.accel >= 1:
        raise InfeasibleSpec(f"acceleration must be >= 1, got {spec.accel}")
    family = MaskFamily(spec.family)
    if spec.accel == 1:
        return SamplingMask(np.ones((nt, ny, nx), dtype=bool))
    acs = default_acs_lines(ny) if spec.acs_lines is None else spec.acs_lines
    if acs < 0:
        raise InfeasibleSpec("acs_lines must be non-negative")
    if family in (MaskFamily.INTERLEAVED_UNIFORM, MaskFamily.INTERLEAVED_RANDOM):
        return SamplingMask(_interleaved(spec, nx, ny, nt, acs))
    if family == MaskFamily.RADIAL:
        acq = _radial(nx, ny, nt, spec.spokes) if spec.spokes else _radial_auto(nx, ny, nt, spec.accel)
    else:
        acq = _cartesian(spec, nx, ny, nt, acs)
    mask = SamplingMask(acq)
    if spec.spokes is None and abs(mask.acceleration - spec.accel) > ACCEL_TOLERANCE * spec.accel:
        raise InfeasibleSpec(
            f"realised acceleration {mask.acceleration:.3f} misses the requested {spec.accel}"
        )
    return mask


# ---------------------------------------------------------------- simulation


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian: iid N(0, 1) real and imaginary parts."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def undersample(full_k: DynamicSeries, mask: SamplingMask, noise: AcquisitionNoise, seed: int = 0) -> DynamicSeries:
    """``mask * (full_k + eps)`` with ``eps`` complex Gaussian per acquired cell."""
    if full_k.domain != Domain.KSPACE:
        raise ShapeMismatch("undersample expects a k-space series")
    mask.check_matches(full_k)
    k = full_k.array.astype(np.complex128)
    if noise.sigma_eps > 0:
        k = k + noise.sigma_eps * complex_normal(np.random.default_rng(seed), k.shape)
    return full_k.with_array(np.where(mask.acquired, k, 0))


# ---------------------------------------------------------------- merging


def _stack(frames, masks) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(frames)
    m = np.asarray(masks, dtype=bool)
    if f.ndim != 3 or f.shape != m.shape or len(f) == 0:
        raise ShapeMismatch(f"frames {f.shape} and masks {m.shape} must be equal (n, ny, nx) stacks")
    return f, m


def _coverage(m: np.ndarray) -> np.ndarray:
    count = m.sum(axis=0)
    if np.any(count == 0):
        y, x = np.argwhere(count == 0)[0]
        raise IncompleteCoverage(f"no frame acquired cell (y={y}, x={x})")
    return count


def merge_window(frames: Sequence[np.ndarray], masks: Sequence[np.ndarray], reference: int | None = None) -> np.ndarray:
    """Merge under-sampled frames of one window into a fully encoded frame.

    Cells acquired by every frame form the ACS band; any other cell must have
    exactly one contributor, whose value is copied.  ACS cells hold the mean
    of all frames, or the value of frame ``reference`` when given.
    Unacquired cells are never read.
    """
    f, m = _stack(frames, masks)
    n = len(f)
    count = _coverage(m)
    shared = count == n
    clash = (count > 1) & ~shared
    if np.any(clash):
        y, x = np.argwhere(clash)[0]
        raise AmbiguousContributor(f"cell (y={y}, x={x}) has {count[y, x]} contributors outside the ACS band")
    merged = np.where(m, f, 0).sum(axis=0) / count
    if reference is not None:
        merged = np.where(shared, f[reference], merged)
    return merged


def merge_by_averaging(frames: Sequence[np.ndarray], masks: Sequence[np.ndarray]) -> np.ndarray:
    """Comparison scheme: every cell is the mean over the frames that acquired it."""
    f, m = _stack(frames, masks)
    count = _coverage(m)
    return np.where(m, f, 0).sum(axis=0) / count


@dataclass(frozen=True)
class MergedSample:
    kspace: np.ndarray
    series_id: str
    window_start: int
    scheme: str
    reference: int = -1  # frame the sample stands in for; -1 if unknown


def windows(nt: int, scheme: InterleavedScheme) -> list[tuple[list[int], int]]:
    """``(frame indices, reference frame)`` for every merge window."""
    R = scheme.R
    if R < 1 or R > nt:
        raise InfeasibleWindow(f"R={R} must lie in [1, nt={nt}]")
    if scheme.window_mode == WindowMode.SLIDING_CIRCULAR:
        return [([(t - R // 2 + i) % nt for i in range(R)], t) for t in range(nt)]
    return [(list(range(s, s + R)), s + R // 2) for s in range(0, nt - R + 1, R)]


def build_training_set(
    series: DynamicSeries,
    scheme: InterleavedScheme,
    mask: SamplingMask | None = None,
    merge: str = "proposed",
    series_id: str = "0",
    seed: int = 0,
) -> list[MergedSample]:
    """Under-sample ``series`` with ``mask`` and merge each window.

    ``mask`` defaults to the scheme's own interleaved pattern.  ``merge`` is
    ``"proposed"`` (:func:`merge_window`) or ``"average"``
    (:func:`merge_by_averaging`).
    """
    if series.domain != Domain.KSPACE:
        raise ShapeMismatch("build_training_set expects a k-space series")
    if scheme.R > series.nt:
        raise InfeasibleWindow(f"R={scheme.R} exceeds nt={series.nt}")
    if mask is None:
        mask = make_mask(scheme.mask_spec(seed), series.nx, series.ny, series.nt)
    mask.check_matches(series)
    k = series.array
    m = mask.acquired
    label = scheme.name if merge == "proposed" else f"{scheme.name}-avg"
    out = []
    for idx, ref in windows(series.nt, scheme):
        if merge == "proposed":
            reference = idx.index(ref) if scheme.acs_mode == "reference" else None
            merged = merge_window(k[idx], m[idx], reference)
        elif merge == "average":
            merged = merge_by_averaging(k[idx], m[idx])
        else:
            raise ValueError(f"unknown merge scheme {merge!r}")
        out.append(MergedSample(merged, series_id, idx[0], label, ref))
    return out


def write_training_set(samples: Sequence[MergedSample], outdir) -> Path:
    """Write one single-frame ``.kds`` per sample plus ``manifest.txt``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["# file\tseries_id\twindow_start\tscheme\treference"]
    for i, s in enumerate(samples):
        name = f"sample_{i:05d}.kds"
        write_series(DynamicSeries.from_array(s.kspace[None], Domain.KSPACE), outdir / name)
        lines.append(f"{name}\t{s.series_id}\t{s.window_start}\t{s.scheme}\t{s.reference}")
    manifest = outdir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_training_set(outdir) -> list[MergedSample]:
    outdir = Path(outdir)
    samples = []
    for line in (outdir / "manifest.txt").read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        name, sid, start, scheme, *rest = line.split("\t")
        k = read_series(outdir / name).array[0]
        samples.append(MergedSample(k, sid, int(start), scheme, int(rest[0]) if rest else -1))
    return samples


def merge_error(series: DynamicSeries, samples: Sequence[MergedSample]) -> float:
    """Mean relative error of merged samples against the fully sampled frames they replace."""
    k = series.array
    errs = []
    for s in samples:
        if s.reference < 0:
            raise ValueError("sample has no reference frame")
        ref = k[s.reference]
        errs.append(np.linalg.norm(s.kspace - ref) / np.linalg.norm(ref))
    if not errs:
        raise ValueError("no samples")
    return float(np.mean(errs))
