"""PSNR, SSIM and MSE on magnitude images."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import ImageTooSmall, ShapeMismatch

PSNR_CAP = 100.0


@dataclass(frozen=True)
class MetricConfig:
    data_range: float | None = None  # None -> max of the reference image
    win_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    psnr_cap: float = PSNR_CAP


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _data_range(b: np.ndarray, config: MetricConfig) -> float:
    L = float(np.max(np.abs(b))) if config.data_range is None else float(config.data_range)
    if not L > 0:
        raise ValueError(f"data_range must be positive, got {L}")
    return L


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, config: MetricConfig = MetricConfig()) -> float:
    """PSNR in dB; ``b`` is the reference when ``data_range`` is not set."""
    a, b = _pair(a, b)
    err = mse(a, b)
    if err == 0:
        return config.psnr_cap
    return 10.0 * math.log10(_data_range(b, config) ** 2 / err)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, config: MetricConfig = MetricConfig()) -> float:
    """Mean SSIM over all fully contained Gaussian windows."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < config.win_size:
        raise ImageTooSmall(f"SSIM needs 2-D images of at least {config.win_size}px, got {a.shape}")
    L = _data_range(b, config)
    c1 = (config.k1 * L) ** 2
    c2 = (config.k2 * L) ** 2
    w = gaussian_window(config.win_size, config.sigma)

    def filt(x):
        return fftconvolve(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class FrameMetrics:
    series: str
    frame: int
    psnr: float
    ssim: float
    mse: float


def frame_metrics(recon, truth, series: str = "0") -> list[FrameMetrics]:
    """Per-frame metrics on magnitudes normalised by the truth's maximum.

    ``recon`` and ``truth`` are complex or magnitude ``(nt, ny, nx)`` images.
    """
    r = np.abs(np.asarray(recon))
    t = np.abs(np.asarray(truth))
    if r.shape != t.shape:
        raise ShapeMismatch(f"recon {r.shape} vs truth {t.shape}")
    scale = float(t.max())
    if scale == 0:
        raise ValueError("truth is identically zero")
    r, t = r / scale, t / scale
    cfg = MetricConfig(data_range=1.0)
    return [
        FrameMetrics(series, i, psnr(r[i], t[i], cfg), ssim(r[i], t[i], cfg), mse(r[i], t[i]))
        for i in range(len(t))
    ]


def write_metrics_csv(rows, path) -> None:
    """Table with columns series, frame, psnr, ssim, mse_x1e4 plus an average row per series."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "frame", "psnr", "ssim", "mse_x1e4"])
        for r in rows:
            w.writerow([r.series, r.frame, f"{r.psnr:.6f}", f"{r.ssim:.6f}", f"{r.mse * 1e4:.6f}"])
        for sid in dict.fromkeys(r.series for r in rows):
            sub = [r for r in rows if r.series == sid]
            w.writerow([
                sid,
                "average",
                f"{np.mean([r.psnr for r in sub]):.6f}",
                f"{np.mean([r.ssim for r in sub]):.6f}",
                f"{np.mean([r.mse for r in sub]) * 1e4:.6f}",
            ])
