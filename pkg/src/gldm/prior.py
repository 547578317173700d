"""VE-SDE noise schedule, score-model interface and denoising score matching.

A score model is anything with ``score(x, sigma)`` mapping a complex k-space
batch ``(..., ny, nx)`` and a noise level (scalar, or one per leading index)
to the score field of the same shape.  Complex data carry independent
``N(0, sigma^2)`` noise on the real and imaginary parts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np

from .acquisition import complex_normal
from .errors import EmptyBatch, NonPositiveSigma, ShapeMismatch

# Peak k-space magnitude after normalisation equals that of an image whose
# mean magnitude is MEAN_LEVEL (unitary FFT: |DC| = mean * sqrt(nx * ny)).
MEAN_LEVEL = 0.2


class Role(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric ladder ``sigma_i = sigma_min * (sigma_max / sigma_min) ** (i / (n - 1))``."""

    sigma_min: float = 0.01
    sigma_max: float = 378.0
    n_levels: int = 1000

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise NonPositiveSigma(f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}")
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")

    @property
    def levels(self) -> np.ndarray:
        i = np.arange(self.n_levels)
        out = self.sigma_min * (self.sigma_max / self.sigma_min) ** (i / (self.n_levels - 1))
        out[0], out[-1] = self.sigma_min, self.sigma_max
        return out

    def diffusion_coefficient(self, t: float) -> float:
        """``g(t) = sqrt(d sigma^2 / dt)`` for continuous ``t`` in [0, 1]."""
        sigma = self.sigma_min * (self.sigma_max / self.sigma_min) ** t
        return sigma * math.sqrt(2 * math.log(self.sigma_max / self.sigma_min))


TRAINING_SCHEDULE = NoiseSchedule(0.01, 378.0, 1000)


class ScoreModel(Protocol):
    def score(self, x: np.ndarray, sigma) -> np.ndarray: ...


def _sigma_array(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim == 0:
        return s
    return s.reshape(s.shape + (1, 1))


@dataclass(frozen=True, eq=False)
class AnalyticGaussianScore:
    """Exact score of ``N(mean, var + sigma^2)`` per cell and component."""

    mean: np.ndarray
    var: np.ndarray
    role: Role | None = None
    schedule: NoiseSchedule | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.var) <= 0):
            raise ValueError("variance must be positive")

    def score(self, x, sigma):
        s = _sigma_array(sigma)
        return (self.mean - x) / (self.var + s**2)


def score(model: ScoreModel, x, sigma) -> np.ndarray:
    """Evaluate ``model``, clamping ``sigma`` into its schedule's range."""
    x = np.asarray(x)
    sched = getattr(model, "schedule", None)
    if sched is not None:
        s = np.asarray(sigma, dtype=np.float64)
        clipped = np.clip(s, sched.sigma_min, sched.sigma_max)
        if np.any(clipped != s):
            warnings.warn("sigma outside the model's schedule was clamped", RuntimeWarning, stacklevel=2)
        sigma = clipped
    out = model.score(x, sigma)
    if out.shape != x.shape:
        raise ShapeMismatch(f"score shape {out.shape} != input shape {x.shape}")
    return out


def perturb(sample, sigma: float, rng: np.random.Generator | int | None = None, z=None):
    """``sample + sigma * z`` together with the conditional score ``-z / sigma``."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    sample = np.asarray(sample)
    if z is None:
        z = complex_normal(np.random.default_rng(rng), sample.shape)
    return sample + sigma * z, -z / sigma


def draw_perturbation(n: int, shape, schedule: NoiseSchedule, seed: int):
    """Noise levels and standard complex noise used by :func:`dsm_loss`."""
    rng = np.random.default_rng(seed)
    sigmas = schedule.levels[rng.integers(0, schedule.n_levels, n)]
    z = complex_normal(rng, (n,) + tuple(shape))
    return sigmas, z


def dsm_loss(model: ScoreModel, batch, schedule: NoiseSchedule, seed: int = 0) -> float:
    """Mean over the batch of ``sigma^2 * ||S(x + sigma z, sigma) + z / sigma||^2``.

    The squared norm sums real and imaginary parts over all cells, so a model
    returning zeros scores ``2 * nx * ny`` per sample in expectation.
    """
    batch = np.asarray(batch)
    if batch.ndim == 2:
        batch = batch[None]
    if batch.shape[0] == 0:
        raise EmptyBatch("dsm_loss needs at least one sample")
    sigmas, z = draw_perturbation(batch.shape[0], batch.shape[1:], schedule, seed)
    sig = sigmas[:, None, None]
    s = model.score(batch + sig * z, sigmas)
    resid = sig * s + z
    per_sample = np.sum(resid.real**2 + resid.imag**2, axis=(-2, -1))
    return float(np.mean(per_sample))


def kspace_scale(frame) -> float:
    """Multiplier bringing a k-space frame to the normalised dynamic range."""
    frame = np.asarray(frame)
    peak = float(np.max(np.abs(frame)))
    if peak == 0 or not math.isfinite(peak):
        return 1.0
    return MEAN_LEVEL * math.sqrt(frame.shape[-1] * frame.shape[-2]) / peak


def normalize_kspace(frame) -> tuple[np.ndarray, float]:
    c = kspace_scale(frame)
    return np.asarray(frame) * c, c
