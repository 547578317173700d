"""Reverse-diffusion predictor and annealed Langevin corrector.

All steps act on a batch of complex frames ``(..., ny, nx)``.  Frames follow
separate trajectories but share the corrector's step size.
Noise is drawn from a counter-based generator keyed by
``(seed, level, step, site)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

import numpy as np

from .acquisition import complex_normal
from .errors import NonPositiveSigma, ScheduleOrderViolation
from .prior import NoiseSchedule, ScoreModel, score

Hook = Callable[[str, int, dict], None]


class Site(IntEnum):
    INIT = 0
    GM_PRED = 1
    GM_CORR = 2
    LM_PRED = 3
    LM_CORR = 4


def keyed_rng(seed: int, level: int, step: int, site: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, level, step, int(site)])))


@dataclass(frozen=True)
class SamplerConfig:
    T: int = 300
    J: int = 1
    r: float = 0.075
    schedule: NoiseSchedule = field(default_factory=lambda: NoiseSchedule(0.01, 4.0, 300))
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.T > self.schedule.n_levels:
            raise ValueError(f"T={self.T} must lie in [1, n_levels={self.schedule.n_levels}]")
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if not self.r > 0:
            raise ValueError("r must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        """The ``T`` noise levels visited, ascending; the full ladder when ``T == n_levels``."""
        levels = self.schedule.levels
        idx = np.rint(np.linspace(0, len(levels) - 1, self.T)).astype(int)
        return levels[idx]


def _frame_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a.real**2 + a.imag**2, axis=(-2, -1), keepdims=True))


def predictor_step(x, model: ScoreModel, sigma_t: float, sigma_t1: float,
                   rng: np.random.Generator | int | None = None, z=None) -> np.ndarray:
    """Reverse-diffusion step from level ``sigma_t1`` down to ``sigma_t``.

    ``x + (s1^2 - s^2) S(x, s1) + sqrt(s1^2 - s^2) z``; equal levels are a no-op.
    """
    if not (sigma_t1 >= sigma_t >= 0):
        raise ScheduleOrderViolation(f"need sigma_t1 >= sigma_t >= 0, got {sigma_t1}, {sigma_t}")
    x = np.asarray(x)
    if sigma_t1 == sigma_t:
        return x.copy()
    dvar = sigma_t1**2 - sigma_t**2
    if z is None:
        z = complex_normal(np.random.default_rng(rng), x.shape)
    return x + dvar * score(model, x, sigma_t1) + np.sqrt(dvar) * z


def corrector_step(x, model: ScoreModel, sigma_t: float, r: float,
                   rng: np.random.Generator | int | None = None, z=None, return_eps: bool = False):
    """Annealed Langevin step ``x + eps S(x, sigma) + sqrt(2 eps) z``.

    ``eps = 2 (r ||z|| / ||S||)^2`` with both norms taken per frame and
    averaged over the batch, so every frame in a batch shares one step size.
    A frame whose score vanishes is returned unchanged.
    """
    if not sigma_t > 0:
        raise NonPositiveSigma(f"corrector needs sigma_t > 0, got {sigma_t}")
    x = np.asarray(x)
    if z is None:
        z = complex_normal(np.random.default_rng(rng), x.shape)
    s = score(model, x, sigma_t)
    s_norm = _frame_norm(s)
    live = s_norm > 0
    eps = 0.0
    if np.any(live):
        eps = 2.0 * (r * np.mean(_frame_norm(z)[live]) / np.mean(s_norm[live])) ** 2
    out = np.where(live, x + eps * s + np.sqrt(2.0 * eps) * z, x)
    if return_eps:
        return out, eps
    return out


def sample_level(x, model: ScoreModel, t: int, config: SamplerConfig, *,
                 site_pred: Site = Site.GM_PRED, site_corr: Site = Site.GM_CORR,
                 hook: Hook | None = None, tag: str = "GM") -> np.ndarray:
    """One predictor step into level ``t`` followed by ``J`` corrector steps at ``t``.

    The level above the top of the ladder is the top itself, so the first
    outer iteration only corrects.
    """
    if not 0 <= t < config.T:
        raise ValueError(f"level {t} outside [0, {config.T})")
    sig = config.sigmas
    s_t, s_t1 = sig[t], sig[min(t + 1, config.T - 1)]
    x = predictor_step(x, model, s_t, s_t1, keyed_rng(config.seed, t, 0, site_pred))
    if hook:
        hook(f"{tag}-pred", t, {"sigma": s_t})
    for j in range(config.J):
        x, eps = corrector_step(x, model, s_t, config.r, keyed_rng(config.seed, t, j, site_corr), return_eps=True)
        if hook:
            hook(f"{tag}-corr", t, {"sigma": s_t, "eps": eps, "x": x})
    return x


def initial_state(shape, config: SamplerConfig) -> np.ndarray:
    """``N(0, sigma_max^2)`` per real component."""
    return config.sigmas[-1] * complex_normal(keyed_rng(config.seed, config.T, 0, Site.INIT), shape)


def sample(model: ScoreModel, shape, config: SamplerConfig, hook: Hook | None = None) -> np.ndarray:
    """Unconditional predictor-corrector sampling over the whole ladder."""
    x = initial_state(shape, config)
    for t in reversed(range(config.T)):
        x = sample_level(x, model, t, config, hook=hook)
    return x
