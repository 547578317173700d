"""Synthetic beating-heart phantom used as ground truth.

The phantom is a stack of filled ellipses painted in order (later ellipses
overwrite earlier ones) on a ``[-1, 1]^2`` grid.  Inner ellipses pulsate
radially with one full cycle over ``nt`` frames, so frame ``t`` and frame
``t + nt`` are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Domain, DynamicSeries
from .errors import InvalidSpec


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float = 0.0  # degrees
    intensity: float = 1.0
    amplitude: float = 0.0  # radial pulsation, fraction of the axes
    motion_phase: float = 0.0  # radians


# torso, lungs, myocardium, blood pools, spine
CARDIAC_ELLIPSES = (
    Ellipse((0.0, 0.0), (0.86, 0.66), 0.0, 0.35),
    Ellipse((-0.42, -0.08), (0.28, 0.40), 10.0, 0.06),
    Ellipse((0.42, -0.08), (0.26, 0.38), -10.0, 0.06),
    Ellipse((0.08, 0.06), (0.33, 0.28), 30.0, 0.60, 0.10),
    Ellipse((0.10, 0.07), (0.18, 0.15), 30.0, 1.00, 0.22),
    Ellipse((-0.16, 0.00), (0.11, 0.17), 20.0, 0.85, 0.18, 0.4),
    Ellipse((0.00, 0.52), (0.08, 0.08), 0.0, 0.50),
)


@dataclass(frozen=True)
class PhantomSpec:
    nx: int = 64
    ny: int = 64
    nt: int = 16
    ellipses: tuple[Ellipse, ...] = CARDIAC_ELLIPSES
    # coefficients of a quadratic phase in radians: 1, x, y, x^2, y^2, xy
    phase_coeffs: tuple[float, ...] | None = None
    seed: int = 0
    supersample: int = 4

    def check(self) -> None:
        if min(self.nx, self.ny) < 2 or self.nt < 1:
            raise InvalidSpec(f"bad shape {self.nx}x{self.ny}x{self.nt}")
        if self.supersample < 1:
            raise InvalidSpec("supersample must be >= 1")
        if not self.ellipses:
            raise InvalidSpec("at least one ellipse is required")
        for e in self.ellipses:
            if not 0.0 <= e.intensity <= 1.0:
                raise InvalidSpec(f"intensity {e.intensity} outside [0, 1]")
            if not 0.0 <= e.amplitude <= 0.5:
                raise InvalidSpec(f"pulsation amplitude {e.amplitude} outside [0, 0.5]")
            if min(e.axes) <= 0:
                raise InvalidSpec("ellipse axes must be positive")
        if self.phase_coeffs is not None and len(self.phase_coeffs) != 6:
            raise InvalidSpec("phase_coeffs needs 6 values")


def random_spec(seed: int, nx: int = 64, ny: int = 64, nt: int = 16, jitter: float = 1.0) -> PhantomSpec:
    """Cardiac phantom with seed-dependent jitter of geometry and contrast."""
    rng = np.random.default_rng(seed)
    ellipses = []
    for e in CARDIAC_ELLIPSES:
        dc = rng.uniform(-0.04, 0.04, 2) * jitter
        sa = 1.0 + rng.uniform(-0.08, 0.08, 2) * jitter
        ellipses.append(
            replace(
                e,
                center=(e.center[0] + dc[0], e.center[1] + dc[1]),
                axes=(e.axes[0] * sa[0], e.axes[1] * sa[1]),
                angle=e.angle + rng.uniform(-8, 8) * jitter,
                intensity=float(np.clip(e.intensity * (1 + rng.uniform(-0.1, 0.1) * jitter), 0, 1)),
                amplitude=float(np.clip(e.amplitude * (1 + rng.uniform(-0.2, 0.2) * jitter), 0, 0.5)),
            )
        )
    return PhantomSpec(nx, ny, nt, tuple(ellipses), None, seed)


def _phase_coeffs(spec: PhantomSpec) -> np.ndarray:
    if spec.phase_coeffs is not None:
        return np.asarray(spec.phase_coeffs, dtype=float)
    rng = np.random.default_rng([spec.seed, 7919])
    return rng.uniform(-1, 1, 6) * np.array([np.pi, 0.6, 0.6, 0.4, 0.4, 0.4])


def phase_map(spec: PhantomSpec) -> np.ndarray:
    y, x = _grid(spec.ny, spec.nx, 1)
    c = _phase_coeffs(spec)
    return c[0] + c[1] * x + c[2] * y + c[3] * x**2 + c[4] * y**2 + c[5] * x * y


def _grid(ny: int, nx: int, ss: int):
    # cell-centred coordinates, averaged over ss x ss sub-samples
    ys = (np.arange(ny * ss) + 0.5) / (ny * ss) * 2 - 1
    xs = (np.arange(nx * ss) + 0.5) / (nx * ss) * 2 - 1
    return np.meshgrid(ys, xs, indexing="ij")


def phantom_frame(spec: PhantomSpec, t: int) -> np.ndarray:
    """Complex image of frame ``t``; any integer ``t`` is accepted (periodic)."""
    ss = spec.supersample
    y, x = _grid(spec.ny, spec.nx, ss)
    cycle = 2 * math.pi * (t % spec.nt) / spec.nt
    mag = np.zeros_like(x)
    for e in spec.ellipses:
        scale = 1.0 + e.amplitude * math.sin(cycle + e.motion_phase)
        ax, ay = e.axes[0] * scale, e.axes[1] * scale
        th = math.radians(e.angle)
        dx, dy = x - e.center[0], y - e.center[1]
        u = dx * math.cos(th) + dy * math.sin(th)
        v = -dx * math.sin(th) + dy * math.cos(th)
        mag[(u / ax) ** 2 + (v / ay) ** 2 <= 1.0] = e.intensity
    if ss > 1:
        mag = np.clip(mag.reshape(spec.ny, ss, spec.nx, ss).mean(axis=(1, 3)), 0.0, 1.0)
    return mag * np.exp(1j * phase_map(spec))


def generate_phantom(spec: PhantomSpec) -> DynamicSeries:
    spec.check()
    frames = np.stack([phantom_frame(spec, t) for t in range(spec.nt)])
    return DynamicSeries.from_array(frames, Domain.IMAGE)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def parse_config(text: str) -> PhantomSpec:
    """Parse ``key=value`` lines into a spec.

    Recognised keys: ``nx``, ``ny``, ``nt``, ``seed``, ``supersample``,
    ``jitter`` (randomise the default cardiac layout with ``seed``),
    ``phase`` (six coefficients) and repeated ``ellipse`` entries of the form
    ``cx, cy, ax, ay, angle_deg, intensity, amplitude[, motion_phase]``.
    """
    values: dict[str, str] = {}
    ellipses: list[Ellipse] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key == "ellipse":
                f = _floats(val)
                if len(f) not in (7, 8):
                    raise InvalidSpec(f"line {lineno}: ellipse needs 7 or 8 numbers")
                ellipses.append(Ellipse((f[0], f[1]), (f[2], f[3]), *f[4:]))
            elif key in ("nx", "ny", "nt", "seed", "supersample", "jitter", "phase"):
                values[key] = val
            else:
                raise InvalidSpec(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"line {lineno}: {exc}") from exc
    try:
        nx = int(values.get("nx", 64))
        ny = int(values.get("ny", 64))
        nt = int(values.get("nt", 16))
        seed = int(values.get("seed", 0))
        ss = int(values.get("supersample", 4))
        jitter = float(values.get("jitter", 0.0))
        phase = tuple(_floats(values["phase"])) if "phase" in values else None
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from exc
    if ellipses:
        spec = PhantomSpec(nx, ny, nt, tuple(ellipses), phase, seed, ss)
    else:
        spec = replace(random_spec(seed, nx, ny, nt, jitter), phase_coeffs=phase, supersample=ss)
    spec.check()
    return spec


def load_config(path) -> PhantomSpec:
    return parse_config(Path(path).read_text())
