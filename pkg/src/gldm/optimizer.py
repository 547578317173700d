"""Optimization unit: block-Hankel low-rank projection and data consistency.

Operations accept either a :class:`DynamicSeries` or a raw ``(nt, ny, nx)``
array and return the same kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import DynamicSeries, SamplingMask
from .errors import InconsistentShape, RankTooLarge, ShapeMismatch, WindowTooLarge


def _unwrap(series):
    if isinstance(series, DynamicSeries):
        return series.array, series.with_array
    arr = np.asarray(series)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected an (nt, ny, nx) array, got shape {arr.shape}")
    return arr, lambda a: a


def _window(shape, window) -> tuple[int, int, int]:
    nt, ny, nx = shape
    wx, wy, wt = (1, 1, nt) if window is None else window
    if min(wx, wy, wt) < 1:
        raise WindowTooLarge(f"window {window} must be positive")
    if wx > nx or wy > ny or wt > nt:
        raise WindowTooLarge(f"window (wx={wx}, wy={wy}, wt={wt}) does not fit {nx}x{ny}x{nt}")
    return wx, wy, wt


def hankel_embed(series, window: tuple[int, int, int] | None = None) -> np.ndarray:
    """Lift a volume into a block-Hankel matrix.

    Row ``p`` is the vectorised ``(wt, wy, wx)`` window whose corner sits at
    sliding position ``p`` (positions and window offsets both in ``t, y, x``
    row-major order, stride 1, no wrap).  ``window`` is ``(wx, wy, wt)``; the
    default ``(1, 1, nt)`` gives the ``(nx*ny) x nt`` Casorati matrix.
    """
    arr, _ = _unwrap(series)
    wx, wy, wt = _window(arr.shape, window)
    view = sliding_window_view(arr, (wt, wy, wx))
    return view.reshape(-1, wt * wy * wx)


def hankel_unembed(matrix: np.ndarray, shape: tuple[int, int, int], window: tuple[int, int, int] | None = None) -> np.ndarray:
    """Left inverse of :func:`hankel_embed`: average every entry mapping to a cell.

    ``shape`` is the volume shape ``(nt, ny, nx)``.
    """
    nt, ny, nx = shape
    wx, wy, wt = _window(shape, window)
    pt, py, px = nt - wt + 1, ny - wy + 1, nx - wx + 1
    if matrix.shape != (pt * py * px, wt * wy * wx):
        raise InconsistentShape(
            f"matrix {matrix.shape} inconsistent with volume {shape} and window {(wx, wy, wt)}"
        )
    if (wx, wy, wt) == (1, 1, nt):
        return matrix.T.reshape(shape).copy()
    blocks = matrix.reshape(pt, py, px, wt, wy, wx)
    out = np.zeros(shape, dtype=np.result_type(matrix.dtype, np.float64))
    count = np.zeros(shape)
    for dt in range(wt):
        for dy in range(wy):
            for dx in range(wx):
                out[dt:dt + pt, dy:dy + py, dx:dx + px] += blocks[..., dt, dy, dx]
                count[dt:dt + pt, dy:dy + py, dx:dx + px] += 1
    return out / count


@dataclass(frozen=True)
class LowRankConfig:
    rank: int = 3
    window: tuple[int, int, int] | None = None  # (wx, wy, wt); None -> (1, 1, nt)


def truncate_rank(matrix: np.ndarray, rank: int) -> np.ndarray:
    """Hard-threshold SVD keeping the leading ``rank`` singular triplets."""
    if rank < 1 or rank > min(matrix.shape):
        raise RankTooLarge(f"rank {rank} invalid for a {matrix.shape} matrix")
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vh[:rank]


def lowrank_project(series, config: LowRankConfig):
    arr, wrap = _unwrap(series)
    window = _window(arr.shape, config.window)
    low = truncate_rank(hankel_embed(arr, window), config.rank)
    return wrap(hankel_unembed(low, arr.shape, window))


@dataclass(frozen=True)
class DCConfig:
    """``lam = math.inf`` replaces acquired cells with the measurements."""

    lam: float
    mask: SamplingMask
    y: DynamicSeries | np.ndarray

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive or inf, got {self.lam}")


def data_consistency(series, config: DCConfig):
    """Blend acquired cells towards the measurements.

    Acquired cells become ``(y + lam * k) / (1 + lam)``; all other cells are
    returned untouched.
    """
    arr, wrap = _unwrap(series)
    y = config.y.array if isinstance(config.y, DynamicSeries) else np.asarray(config.y)
    m = config.mask.acquired
    if arr.shape != m.shape or y.shape != m.shape:
        raise ShapeMismatch(f"series {arr.shape}, mask {m.shape} and y {y.shape} must agree")
    if math.isinf(config.lam):
        blended = y
    else:
        blended = (y + config.lam * arr) / (1.0 + config.lam)
    return wrap(np.where(m, blended, arr))
