"""Centered unitary 2-D FFTs and the under-sampled forward operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CoilSensitivities, Domain, DynamicSeries, SamplingMask
from .errors import DegenerateShape, DomainMismatch, ShapeMismatch

_AXES = (-2, -1)


def _check_frame(x: np.ndarray) -> None:
    if x.ndim < 2 or min(x.shape[-2:]) < 2:
        raise DegenerateShape(f"need at least 2x2 frames, got shape {x.shape}")


def fft2c(x) -> np.ndarray:
    """Unitary centered FFT over the last two axes (DC lands at ``n // 2``)."""
    x = np.asarray(x)
    _check_frame(x)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=_AXES), axes=_AXES, norm="ortho"), axes=_AXES
    )


def ifft2c(k) -> np.ndarray:
    k = np.asarray(k)
    _check_frame(k)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(k, axes=_AXES), axes=_AXES, norm="ortho"), axes=_AXES
    )


@dataclass(frozen=True)
class ForwardOperator:
    """``A = M F S``: coil weighting, per-frame centered FFT, then masking."""

    mask: SamplingMask
    sens: CoilSensitivities

    @classmethod
    def single_coil(cls, mask: SamplingMask) -> "ForwardOperator":
        return cls(mask, CoilSensitivities.identity(mask.nx, mask.ny))

    def _check(self, shape) -> None:
        if tuple(shape[-3:]) != self.mask.shape:
            raise ShapeMismatch(f"input shape {tuple(shape)} does not match mask {self.mask.shape}")
        if self.sens.values.shape[1:] != self.mask.shape[1:]:
            raise ShapeMismatch("coil sensitivities do not match the mask's frame shape")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Image ``(nt, ny, nx)`` -> masked k-space ``(nc, nt, ny, nx)``."""
        self._check(x.shape)
        coil_images = self.sens.values[:, None] * x[None]
        return np.where(self.mask.acquired[None], fft2c(coil_images), 0)

    def adjoint(self, k: np.ndarray) -> np.ndarray:
        """Masked k-space ``(nc, nt, ny, nx)`` -> image ``(nt, ny, nx)``."""
        self._check(k.shape)
        masked = np.where(self.mask.acquired[None], k, 0)
        return np.sum(np.conj(self.sens.values)[:, None] * ifft2c(masked), axis=0)


def _single_coil(op: ForwardOperator) -> None:
    if op.sens.nc != 1:
        raise ShapeMismatch("series-level operators are single-coil; use ForwardOperator.forward")


def apply_forward(op: ForwardOperator, image_series: DynamicSeries) -> DynamicSeries:
    if image_series.domain != Domain.IMAGE:
        raise DomainMismatch("apply_forward expects an image-domain series")
    _single_coil(op)
    k = op.forward(image_series.array)[0]
    return DynamicSeries.from_array(k, Domain.KSPACE)


def apply_adjoint(op: ForwardOperator, kspace_series: DynamicSeries) -> DynamicSeries:
    if kspace_series.domain != Domain.KSPACE:
        raise DomainMismatch("apply_adjoint expects a k-space series")
    _single_coil(op)
    img = op.adjoint(kspace_series.array[None])
    return DynamicSeries.from_array(img, Domain.IMAGE)


def to_kspace(series: DynamicSeries) -> DynamicSeries:
    if series.domain == Domain.KSPACE:
        return series
    return DynamicSeries.from_array(fft2c(series.array), Domain.KSPACE)


def to_image(series: DynamicSeries) -> DynamicSeries:
    if series.domain == Domain.IMAGE:
        return series
    return DynamicSeries.from_array(ifft2c(series.array), Domain.IMAGE)
