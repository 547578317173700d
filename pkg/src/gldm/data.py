"""Spatiotemporal data types and the ``.kds`` binary container.

Arrays are held frame-major, i.e. with shape ``(nt, ny, nx)``, matching the
on-disk ``[t][y][x]`` layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import BadMagic, IoFailure, NonFiniteValue, ShapeMismatch, Truncated

MAGIC = b"KDS1"
HEADER = struct.Struct("<4sIIIBB6x")  # 24 bytes


class Domain(IntEnum):
    IMAGE = 0
    KSPACE = 1


class DType(IntEnum):
    C8 = 0  # interleaved float32 (re, im)
    U8 = 1  # mask values in {0, 1}


@dataclass(frozen=True, eq=False)
class DynamicSeries:
    """Complex ``nx`` x ``ny`` x ``nt`` volume in image or k-space domain.

    ``data`` may be flat or shaped; :attr:`array` always returns the
    ``(nt, ny, nx)`` view. Use :func:`validate` to check the invariants.
    """

    nx: int
    ny: int
    nt: int
    domain: Domain
    data: np.ndarray

    @classmethod
    def from_array(cls, arr, domain: Domain) -> "DynamicSeries":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ShapeMismatch(f"expected (nt, ny, nx) array, got shape {arr.shape}")
        if not np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        nt, ny, nx = arr.shape
        return cls(nx, ny, nt, Domain(domain), arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nt, self.ny, self.nx)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.data).reshape(self.shape)

    def with_array(self, arr, domain: Domain | None = None) -> "DynamicSeries":
        return DynamicSeries.from_array(arr, self.domain if domain is None else domain)


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean indicator of acquired k-space cells, shape ``(nt, ny, nx)``."""

    acquired: np.ndarray

    def __post_init__(self):
        acq = np.asarray(self.acquired, dtype=bool)
        if acq.ndim == 2:
            acq = acq[None]
        if acq.ndim != 3:
            raise ShapeMismatch(f"mask must be 3-D, got shape {acq.shape}")
        object.__setattr__(self, "acquired", acq)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.acquired.shape

    @property
    def nt(self) -> int:
        return self.shape[0]

    @property
    def ny(self) -> int:
        return self.shape[1]

    @property
    def nx(self) -> int:
        return self.shape[2]

    @property
    def fraction(self) -> float:
        return float(self.acquired.mean())

    @property
    def acceleration(self) -> float:
        n = int(self.acquired.sum())
        return float("inf") if n == 0 else self.acquired.size / n

    def check_matches(self, series: DynamicSeries) -> None:
        if self.shape != series.shape:
            raise ShapeMismatch(f"mask shape {self.shape} != series shape {series.shape}")


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    """Coil maps with shape ``(nc, ny, nx)``."""

    values: np.ndarray

    @classmethod
    def identity(cls, nx: int, ny: int) -> "CoilSensitivities":
        return cls(np.ones((1, ny, nx), dtype=np.complex128))

    @property
    def nc(self) -> int:
        return self.values.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.nc == 1 and bool(np.all(self.values == 1 + 0j))


def validate(series: DynamicSeries) -> DynamicSeries:
    """Check the series invariants, raising on the first violation.

    Returns the series unchanged so the call can be chained.
    """
    expected = series.nx * series.ny * series.nt
    data = np.asarray(series.data)
    if min(series.nx, series.ny, series.nt) < 1 or data.size != expected:
        raise ShapeMismatch(
            f"declared {series.nx}x{series.ny}x{series.nt} ({expected} values), "
            f"payload holds {data.size}"
        )
    bad = ~np.isfinite(data.reshape(-1))
    if bad.any():
        flat = int(np.argmax(bad))
        raise NonFiniteValue(np.unravel_index(flat, series.shape))
    return series


def _write(path, nx, ny, nt, domain, dtype, payload: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, nx, ny, nt, int(domain), int(dtype)))
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _read(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) < HEADER.size:
        raise Truncated(f"{path}: header shorter than {HEADER.size} bytes")
    magic, nx, ny, nt, domain, dtype = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {MAGIC!r}")
    return nx, ny, nt, Domain(domain), DType(dtype), raw[HEADER.size:]


def _check_payload(path, payload: bytes, expected: int) -> None:
    if len(payload) < expected:
        raise Truncated(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise ShapeMismatch(f"{path}: payload has {len(payload)} bytes, expected {expected}")


def write_series(series: DynamicSeries, path) -> None:
    """Write a series as little-endian float32 (re, im) pairs."""
    validate(series)
    arr = np.ascontiguousarray(series.array, dtype="<c8")
    _write(path, series.nx, series.ny, series.nt, series.domain, DType.C8, arr.tobytes())


def read_series(path) -> DynamicSeries:
    nx, ny, nt, domain, dtype, payload = _read(path)
    if dtype != DType.C8:
        raise ShapeMismatch(f"{path}: dtype tag {dtype.name} is not a complex series")
    _check_payload(path, payload, nx * ny * nt * 8)
    arr = np.frombuffer(payload, dtype="<c8").reshape(nt, ny, nx).astype(np.complex64)
    return DynamicSeries(nx, ny, nt, domain, arr)


def write_mask(mask: SamplingMask, path) -> None:
    nt, ny, nx = mask.shape
    payload = mask.acquired.astype(np.uint8).tobytes()
    _write(path, nx, ny, nt, Domain.KSPACE, DType.U8, payload)


def read_mask(path) -> SamplingMask:
    nx, ny, nt, _, dtype, payload = _read(path)
    if dtype != DType.U8:
        raise ShapeMismatch(f"{path}: dtype tag {dtype.name} is not a mask")
    _check_payload(path, payload, nx * ny * nt)
    vals = np.frombuffer(payload, dtype=np.uint8)
    if np.any(vals > 1):
        raise ShapeMismatch(f"{path}: mask values must be 0 or 1")
    return SamplingMask(vals.reshape(nt, ny, nx).astype(bool))
