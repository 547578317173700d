import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldm.data import CoilSensitivities, Domain, DynamicSeries, SamplingMask
from gldm.errors import DegenerateShape, DomainMismatch, ShapeMismatch
from gldm.transforms import ForwardOperator, apply_adjoint, apply_forward, fft2c, ifft2c


def dft_matrix(n: int) -> np.ndarray:
    """Centered unitary DFT as an explicit matrix (DC at row n // 2)."""
    k = np.arange(n) - n // 2
    x = np.arange(n) - n // 2
    return np.exp(-2j * np.pi * np.outer(k, x) / n) / np.sqrt(n)


def dft2_oracle(img: np.ndarray) -> np.ndarray:
    """O(N^2) per-axis direct DFT."""
    ny, nx = img.shape[-2:]
    return dft_matrix(ny) @ img @ dft_matrix(nx).T


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("ny,nx", [(8, 8), (16, 16), (32, 32), (7, 10), (64, 64)])
def test_fft_matches_direct_dft(ny, nx):
    x = crandn(np.random.default_rng(ny * nx), (ny, nx))
    np.testing.assert_allclose(fft2c(x), dft2_oracle(x), rtol=0, atol=1e-10 * np.linalg.norm(x))


def test_constant_image_energy_at_dc():
    k = fft2c(np.full((6, 8), 2.0 + 0j))
    assert abs(k[3, 4]) == pytest.approx(2.0 * np.sqrt(48))
    k[3, 4] = 0
    assert np.max(np.abs(k)) < 1e-12


def test_odd_dims_dc_at_floor_half():
    k = fft2c(np.ones((5, 7)))
    assert np.unravel_index(np.argmax(np.abs(k)), k.shape) == (2, 3)


def test_inverse_16():
    x = crandn(np.random.default_rng(1), (16, 16))
    np.testing.assert_allclose(ifft2c(fft2c(x)), x, atol=1e-12)


def test_parseval_32():
    x = crandn(np.random.default_rng(2), (32, 32))
    assert np.linalg.norm(fft2c(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    assert np.linalg.norm(dft2_oracle(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)


@pytest.mark.parametrize("shape", [(1, 8), (8, 1), (8,)])
def test_degenerate_shapes(shape):
    with pytest.raises(DegenerateShape):
        fft2c(np.zeros(shape))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 24), st.integers(2, 24), st.integers(0, 2**32 - 1))
def test_unitarity_property(ny, nx, seed):
    x = crandn(np.random.default_rng(seed), (2, ny, nx))
    k = fft2c(x)
    np.testing.assert_allclose(np.linalg.norm(k, axis=(-2, -1)), np.linalg.norm(x, axis=(-2, -1)), rtol=1e-10)
    np.testing.assert_allclose(ifft2c(k), x, atol=1e-10 * np.linalg.norm(x))


def _series(arr, domain):
    return DynamicSeries.from_array(arr, domain)


def test_full_mask_forward_is_fft():
    x = crandn(np.random.default_rng(3), (2, 8, 8))
    op = ForwardOperator.single_coil(SamplingMask(np.ones((2, 8, 8), bool)))
    np.testing.assert_allclose(apply_forward(op, _series(x, Domain.IMAGE)).array, fft2c(x))
    np.testing.assert_allclose(apply_adjoint(op, _series(x, Domain.KSPACE)).array, ifft2c(x))


def test_empty_mask_forward_is_zero():
    x = crandn(np.random.default_rng(4), (2, 8, 8))
    op = ForwardOperator.single_coil(SamplingMask(np.zeros((2, 8, 8), bool)))
    assert np.all(apply_forward(op, _series(x, Domain.IMAGE)).array == 0)


def test_forward_matches_dft_and_mask_oracle():
    rng = np.random.default_rng(5)
    x = crandn(rng, (2, 8, 8))
    m = rng.random((2, 8, 8)) < 0.5
    op = ForwardOperator.single_coil(SamplingMask(m))
    expected = np.stack([dft2_oracle(f) for f in x]) * m
    np.testing.assert_allclose(apply_forward(op, _series(x, Domain.IMAGE)).array, expected, atol=1e-12)


def test_adjoint_matches_dense_matrix_oracle():
    """Zero-filled image of a static phantom under a 4x interleave, against A^H built densely."""
    ny, nx = 8, 8
    img = np.zeros((ny, nx))
    img[2:6, 3:6] = 1.0
    m = np.zeros((1, ny, nx), bool)
    m[0, ::4] = True
    m[0, 3:5] = True
    Fy, Fx = dft_matrix(ny), dft_matrix(nx)
    A = np.kron(Fy, Fx)[m[0].ravel()]  # rows of the full 2-D DFT that are acquired
    y = A @ img.ravel()
    oracle = (A.conj().T @ y).reshape(ny, nx)
    op = ForwardOperator.single_coil(SamplingMask(m))
    k = apply_forward(op, _series(img[None], Domain.IMAGE))
    np.testing.assert_allclose(apply_adjoint(op, k).array[0], oracle, atol=1e-12)


def test_adjoint_consistency_multicoil():
    rng = np.random.default_rng(6)
    m = SamplingMask(rng.random((3, 10, 12)) < 0.3)
    sens = CoilSensitivities(crandn(rng, (4, 10, 12)))
    op = ForwardOperator(m, sens)
    x = crandn(rng, (3, 10, 12))
    y = crandn(rng, (4, 3, 10, 12))
    lhs = np.vdot(y, op.forward(x))
    rhs = np.vdot(op.adjoint(y), x)
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_mask_idempotence():
    rng = np.random.default_rng(7)
    op = ForwardOperator.single_coil(SamplingMask(rng.random((2, 6, 6)) < 0.5))
    k = crandn(rng, (1, 2, 6, 6))
    once = np.where(op.mask.acquired, k, 0)
    twice = np.where(op.mask.acquired, once, 0)
    assert np.array_equal(once, twice)


def test_domain_and_shape_errors():
    op = ForwardOperator.single_coil(SamplingMask(np.ones((2, 4, 4), bool)))
    with pytest.raises(DomainMismatch):
        apply_forward(op, _series(np.zeros((2, 4, 4)), Domain.KSPACE))
    with pytest.raises(DomainMismatch):
        apply_adjoint(op, _series(np.zeros((2, 4, 4)), Domain.IMAGE))
    with pytest.raises(ShapeMismatch):
        apply_forward(op, _series(np.zeros((3, 4, 4)), Domain.IMAGE))
