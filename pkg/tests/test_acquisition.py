from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldm.acquisition import (
    AcquisitionNoise,
    InterleavedScheme,
    MaskFamily,
    MaskSpec,
    OffsetMode,
    WindowMode,
    acs_band,
    build_training_set,
    default_acs_lines,
    make_mask,
    merge_by_averaging,
    merge_error,
    merge_window,
    read_training_set,
    undersample,
    windows,
    write_training_set,
)
from gldm.data import Domain, DynamicSeries, SamplingMask
from gldm.errors import AmbiguousContributor, IncompleteCoverage, InfeasibleSpec, InfeasibleWindow
from gldm.phantom import CARDIAC_ELLIPSES, PhantomSpec, generate_phantom
from gldm.transforms import to_kspace


@pytest.fixture(scope="module")
def moving_k():
    return to_kspace(generate_phantom(PhantomSpec()))


@pytest.fixture(scope="module")
def static_k():
    spec = PhantomSpec(ellipses=tuple(replace(e, amplitude=0.0) for e in CARDIAC_ELLIPSES))
    return to_kspace(generate_phantom(spec))


def test_default_acs_scaling():
    assert default_acs_lines(192) == 8
    assert default_acs_lines(64) == 3
    assert default_acs_lines(8) == 1


def test_uniform_interleave_lines():
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 4, acs_lines=0), 3, 8, 4).acquired
    for t in range(4):
        assert set(np.flatnonzero(m[t, :, 0])) == {t, t + 4}
        assert np.all(m[t].all(axis=1) == m[t].any(axis=1))  # whole readout lines


@pytest.mark.parametrize("family", list(MaskFamily))
def test_accel_one_is_full(family):
    assert make_mask(MaskSpec(family, 1), 16, 16, 4).acquired.all()


def test_radial_192_fraction():
    f = make_mask(MaskSpec(MaskFamily.RADIAL, 8), 192, 192, 1).fraction
    assert 0.1125 <= f <= 0.1375


def test_radial_64_fraction_and_centre():
    m = make_mask(MaskSpec(MaskFamily.RADIAL, 8), 64, 64, 16)
    assert abs(m.fraction - 1 / 8) <= 0.1 / 8
    assert m.acquired[:, 32, 32].all()
    # golden-angle spokes differ between frames
    assert not np.array_equal(m.acquired[0], m.acquired[1])


def test_cartesian_mask():
    spec = MaskSpec(MaskFamily.CARTESIAN, 4, acs_lines=4, seed=1)
    m = make_mask(spec, 32, 64, 8)
    assert abs(m.acceleration - 4) <= 0.4
    assert m.acquired[:, acs_band(64, 4)].all()
    assert np.array_equal(m.acquired, make_mask(spec, 32, 64, 8).acquired)


def test_cartesian_infeasible_acs():
    with pytest.raises(InfeasibleSpec):
        make_mask(MaskSpec(MaskFamily.CARTESIAN, 8, acs_lines=20), 64, 64, 2)


def test_interleaved_infeasible():
    with pytest.raises(InfeasibleSpec):
        make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 2.5), 8, 8, 4)
    with pytest.raises(InfeasibleSpec):
        make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 4, acs_lines=8), 8, 8, 4)


def test_random_interleave_partitions_each_block():
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_RANDOM, 4, acs_lines=0, seed=3), 2, 16, 8).acquired[:, :, 0]
    for start in (0, 4):
        assert np.all(m[start:start + 4].sum(axis=0) == 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 5), st.integers(8, 32), st.data())
def test_uniform_windows_cover_every_line(R, acs, ny, data):
    nt = 8
    acs = min(acs, ny - 1)
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, R, acs_lines=acs), 2, ny, nt).acquired
    # consecutive frames; circular wrap keeps the phase pattern only when R divides nt
    t0 = data.draw(st.integers(0, nt - 1 if nt % R == 0 else nt - R))
    idx = [(t0 + i) % nt for i in range(R)]
    lines = m[idx, :, 0]
    band = np.zeros(ny, bool)
    band[acs_band(ny, acs)] = True
    assert np.all(lines[:, ~band].sum(axis=0) == 1)
    assert lines[:, band].all()


def test_undersample_noise_free(moving_k):
    full = SamplingMask(np.ones(moving_k.shape, bool))
    assert np.array_equal(undersample(moving_k, full, AcquisitionNoise(0.0)).array, moving_k.array)
    empty = SamplingMask(np.zeros(moving_k.shape, bool))
    assert np.all(undersample(moving_k, empty, AcquisitionNoise(0.0)).array == 0)


def test_undersample_noise_variance():
    k = DynamicSeries.from_array(np.zeros((1, 40, 50)), Domain.KSPACE)
    acq = np.zeros((1, 40, 50), bool)
    acq.reshape(-1)[:1000] = True
    y = undersample(k, SamplingMask(acq), AcquisitionNoise(0.1), seed=2).array[acq]
    assert 0.008 <= y.real.var() <= 0.012 and 0.008 <= y.imag.var() <= 0.012
    again = undersample(k, SamplingMask(acq), AcquisitionNoise(0.1), seed=2).array[acq]
    assert np.array_equal(y, again)


def test_negative_noise_rejected():
    with pytest.raises(InfeasibleSpec):
        AcquisitionNoise(-1.0)


def test_merge_acs_mean():
    frames = np.array([[[v + 0j]] for v in (1, 3, 5, 7)])
    masks = np.ones_like(frames, dtype=bool)
    assert merge_window(frames, masks)[0, 0] == 4 + 0j


def test_merge_reference_keeps_frame():
    frames = np.array([[[v + 0j]] for v in (1, 3, 5, 7)])
    masks = np.ones_like(frames, dtype=bool)
    assert merge_window(frames, masks, reference=2)[0, 0] == 5 + 0j


def test_merge_errors():
    f = np.ones((2, 2, 2), complex)
    with pytest.raises(IncompleteCoverage):
        merge_window(f, np.array([[[1, 0], [1, 1]], [[1, 0], [0, 0]]], bool))
    with pytest.raises(AmbiguousContributor):
        merge_window(np.ones((3, 1, 2)), np.array([[[1, 1]], [[1, 0]], [[1, 1]]], bool))


def test_merge_static_exact(static_k):
    scheme = InterleavedScheme(4, acs_lines=8)
    m = make_mask(scheme.mask_spec(), 64, 64, 16)
    y = undersample(static_k, m, AcquisitionNoise(0.0)).array
    merged = merge_window(y[:4], m.acquired[:4])
    ref = static_k.array[0]
    assert np.linalg.norm(merged - ref) <= 1e-12 * np.linalg.norm(ref)


def test_merge_never_reads_unsampled(static_k):
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 4, acs_lines=8), 64, 64, 4).acquired
    y = np.where(m, static_k.array[:4], np.nan)
    assert np.isfinite(merge_window(y, m)).all()
    assert np.isfinite(merge_by_averaging(y, m)).all()


def line_assembly_oracle(frames, masks, ny):
    """Build the merged frame line by line from the owning frame index."""
    n = len(frames)
    out = np.zeros(frames.shape[1:], complex)
    for y in range(ny):
        owners = [i for i in range(n) if masks[i, y, 0]]
        out[y] = frames[owners[0]][y] if len(owners) == 1 else np.mean([frames[i][y] for i in owners], axis=0)
    return out


def test_merge_moving_matches_line_oracle(moving_k):
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 4, acs_lines=3), 64, 64, 16).acquired
    k = moving_k.array
    idx = [6, 7, 8, 9]
    np.testing.assert_allclose(merge_window(k[idx], m[idx]), line_assembly_oracle(k[idx], m[idx], 64), atol=1e-12)


def test_averaging_differs_only_in_acs(moving_k):
    m = make_mask(MaskSpec(MaskFamily.INTERLEAVED_UNIFORM, 4, acs_lines=3), 64, 64, 16).acquired
    k = moving_k.array
    idx = [6, 7, 8, 9]
    a = merge_window(k[idx], m[idx], reference=2)
    b = merge_by_averaging(k[idx], m[idx])
    band = np.zeros(64, bool)
    band[acs_band(64, 3)] = True
    assert np.array_equal(a[~band], b[~band])
    assert not np.allclose(a[band], b[band])


def test_windows_sliding_and_disjoint():
    sl = windows(16, InterleavedScheme(4))
    assert len(sl) == 16 and sl[0] == ([14, 15, 0, 1], 0)
    dj = windows(16, InterleavedScheme(4, window_mode=WindowMode.DISJOINT))
    assert [w for w, _ in dj] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]]
    with pytest.raises(InfeasibleWindow):
        windows(4, InterleavedScheme(8))


def test_training_set_counts(moving_k, static_k):
    assert len(build_training_set(moving_k, InterleavedScheme(4, acs_lines=3))) == 16
    assert len(build_training_set(moving_k, InterleavedScheme(4, acs_lines=3, window_mode=WindowMode.DISJOINT))) == 4
    # 200 series x 16 frames with sliding windows -> 3200 samples
    assert len(windows(16, InterleavedScheme(16))) * 200 == 3200
    g = build_training_set(static_k, InterleavedScheme(16, acs_lines=3))
    assert len(g) == 16
    for s in g:
        np.testing.assert_allclose(s.kspace, static_k.array[0], atol=1e-9)


def test_training_set_random_offsets_disjoint(moving_k):
    scheme = InterleavedScheme(4, 3, OffsetMode.RANDOM, WindowMode.DISJOINT)
    assert len(build_training_set(moving_k, scheme, seed=5)) == 4


def test_proposed_merge_beats_averaging(moving_k):
    scheme = InterleavedScheme(4, acs_lines=3)
    prop = merge_error(moving_k, build_training_set(moving_k, scheme))
    avg = merge_error(moving_k, build_training_set(moving_k, scheme, merge="average"))
    assert prop < avg


def test_training_set_io(tmp_path, moving_k):
    samples = build_training_set(moving_k, InterleavedScheme(4, acs_lines=3), series_id="s0")
    manifest = write_training_set(samples, tmp_path / "ts")
    assert len(manifest.read_text().splitlines()) == 17
    back = read_training_set(tmp_path / "ts")
    assert [(s.series_id, s.window_start, s.reference) for s in back] == [
        (s.series_id, s.window_start, s.reference) for s in samples
    ]
    np.testing.assert_allclose(back[3].kspace, samples[3].kspace, rtol=1e-6, atol=1e-6)
