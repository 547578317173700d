import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldm.errors import ImageTooSmall, ShapeMismatch
from gldm.metrics import MetricConfig, frame_metrics, mse, psnr, ssim, write_metrics_csv

FIXTURES = Path(__file__).parent / "fixtures"
UNIT = MetricConfig(data_range=1.0)


def mse_oracle(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = float(a[i, j]) - float(b[i, j])
            total += d * d
    return total / a.size


def psnr_oracle(a, b, L):
    return 10.0 * math.log10(L * L / mse_oracle(a, b))


def test_mse_basic():
    a = np.random.default_rng(0).random((8, 8))
    assert mse(a, a) == 0.0
    assert mse(a + 0.01, a) == pytest.approx(1e-4, rel=1e-9)


def test_mse_two_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.random((20, 17)), rng.random((20, 17))
    assert abs(mse(a, b) - mse_oracle(a, b)) <= 1e-12


def test_psnr_values():
    a = np.zeros((4, 4))
    assert psnr(a, a, UNIT) == 100.0
    assert psnr(a + 0.1, a, UNIT) == pytest.approx(20.0, abs=1e-9)
    rng = np.random.default_rng(2)
    x, y = rng.random((16, 16)), rng.random((16, 16))
    assert abs(psnr(x, y, MetricConfig(data_range=2.5)) - psnr_oracle(x, y, 2.5)) <= 1e-9


def test_psnr_default_range_is_reference_max():
    rng = np.random.default_rng(3)
    x, y = rng.random((8, 8)), 3 * rng.random((8, 8))
    assert psnr(x, y) == pytest.approx(psnr_oracle(x, y, y.max()), abs=1e-9)


def test_psnr_strictly_decreasing_in_mse():
    ref = np.zeros((4, 4))
    vals = [psnr(ref + d, ref, UNIT) for d in (1e-6, 1e-4, 1e-2, 0.5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_ssim_fixture():
    pair = np.load(FIXTURES / "ssim_pair.npz")
    expected = json.loads((FIXTURES / "ssim_pair.json").read_text())["ssim"]
    assert abs(ssim(pair["a"], pair["b"], UNIT) - expected) <= 1e-6


def test_ssim_identity_and_offset():
    a = np.random.default_rng(4).random((16, 16))
    assert ssim(a, a, UNIT) == 1.0
    assert ssim(a, a + 0.2, UNIT) < 1.0


def test_ssim_too_small():
    with pytest.raises(ImageTooSmall):
        ssim(np.zeros((10, 16)), np.zeros((10, 16)), UNIT)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(11, 24), st.integers(11, 24))
def test_symmetry_and_self_similarity(seed, h, w):
    rng = np.random.default_rng(seed)
    a, b = rng.random((h, w)), rng.random((h, w))
    assert mse(a, b) == mse(b, a)
    assert abs(ssim(a, b, UNIT) - ssim(b, a, UNIT)) <= 1e-12
    assert ssim(a, a, UNIT) == 1.0
    assert -1.0 <= ssim(a, b, UNIT) <= 1.0


def test_frame_metrics_normalises_by_truth_max():
    rng = np.random.default_rng(5)
    truth = 4.0 * rng.random((3, 16, 16))
    recon = truth + 0.04 * rng.standard_normal(truth.shape)
    rows = frame_metrics(recon, truth, "s")
    L = truth.max()
    recon = np.abs(recon)  # metrics act on magnitudes
    for i, r in enumerate(rows):
        assert r.series == "s" and r.frame == i
        assert r.mse == pytest.approx(mse_oracle(recon[i] / L, truth[i] / L), rel=1e-12)
        assert r.psnr == pytest.approx(psnr_oracle(recon[i] / L, truth[i] / L, 1.0), abs=1e-9)


def test_metrics_csv(tmp_path):
    truth = np.random.default_rng(6).random((2, 12, 12))
    rows = frame_metrics(truth, truth, "a") + frame_metrics(truth * 0.9, truth, "b")
    write_metrics_csv(rows, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "series,frame,psnr,ssim,mse_x1e4"
    assert lines[1].startswith("a,0,100.000000,1.000000,0.000000")
    assert lines[-2].startswith("a,average,100.000000")
    assert lines[-1].startswith("b,average")
