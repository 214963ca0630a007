import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anc_lab.metrics import PSD_FLOOR, anse, anse_from_power, avg_rnl, block_anse, power_spectrum, psd_db, rnl

FS = 16000


def test_rnl_values():
    assert rnl(1.0) == 0.0
    assert rnl(10.0) == pytest.approx(20.0, abs=1e-12)
    assert rnl(0.0) == pytest.approx(-200.0, abs=1e-12)
    np.testing.assert_allclose(rnl(np.array([1.0, -1.0, 0.1])), [0.0, 0.0, -20.0], atol=1e-9)


def test_avg_rnl():
    assert avg_rnl(np.full(16000, -20.0), 16000) == pytest.approx(-20.0)
    assert avg_rnl([-10.0] * 5 + [-30.0] * 5) == pytest.approx(-20.0)
    with pytest.raises(AssertionError):
        avg_rnl(np.zeros(10), 16000)
    with pytest.raises(AssertionError):
        avg_rnl([])


def test_avg_rnl_concatenation(rng):
    windows = [rng.normal(-30, 5, 100) for _ in range(4)]
    assert avg_rnl(np.concatenate(windows)) == pytest.approx(np.mean([avg_rnl(w, 100) for w in windows]), abs=1e-12)


def test_anse_examples(rng):
    d = rng.standard_normal((3, 500))
    assert anse(d, d).anse_db[0] == 0.0
    assert anse(d / 10, d).anse_db[0] == pytest.approx(-20.0, abs=1e-9)
    assert anse_from_power([[0.01], [1.0]], [[1.0], [1.0]]).anse_db[0] == pytest.approx(-10.0, abs=1e-9)


def test_anse_blocks_and_degenerate():
    e = np.ones((2, 10))
    d = np.ones((2, 10))
    d[1, 5:] = 0
    res = block_anse(e, d, 5)
    assert res.anse_db.shape == (2,)
    assert list(res.degenerate) == [False, True]
    assert np.all(np.isfinite(res.anse_db))
    # incomplete trailing block is dropped
    assert block_anse(e[:, :9], d[:, :9], 5).anse_db.shape == (1,)
    with pytest.raises(ValueError):
        anse(np.ones((2, 3)), np.ones((2, 4)))


@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_anse_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((3, 4, 200))
    e = 0.1 * rng.standard_normal((3, 4, 200))
    np.testing.assert_allclose(anse(scale * e, scale * d).anse_db, anse(e, d).anse_db, atol=1e-9, rtol=0)


def test_tone_spectrum_peak():
    bin_index = 100
    f0 = bin_index * FS / 4096
    x = np.sin(2 * np.pi * f0 * np.arange(8 * 4096) / FS)
    f, p = power_spectrum(x, FS)
    assert f[1] - f[0] == pytest.approx(FS / 4096)
    assert int(np.argmax(p)) == bin_index
    db = psd_db(p)
    assert db[bin_index] - np.median(db) >= 40


def test_white_noise_is_flat():
    x = np.random.default_rng(3).standard_normal(200 * 4096)
    f, p = power_spectrum(x, FS)
    db = psd_db(p[1:-1])
    assert np.all(np.abs(db - np.mean(db)) <= 3.0)


def test_zero_signal_at_floor():
    _, p = power_spectrum(np.zeros(8192), FS)
    np.testing.assert_array_equal(psd_db(p), 10 * np.log10(PSD_FLOOR))


def test_degenerate_lengths():
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(100), FS)
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(5000), FS, segment_len=1)
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(5000), FS, overlap=1.0)
