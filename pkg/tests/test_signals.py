import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from anc_lab.metrics import power_spectrum
from anc_lab.signals import (
    NyquistError,
    Signal,
    ToneSpec,
    WaveFormatError,
    bandpass_taps,
    gen_bandlimited_noise,
    gen_multitone,
    load_wave_file,
)

FS = 16000


def test_quarter_rate_tone_samples():
    sig = gen_multitone([ToneSpec(FS / 4)], FS, 4)
    np.testing.assert_allclose(sig.samples, [0.0, 1.0, 0.0, -1.0], atol=1e-12)
    assert sig.sample_rate_hz == FS


def test_no_tones_gives_silence():
    assert np.array_equal(gen_multitone([], FS, 100).samples, np.zeros(100))


def test_tone_sum_matches_formula():
    tones = [ToneSpec(f, 0.5 + i / 10, i * 0.3) for i, f in enumerate((300, 400, 500, 600, 700))]
    n = np.arange(2000)
    expected = sum(t.amplitude * np.sin(2 * np.pi * t.frequency_hz * n / FS + t.phase_rad) for t in tones)
    np.testing.assert_allclose(gen_multitone(tones, FS, 2000).samples, expected, atol=1e-12)


@given(periods=st.integers(1, 50), cycles_per_frame=st.integers(1, 200), phase=st.floats(0, 2 * np.pi))
@settings(max_examples=60, deadline=None)
def test_unit_tone_rms_over_whole_periods(periods, cycles_per_frame, phase):
    # choose f so the frame holds an integer number of cycles
    n = 400 * periods
    f = FS * cycles_per_frame / n
    if f >= FS / 2:
        return
    x = gen_multitone([ToneSpec(f, 1.0, phase)], FS, n).samples
    assert abs(np.sqrt(np.mean(x**2)) - 1 / np.sqrt(2)) < 1e-9


@pytest.mark.parametrize("f", [FS / 2, FS])
def test_tone_at_or_above_nyquist_rejected(f):
    with pytest.raises(NyquistError):
        gen_multitone([ToneSpec(f)], FS, 10)


def test_signal_validation():
    with pytest.raises(ValueError):
        Signal(np.array([0.0, np.nan]), FS)
    with pytest.raises(ValueError):
        Signal(np.zeros(3), 0)


def test_bandpass_design():
    taps = bandpass_taps(200, 600, FS)
    assert taps.size == 513
    np.testing.assert_allclose(taps, taps[::-1], atol=1e-15)


def test_bandlimited_power_stays_in_band():
    x = gen_bandlimited_noise(200, 600, FS, 20 * FS, seed=3).samples
    f, p = power_spectrum(x, FS)
    inside = (f >= 180) & (f <= 660)
    assert p[~inside].sum() <= 0.10 * p.sum()


def test_bandlimited_rms_and_determinism():
    a = gen_bandlimited_noise(200, 600, FS, 8000, seed=9, target_rms=0.3).samples
    b = gen_bandlimited_noise(200, 600, FS, 8000, seed=9, target_rms=0.3).samples
    c = gen_bandlimited_noise(200, 600, FS, 8000, seed=10, target_rms=0.3).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    assert np.sqrt(np.mean(a**2)) == pytest.approx(0.3, rel=1e-12)


def test_bandlimited_edge_cases():
    assert np.array_equal(gen_bandlimited_noise(200, 600, FS, 500, 1, target_rms=0).samples, np.zeros(500))
    assert len(gen_bandlimited_noise(200, 600, FS, 0, 1)) == 0
    with pytest.raises(NyquistError):
        gen_bandlimited_noise(200, 8000, FS, 10, 1)
    with pytest.raises(ValueError):
        gen_bandlimited_noise(600, 200, FS, 10, 1)


def _write_pcm16(path, frames, channels=1, rate=FS):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(struct.pack(f"<{len(frames)}h", *frames))


def test_pcm16_normalization(tmp_path):
    path = tmp_path / "a.wav"
    _write_pcm16(path, [0, 32767])
    sig = load_wave_file(path)
    assert sig.sample_rate_hz == FS
    np.testing.assert_allclose(sig.samples, [0.0, 32767 / 32768])
    assert sig.samples[1] == pytest.approx(0.99997, abs=1e-5)


def test_stereo_keeps_first_channel(tmp_path):
    path = tmp_path / "s.wav"
    _write_pcm16(path, [100, -5, 200, -6, 300, -7], channels=2)
    np.testing.assert_allclose(load_wave_file(path).samples, np.array([100, 200, 300]) / 32768)


def test_float32_read_as_is(tmp_path):
    path = tmp_path / "f.wav"
    data = np.array([0.25, -0.5, 0.125], dtype=np.float32)
    wavfile.write(path, 8000, data)
    sig = load_wave_file(path)
    assert sig.sample_rate_hz == 8000
    np.testing.assert_array_equal(sig.samples, data.astype(float))


def test_truncated_header_rejected(tmp_path):
    good = tmp_path / "g.wav"
    _write_pcm16(good, list(range(100)))
    bad = tmp_path / "bad.wav"
    bad.write_bytes(good.read_bytes()[:30])
    with pytest.raises(WaveFormatError):
        load_wave_file(bad)


def test_truncated_data_rejected(tmp_path):
    good = tmp_path / "g.wav"
    _write_pcm16(good, list(range(100)))
    bad = tmp_path / "short.wav"
    bad.write_bytes(good.read_bytes()[:-50])
    with pytest.raises(WaveFormatError):
        load_wave_file(bad)


def test_unsupported_sample_format(tmp_path):
    path = tmp_path / "u8.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(FS)
        w.writeframes(bytes([128, 200, 50]))
    with pytest.raises(WaveFormatError):
        load_wave_file(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_wave_file("/nonexistent/x.wav")
