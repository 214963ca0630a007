"""Reference and primary-noise waveforms.

All generators are pure functions of their arguments. Amplitudes are
dimensionless with nominal full scale of +/-1.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

BANDPASS_ORDER = 512


class NyquistError(ValueError):
    """A tone or band edge sits at or above half the sample rate."""


class WaveFormatError(ValueError):
    """A wave file could not be read in full."""


@dataclass(frozen=True)
class Signal:
    """Sampled waveform with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class ToneSpec:
    frequency_hz: float
    amplitude: float = 1.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError(f"tone frequency must be positive, got {self.frequency_hz}")
        if self.amplitude < 0:
            raise ValueError(f"tone amplitude must be nonnegative, got {self.amplitude}")


def gen_multitone(tones: Sequence[ToneSpec], sample_rate_hz: int, n_samples: int) -> Signal:
    """Sum of sinusoids ``amp * sin(2*pi*f*n/fs + phase)``.

    Raises:
        NyquistError: if any tone is at or above ``sample_rate_hz / 2``.
    """
    if n_samples < 0:
        raise ValueError(f"n_samples must be >= 0, got {n_samples}")
    nyquist = sample_rate_hz / 2
    for tone in tones:
        if tone.frequency_hz >= nyquist:
            raise NyquistError(
                f"tone at {tone.frequency_hz} Hz is not below Nyquist ({nyquist} Hz)"
            )
    n = np.arange(n_samples, dtype=float)
    out = np.zeros(n_samples)
    for tone in tones:
        out += tone.amplitude * np.sin(2 * math.pi * tone.frequency_hz * n / sample_rate_hz + tone.phase_rad)
    return Signal(out, sample_rate_hz)


def bandpass_taps(low_hz: float, high_hz: float, sample_rate_hz: int, order: int = BANDPASS_ORDER) -> np.ndarray:
    """Hamming-windowed sinc band-pass with ``order + 1`` linear-phase taps."""
    _check_band(low_hz, high_hz, sample_rate_hz)
    return sps.firwin(order + 1, [low_hz, high_hz], pass_zero=False, window="hamming", fs=sample_rate_hz)


def gen_bandlimited_noise(
    low_hz: float,
    high_hz: float,
    sample_rate_hz: int,
    n_samples: int,
    seed: int,
    target_rms: float = 1.0,
) -> Signal:
    """Seeded white noise band-limited to ``[low_hz, high_hz]`` and scaled to ``target_rms``.

    The filter's start-up transient is generated and discarded, so the
    returned samples are stationary from the first one.
    """
    taps = bandpass_taps(low_hz, high_hz, sample_rate_hz)
    if n_samples < 0:
        raise ValueError(f"n_samples must be >= 0, got {n_samples}")
    if target_rms < 0:
        raise ValueError(f"target_rms must be nonnegative, got {target_rms}")
    if n_samples == 0:
        return Signal(np.zeros(0), sample_rate_hz)
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples + taps.size - 1)
    filtered = sps.lfilter(taps, 1.0, white)[taps.size - 1:]
    rms = math.sqrt(float(np.mean(filtered**2)))
    if target_rms == 0 or rms == 0:
        return Signal(np.zeros(n_samples), sample_rate_hz)
    return Signal(filtered * (target_rms / rms), sample_rate_hz)


def _check_band(low_hz, high_hz, sample_rate_hz):
    if not 0 < low_hz < high_hz:
        raise ValueError(f"band edges must satisfy 0 < low < high, got ({low_hz}, {high_hz})")
    if high_hz >= sample_rate_hz / 2:
        raise NyquistError(f"upper band edge {high_hz} Hz is not below Nyquist ({sample_rate_hz / 2} Hz)")


def load_wave_file(path: str | Path) -> Signal:
    """Read a RIFF/WAVE file as a mono signal normalized to +/-1.

    PCM16 is divided by 32768 and IEEE float32 is taken as-is. Multi-channel
    files contribute their first channel only.

    Raises:
        WaveFormatError: on unreadable, truncated, or unsupported files.
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            # scipy warns (rather than fails) on a short data chunk
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, struct.error, wavfile.WavFileWarning, EOFError, OSError) as exc:
        raise WaveFormatError(f"cannot read {path}: {exc}") from exc

    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise WaveFormatError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    if not np.all(np.isfinite(samples)):
        raise WaveFormatError(f"{path}: contains non-finite samples")
    return Signal(samples, int(rate))
