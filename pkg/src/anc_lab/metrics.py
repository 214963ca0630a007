"""Residual noise level, average normalized squared error, power spectra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .controllers import RNL_FLOOR, BoostEvent

EPS = 1e-20
PSD_FLOOR = 1e-30


def rnl(e):
    """Residual noise level ``10 log10(e^2 + eps)`` in dB (scalar or array)."""
    e = np.asarray(e, dtype=float)
    out = 10.0 * np.log10(e * e + RNL_FLOOR)
    return float(out) if out.ndim == 0 else out


def avg_rnl(window, window_len: int | None = None) -> float:
    """Arithmetic mean of one closed window of RNL values."""
    window = np.asarray(window, dtype=float)
    if window_len is not None and window.size != window_len:
        raise AssertionError(f"RNL window holds {window.size} values, expected {window_len}")
    if window.size == 0:
        raise AssertionError("empty RNL window")
    return float(np.mean(window))


@dataclass
class AnseResult:
    anse_db: np.ndarray
    node_db: np.ndarray
    degenerate: np.ndarray


def anse_from_power(e_power, d_power) -> AnseResult:
    """ANSE from per-node mean-square values shaped ``(K, n_blocks)``.

    Blocks where a node's disturbance power is zero are evaluated with the
    floor and flagged in ``degenerate``.
    """
    e_power = np.atleast_2d(np.asarray(e_power, dtype=float))
    d_power = np.atleast_2d(np.asarray(d_power, dtype=float))
    node_db = 10.0 * np.log10((e_power + EPS) / (d_power + EPS))
    return AnseResult(node_db.mean(axis=0), node_db, np.any(d_power == 0, axis=0))


def anse(e_blocks, d_blocks) -> AnseResult:
    """Block ANSE from sample arrays shaped ``(K, n_blocks, block_len)``.

    2-D ``(K, block_len)`` input is treated as a single block.
    """
    e_blocks = np.asarray(e_blocks, dtype=float)
    d_blocks = np.asarray(d_blocks, dtype=float)
    if e_blocks.shape != d_blocks.shape:
        raise ValueError(f"error and disturbance blocks differ in shape: {e_blocks.shape} vs {d_blocks.shape}")
    if e_blocks.ndim == 2:
        e_blocks = e_blocks[:, None, :]
        d_blocks = d_blocks[:, None, :]
    return anse_from_power(np.mean(e_blocks**2, axis=-1), np.mean(d_blocks**2, axis=-1))


def block_anse(e, d, block_len: int) -> AnseResult:
    """Split ``(K, n)`` streams into complete, non-overlapping blocks and score each."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    n_blocks = e.shape[1] // block_len
    cut = n_blocks * block_len
    k = e.shape[0]
    return anse(e[:, :cut].reshape(k, n_blocks, block_len), d[:, :cut].reshape(k, n_blocks, block_len))


def power_spectrum(x, sample_rate_hz: int, segment_len: int = 4096, overlap: float = 0.5):
    """One-sided Welch PSD with a Hann window.

    Returns ``(freqs_hz, psd)``; bin spacing is ``sample_rate_hz / segment_len``.
    """
    x = np.asarray(x, dtype=float)
    if segment_len < 2 or x.ndim != 1 or segment_len > x.size:
        raise ValueError(f"need 2 <= segment_len <= len(signal), got {segment_len} for {x.size} samples")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    noverlap = int(round(segment_len * overlap))
    return sps.welch(
        x,
        fs=sample_rate_hz,
        window="hann",
        nperseg=segment_len,
        noverlap=noverlap,
        detrend=False,
        return_onesided=True,
        scaling="density",
    )


def psd_db(psd):
    return 10.0 * np.log10(np.asarray(psd) + PSD_FLOOR)


@dataclass
class RunTrace:
    """Everything a run produces, in memory.

    ``window_eta[k, i]`` is the mean RNL of node ``k`` over window ``i``;
    ``eta_min[k, i]`` is that node's best-window record after window ``i``
    (``inf`` until a boost installs one). ``center_changes`` lists
    ``(node, window)`` pairs where the center filter differed from its value
    at the previous window boundary, found by direct comparison.
    """

    algorithm: str
    sample_rate_hz: int
    n_nodes: int
    n_samples: int
    block_len: int
    window_len: int | None
    block_e_power: np.ndarray
    block_d_power: np.ndarray
    window_eta: np.ndarray
    eta_min: np.ndarray
    boost_events: list[BoostEvent] = field(default_factory=list)
    center_changes: list[tuple[int, int]] = field(default_factory=list)
    diverged_at: np.ndarray | None = None
    sample_offset: int = 0
    e: np.ndarray | None = None
    d: np.ndarray | None = None
    y: np.ndarray | None = None
    final_weights: np.ndarray | None = None
    final_centers: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None and bool(np.any(self.diverged_at >= 0))

    @property
    def anse(self) -> AnseResult:
        return anse_from_power(self.block_e_power, self.block_d_power)

    @property
    def n_blocks(self) -> int:
        return self.block_e_power.shape[1]

    def final_anse_db(self) -> float:
        if self.n_blocks == 0:
            return float("nan")
        return float(self.anse.anse_db[-1])

    def boost_count(self) -> int:
        return len(self.boost_events)

    def spectrum(self, which: str = "e", seconds: float | None = None, segment_len: int = 4096, overlap: float = 0.5):
        """Per-node PSD of the retained ``e`` or ``d`` tail; returns ``(freqs, psd (K, bins))``."""
        data = getattr(self, which)
        if data is None:
            raise ValueError(f"trace kept no {which!r} samples")
        if seconds is not None:
            data = data[:, -int(round(seconds * self.sample_rate_hz)):]
        psd = []
        freqs = None
        for row in data:
            freqs, p = power_spectrum(row, self.sample_rate_hz, segment_len, overlap)
            psd.append(p)
        return freqs, np.array(psd)
