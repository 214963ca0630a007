"""Tonal mean-dynamics of per-node control on a coupled plant.

For a shared tonal reference of amplitude ``A`` at frequency ``f``, the mean
weight dynamics of per-node FxLMS near ``f`` are governed by

    M(f) = (N * A**2 / 4) * diag(conj(Shat_kk(f))) @ S(f)

(``S(f)`` the ``K x K`` secondary frequency response). Independent FxLMS is
stable only if every eigenvalue of ``M`` has positive real part. Adding a
penalty ``alpha`` shifts the spectrum by ``+alpha``, and re-centering the
penalty after each converged window contracts mode ``i`` by
``alpha / |lambda_i + alpha|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .acoustics import PathSet, stack_taps


def frequency_response(taps: np.ndarray, freq_hz: float, sample_rate_hz: int) -> complex:
    n = np.arange(taps.shape[-1])
    return taps @ np.exp(-2j * np.pi * freq_hz / sample_rate_hz * n)


def tonal_modes(paths: PathSet, tones_hz: Sequence[float], n_taps: int, amplitude: float = 1.0) -> np.ndarray:
    """Eigenvalues of ``M(f)`` for each tone, shape ``(n_tones, K)``."""
    k = paths.n_nodes
    length = max(len(s) for row in paths.secondary for s in row)
    S = np.stack([stack_taps(row, length) for row in paths.secondary])
    shat = stack_taps(paths.estimates)
    out = np.empty((len(tones_hz), k), dtype=complex)
    for i, f in enumerate(tones_hz):
        Sf = frequency_response(S, f, paths.sample_rate_hz)
        model = frequency_response(shat, f, paths.sample_rate_hz)
        out[i] = np.linalg.eigvals((n_taps * amplitude**2 / 4) * np.diag(np.conj(model)) @ Sf)
    return out


@dataclass
class ModeSummary:
    min_real: float
    n_unstable: int
    leaky_stable: bool
    boost_contraction: float


def summarize_modes(modes: np.ndarray, alpha: float) -> ModeSummary:
    """Stability of free, penalized, and re-centered per-node control for one ``alpha``."""
    modes = np.asarray(modes).ravel()
    return ModeSummary(
        min_real=float(modes.real.min()),
        n_unstable=int(np.sum(modes.real < 0)),
        leaky_stable=bool(np.all(modes.real + alpha > 0)),
        boost_contraction=float(np.max(alpha / np.abs(modes + alpha))) if alpha > 0 else float("nan"),
    )
