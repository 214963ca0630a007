"""Streaming acoustic plant: primary paths, the secondary-path matrix, crosstalk.

Error at sensor ``k`` follows the subtractive convention

    e_k(n) = d_k(n) - sum_m (s_km * y_m)(n),   d_k(n) = (p_k * x_k)(n)

where the ``m == k`` term is the node's own secondary path and the rest is
crosstalk from the other secondary sources.

Delay lines use a doubled buffer of length ``2 * M``: each sample is written
twice so ``buf[pos:pos + M]`` always holds ``x(n), x(n-1), ..., x(n-M+1)``
contiguously. The jitted helpers here are shared by the step-wise API and the
whole-run engine, so both produce bit-identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit


class DivergenceError(RuntimeError):
    """A control signal fed to the plant is not finite."""


class PathFileError(ValueError):
    """A coefficient file is malformed or inconsistent with the scenario."""


@njit(cache=True)
def push_sample(buf, pos, x):
    """Insert ``x`` as the newest sample; returns the new read position."""
    m = buf.size // 2
    pos -= 1
    if pos < 0:
        pos += m
    buf[pos] = x
    buf[pos + m] = x
    return pos


@njit(cache=True)
def fir_dot(taps, buf, pos):
    acc = 0.0
    for j in range(taps.size):
        acc += taps[j] * buf[pos + j]
    return acc


@dataclass(frozen=True)
class FirResponse:
    """FIR coefficients of one acoustic path or path model."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.ascontiguousarray(self.taps, dtype=float).reshape(-1)
        if taps.size < 1:
            raise ValueError("a FIR response needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("FIR taps must be finite")
        object.__setattr__(self, "taps", taps)

    def __len__(self) -> int:
        return self.taps.size

    @property
    def energy(self) -> float:
        return float(np.dot(self.taps, self.taps))

    def __eq__(self, other):
        if not isinstance(other, FirResponse):
            return NotImplemented
        return np.array_equal(self.taps, other.taps)

    __hash__ = None


def _as_fir(value) -> FirResponse:
    return value if isinstance(value, FirResponse) else FirResponse(value)


@dataclass(frozen=True)
class PathSet:
    """Plant wiring for ``K`` nodes.

    Attributes:
        primary: ``K`` paths from the noise reference to each error sensor.
        secondary: ``K x K`` nested list; ``secondary[k][m]`` runs from
            secondary source ``m`` to error sensor ``k``.
        estimates: ``K`` self-path models used by per-node controllers.
        estimate_matrix: optional full ``K x K`` model set for centralized
            control, indexed like ``secondary``.
    """

    primary: Sequence[FirResponse]
    secondary: Sequence[Sequence[FirResponse]]
    estimates: Sequence[FirResponse] = ()
    estimate_matrix: Sequence[Sequence[FirResponse]] | None = None
    sample_rate_hz: int = 16000

    def __post_init__(self):
        primary = tuple(_as_fir(p) for p in self.primary)
        secondary = tuple(tuple(_as_fir(s) for s in row) for row in self.secondary)
        k = len(primary)
        if k < 1:
            raise ValueError("a plant needs at least one node")
        if len(secondary) != k or any(len(row) != k for row in secondary):
            raise ValueError(f"secondary paths must form a {k}x{k} matrix")
        estimates = tuple(_as_fir(s) for s in self.estimates)
        if not estimates:
            estimates = tuple(secondary[i][i] for i in range(k))
        if len(estimates) != k:
            raise ValueError(f"expected {k} self-path estimates, got {len(estimates)}")
        if len({len(s) for s in estimates}) != 1:
            raise ValueError("all self-path estimates must share one length")
        matrix = self.estimate_matrix
        if matrix is not None:
            matrix = tuple(tuple(_as_fir(s) for s in row) for row in matrix)
            if len(matrix) != k or any(len(row) != k for row in matrix):
                raise ValueError(f"estimate matrix must be {k}x{k}")
        object.__setattr__(self, "primary", primary)
        object.__setattr__(self, "secondary", secondary)
        object.__setattr__(self, "estimates", estimates)
        object.__setattr__(self, "estimate_matrix", matrix)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def n_nodes(self) -> int:
        return len(self.primary)

    @property
    def estimate_len(self) -> int:
        return len(self.estimates[0])

    def full_estimates(self) -> tuple[tuple[FirResponse, ...], ...]:
        """Estimate matrix, falling back to self-path models on the diagonal and zeros elsewhere."""
        if self.estimate_matrix is not None:
            return self.estimate_matrix
        k = self.n_nodes
        zero = FirResponse(np.zeros(self.estimate_len))
        return tuple(
            tuple(self.estimates[i] if i == j else zero for j in range(k)) for i in range(k)
        )

    def node(self, k: int) -> PathSet:
        """Single-node plant made of node ``k``'s own paths (crosstalk dropped)."""
        matrix = None
        if self.estimate_matrix is not None:
            matrix = ((self.estimate_matrix[k][k],),)
        return PathSet(
            primary=(self.primary[k],),
            secondary=((self.secondary[k][k],),),
            estimates=(self.estimates[k],),
            estimate_matrix=matrix,
            sample_rate_hz=self.sample_rate_hz,
        )


def stack_taps(paths: Sequence[FirResponse], length: int | None = None) -> np.ndarray:
    """Zero-pad a sequence of FIR responses into a 2-D array."""
    length = length or max(len(p) for p in paths)
    out = np.zeros((len(paths), length))
    for i, p in enumerate(paths):
        out[i, : len(p)] = p.taps
    return out


class ConvolverState:
    """Delay line holding the most recent ``size`` inputs of one stream."""

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("delay line size must be >= 1")
        self.size = int(size)
        self.buf = np.zeros(2 * self.size)
        self.pos = 0

    def reset(self) -> None:
        self.buf[:] = 0.0
        self.pos = 0

    def push(self, x: float) -> None:
        self.pos = push_sample(self.buf, self.pos, float(x))

    def window(self, n: int | None = None) -> np.ndarray:
        """Newest-first view of the last ``n`` samples."""
        n = self.size if n is None else n
        return self.buf[self.pos:self.pos + n]


def convolve_step(state: ConvolverState, path: FirResponse, input_sample: float) -> float:
    """Push one input and return ``sum_j taps[j] * input(n - j)``."""
    if len(path) > state.size:
        raise ValueError(f"delay line of {state.size} samples is too short for {len(path)} taps")
    state.push(input_sample)
    return fir_dot(path.taps, state.buf, state.pos)


class PlantState:
    """Per-run streaming state: one delay line per reference and per control stream."""

    def __init__(self, paths: PathSet):
        k = paths.n_nodes
        self.n_nodes = k
        self.x_lines = [ConvolverState(len(paths.primary[i])) for i in range(k)]
        sec_len = max(len(s) for row in paths.secondary for s in row)
        self.y_lines = [ConvolverState(sec_len) for _ in range(k)]

    def reset(self) -> None:
        for line in self.x_lines + self.y_lines:
            line.reset()


def plant_step(paths: PathSet, x, y, state: PlantState) -> tuple[np.ndarray, np.ndarray]:
    """Advance the plant by one sample.

    Args:
        x: ``K`` reference samples at time ``n``.
        y: ``K`` control samples at time ``n``.

    Returns:
        ``(d, e)``: disturbances and errors at the ``K`` sensors.

    Raises:
        DivergenceError: if any control sample is not finite.
    """
    k = paths.n_nodes
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (k,) or y.shape != (k,):
        raise ValueError(f"expected {k} reference and {k} control samples")
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"non-finite control output from node(s) {np.flatnonzero(~np.isfinite(y)).tolist()}")
    d = np.empty(k)
    e = np.empty(k)
    for i in range(k):
        d[i] = convolve_step(state.x_lines[i], paths.primary[i], x[i])
    for m in range(k):
        state.y_lines[m].push(y[m])
    for i in range(k):
        acc = 0.0
        for m in range(k):
            line = state.y_lines[m]
            acc += fir_dot(paths.secondary[i][m].taps, line.buf, line.pos)
        e[i] = d[i] - acc
    return d, e


def crosstalk_interference(paths: PathSet, y_history, k: int) -> float:
    """Other nodes' anti-noise arriving at sensor ``k`` at the latest sample.

    Args:
        y_history: ``(K, n + 1)`` array of control outputs, oldest first;
            the last column is time ``n``.
    """
    y_history = np.atleast_2d(np.asarray(y_history, dtype=float))
    total = 0.0
    for m in range(paths.n_nodes):
        if m == k:
            continue
        taps = paths.secondary[k][m].taps
        recent = y_history[m, ::-1][: taps.size]
        total += float(np.dot(taps[: recent.size], recent))
    return total


def interference_now(paths: PathSet, state: PlantState, k: int) -> float:
    """Crosstalk at sensor ``k`` for the sample most recently passed to :func:`plant_step`."""
    total = 0.0
    for m in range(paths.n_nodes):
        if m != k:
            line = state.y_lines[m]
            total += fir_dot(paths.secondary[k][m].taps, line.buf, line.pos)
    return total


def _decaying_path(rng, length, delay, decay_rate):
    taps = np.zeros(length)
    body = length - delay
    taps[delay:] = rng.standard_normal(body) * np.exp(-decay_rate * np.arange(body))
    norm = math.sqrt(float(np.dot(taps, taps)))
    return taps / norm if norm > 0 else taps


def synth_paths(
    n_nodes: int,
    primary_len: int,
    secondary_len: int,
    delay_range: tuple[int, int] = (0, 0),
    decay_rate: float = 0.01,
    coupling_gain: float = 0.0,
    seed: int = 0,
    primary_delay_range: tuple[int, int] | None = None,
    sample_rate_hz: int = 16000,
) -> PathSet:
    """Random exponentially-decaying FIR plant with tunable crosstalk.

    Every path starts with a random integer delay drawn from ``delay_range``
    (inclusive), followed by Gaussian taps shaped by ``exp(-decay_rate * j)``
    and normalized to unit energy. Off-diagonal secondary paths are then
    scaled by ``coupling_gain``, so their energy is ``coupling_gain**2``.
    Primary paths draw their delays from ``primary_delay_range`` when given.
    """
    if n_nodes < 1 or primary_len < 1 or secondary_len < 1:
        raise ValueError("node count and path lengths must be >= 1")
    if coupling_gain < 0:
        raise ValueError(f"coupling_gain must be >= 0, got {coupling_gain}")
    p_delays = primary_delay_range if primary_delay_range is not None else delay_range
    for lo, hi, length in ((*delay_range, secondary_len), (*p_delays, primary_len)):
        if not 0 <= lo <= hi < length:
            raise ValueError(f"delay range ({lo}, {hi}) does not fit a {length}-tap path")
    rng = np.random.default_rng(seed)
    primary = []
    for _ in range(n_nodes):
        delay = int(rng.integers(p_delays[0], p_delays[1] + 1))
        primary.append(FirResponse(_decaying_path(rng, primary_len, delay, decay_rate)))
    secondary = []
    for k in range(n_nodes):
        row = []
        for m in range(n_nodes):
            delay = int(rng.integers(delay_range[0], delay_range[1] + 1))
            taps = _decaying_path(rng, secondary_len, delay, decay_rate)
            if m != k:
                taps = taps * coupling_gain
            row.append(FirResponse(taps))
        secondary.append(row)
    return PathSet(primary, secondary, sample_rate_hz=sample_rate_hz)


def _model(rng, true_path: FirResponse, length: int, mismatch_noise: float) -> FirResponse:
    est = np.zeros(length)
    n = min(length, len(true_path))
    est[:n] = true_path.taps[:n]
    if mismatch_noise > 0:
        noise = rng.standard_normal(length)
        energy = float(np.dot(est, est))
        est = est + noise * math.sqrt(mismatch_noise * energy / float(np.dot(noise, noise)))
    return FirResponse(est)


def make_estimates(
    paths: PathSet,
    length: int,
    mismatch_noise: float = 0.0,
    seed: int = 0,
    full_matrix: bool = False,
) -> PathSet:
    """Return ``paths`` with truncated, optionally perturbed, secondary-path models.

    Each model is the first ``length`` taps of the true path (zero-padded if
    the path is shorter) plus Gaussian noise whose energy is exactly
    ``mismatch_noise`` times the truncated model's energy. With
    ``full_matrix`` every ``S k m`` is modelled; the diagonal models are the
    same objects in both views.
    """
    if length < 1:
        raise ValueError("estimate length must be >= 1")
    if mismatch_noise < 0:
        raise ValueError("mismatch_noise must be >= 0")
    rng = np.random.default_rng(seed)
    k = paths.n_nodes
    if not full_matrix:
        estimates = tuple(_model(rng, paths.secondary[i][i], length, mismatch_noise) for i in range(k))
        return replace(paths, estimates=estimates, estimate_matrix=None)
    matrix = tuple(
        tuple(_model(rng, paths.secondary[i][j], length, mismatch_noise) for j in range(k))
        for i in range(k)
    )
    estimates = tuple(matrix[i][i] for i in range(k))
    return replace(paths, estimates=estimates, estimate_matrix=matrix)


# -- coefficient files ------------------------------------------------------

def _format_row(label: str, taps: np.ndarray) -> str:
    return label + " : " + " ".join(repr(float(t)) for t in taps)


def read_coefficient_file(path: str | Path) -> tuple[dict[str, int], dict[tuple, np.ndarray]]:
    """Parse header ``key value`` lines and ``LABEL i [j] : c0 c1 ...`` rows.

    Indices in the file are 1-based; returned keys are ``(label, i, ...)``
    with 0-based indices.
    """
    header: dict[str, int] = {}
    rows: dict[tuple, np.ndarray] = {}
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        if ":" in line:
            label, _, values = line.partition(":")
            parts = label.split()
            try:
                key = (parts[0], *(int(p) - 1 for p in parts[1:]))
                taps = np.array([float(v) for v in values.split()])
            except (ValueError, IndexError) as exc:
                raise PathFileError(f"{where}: bad coefficient row ({exc})") from None
            if taps.size == 0 or any(i < 0 for i in key[1:]):
                raise PathFileError(f"{where}: empty row or index below 1")
            if key in rows:
                raise PathFileError(f"{where}: duplicate row {label.strip()!r}")
            rows[key] = taps
        else:
            parts = line.split()
            if len(parts) != 2:
                raise PathFileError(f"{where}: expected 'key value', got {line!r}")
            try:
                header[parts[0]] = int(parts[1])
            except ValueError:
                raise PathFileError(f"{where}: header value must be an integer") from None
    return header, rows


def _require(header, key, path):
    if key not in header:
        raise PathFileError(f"{path}: missing header field {key!r}")
    return header[key]


def _fetch(rows, key, length, length_name, path):
    if key not in rows:
        raise PathFileError(f"{path}: missing row {key[0]} " + " ".join(str(i + 1) for i in key[1:]))
    taps = rows.pop(key)
    if taps.size != length:
        raise PathFileError(
            f"{path}: row {key[0]} {' '.join(str(i + 1) for i in key[1:])} has {taps.size} taps, "
            f"header {length_name} says {length}"
        )
    return FirResponse(taps)


def save_paths(paths: PathSet, path: str | Path) -> None:
    k = paths.n_nodes
    p_len = {len(p) for p in paths.primary}
    s_len = {len(s) for row in paths.secondary for s in row}
    if len(p_len) != 1 or len(s_len) != 1:
        raise PathFileError("path files need uniform primary and secondary lengths")
    lines = [
        "# anc-lab path file",
        f"K {k}",
        f"fs {paths.sample_rate_hz}",
        f"primary_len {p_len.pop()}",
        f"secondary_len {s_len.pop()}",
        f"estimate_len {paths.estimate_len}",
    ]
    for i in range(k):
        lines.append(_format_row(f"P {i + 1}", paths.primary[i].taps))
    for i in range(k):
        for j in range(k):
            lines.append(_format_row(f"S {i + 1} {j + 1}", paths.secondary[i][j].taps))
    for i in range(k):
        lines.append(_format_row(f"Shat {i + 1}", paths.estimates[i].taps))
    if paths.estimate_matrix is not None:
        for i in range(k):
            for j in range(k):
                lines.append(_format_row(f"Shat {i + 1} {j + 1}", paths.estimate_matrix[i][j].taps))
    Path(path).write_text("\n".join(lines) + "\n")


def load_paths(path: str | Path, n_nodes: int | None = None) -> PathSet:
    """Read a path file written by :func:`save_paths` (or by hand).

    Raises:
        PathFileError: on malformed content or when the file's ``K``
            differs from ``n_nodes``.
    """
    header, rows = read_coefficient_file(path)
    k = _require(header, "K", path)
    if k < 1:
        raise PathFileError(f"{path}: K must be >= 1")
    if n_nodes is not None and k != n_nodes:
        raise PathFileError(f"{path}: file describes K={k} nodes but the scenario has K={n_nodes}")
    p_len = _require(header, "primary_len", path)
    s_len = _require(header, "secondary_len", path)
    fs = header.get("fs", 16000)
    primary = [_fetch(rows, ("P", i), p_len, "primary_len", path) for i in range(k)]
    secondary = [[_fetch(rows, ("S", i, j), s_len, "secondary_len", path) for j in range(k)] for i in range(k)]
    estimates: list[FirResponse] = []
    matrix = None
    if any(key[0] == "Shat" for key in rows):
        e_len = _require(header, "estimate_len", path)
        if all(("Shat", i, j) in rows for i in range(k) for j in range(k)):
            matrix = [[_fetch(rows, ("Shat", i, j), e_len, "estimate_len", path) for j in range(k)] for i in range(k)]
        if any(("Shat", i) in rows for i in range(k)):
            estimates = [_fetch(rows, ("Shat", i), e_len, "estimate_len", path) for i in range(k)]
        elif matrix is not None:
            estimates = [matrix[i][i] for i in range(k)]
    if rows:
        extra = sorted(" ".join([key[0], *(str(i + 1) for i in key[1:])]) for key in rows)
        raise PathFileError(f"{path}: unexpected rows {extra}")
    return PathSet(primary, secondary, estimates, matrix, sample_rate_hz=fs)
