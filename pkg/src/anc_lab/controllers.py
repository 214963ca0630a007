"""Adaptive controllers for multichannel ANC.

Per-node algorithms (no data crosses between nodes):

* FxLMS:      ``w <- w + mu * x' * e``
* WCFxLMS:    ``w <- w + mu * x' * e + mu * alpha * (center - w)``
* Leaky:      WCFxLMS with the center frozen at zero
* SB-WCFxLMS: WCFxLMS whose center is replaced by ``w`` whenever the mean
  residual noise level over a closed window beats the best window so far

plus a centralized multiple-error FxLMS baseline in which every source's
filter sees every error signal through the full secondary-path model matrix.

The update kernels are written so that the reductions hold bit-for-bit:
``alpha = 0`` adds an exact zero, and the leaky update *is* the
weight-constrained kernel called with a zero center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .acoustics import ConvolverState, DivergenceError, FirResponse, PathSet, PlantState, fir_dot, plant_step

RNL_FLOOR = 1e-20


@njit(cache=True)
def fxlms_kernel(w, xf_buf, xf_pos, mu, e):
    """In-place ``w += mu * x' * e``; returns False if any weight is non-finite."""
    check = 0.0
    for i in range(w.size):
        w[i] = w[i] + mu * xf_buf[xf_pos + i] * e
        check += w[i]
    return math.isfinite(check)


@njit(cache=True)
def wcfxlms_kernel(w, xf_buf, xf_pos, center, mu, alpha, e):
    """In-place weight-constrained update; the penalty uses the pre-update weights."""
    check = 0.0
    for i in range(w.size):
        w[i] = w[i] + mu * xf_buf[xf_pos + i] * e + mu * alpha * (center[i] - w[i])
        check += w[i]
    return math.isfinite(check)


@njit(cache=True)
def rnl_db(e):
    return 10.0 * math.log10(e * e + RNL_FLOOR)


@dataclass(frozen=True)
class BoostEvent:
    node: int
    sample: int
    old_eta_min: float
    new_eta_min: float


class NodeController:
    """State of one node's local controller.

    Args:
        n_taps: control filter length ``N``.
        estimate: the node's self-path model.
        mu: step size.
        alpha: penalty factor pulling ``w`` toward ``center``.
        center: initial center filter (zeros when omitted).
        window_len: residual-noise window in samples; ``None`` never closes
            a window.
        boost: whether closed windows may replace the center.
        node: index used in boost events.
    """

    def __init__(
        self,
        n_taps: int,
        estimate: FirResponse,
        mu: float,
        alpha: float = 0.0,
        center=None,
        window_len: int | None = None,
        boost: bool = False,
        node: int = 0,
    ):
        if n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if mu < 0 or alpha < 0:
            raise ValueError("mu and alpha must be >= 0")
        if window_len is not None and window_len < 1:
            raise ValueError("window_len must be >= 1 or None")
        self.n_taps = int(n_taps)
        self.estimate = estimate if isinstance(estimate, FirResponse) else FirResponse(estimate)
        self.mu = float(mu)
        self.alpha = float(alpha)
        self.w = np.zeros(self.n_taps)
        self.center = np.zeros(self.n_taps) if center is None else np.array(center, dtype=float)
        if self.center.shape != (self.n_taps,):
            raise ValueError(f"center filter must have {self.n_taps} taps")
        self.window_len = window_len
        self.boost = boost
        self.node = node
        self.x_line = ConvolverState(self.n_taps)
        self.est_line = ConvolverState(len(self.estimate))
        self.xf_line = ConvolverState(self.n_taps)
        self.rnl_sum = 0.0
        self.rnl_count = 0
        self.eta_min = math.inf
        self.boost_events = 0
        self.window_means: list[float] = []
        self.diverged = False

    @property
    def filtered_reference(self) -> np.ndarray:
        """Newest-first filtered-reference vector ``x'(n)``."""
        return self.xf_line.window()

    def control_output(self, x: float) -> float:
        """Push ``x(n)`` and return ``y(n) = w . [x(n) ... x(n-N+1)]``."""
        self.x_line.push(x)
        return fir_dot(self.w, self.x_line.buf, self.x_line.pos)

    def filtered_reference_step(self, x: float) -> float:
        """Push ``x(n)`` through the self-path model and store ``x'(n)``."""
        self.est_line.push(x)
        xf = fir_dot(self.estimate.taps, self.est_line.buf, self.est_line.pos)
        self.xf_line.push(xf)
        return xf

    def _mark(self, finite: bool) -> np.ndarray:
        if not finite:
            self.diverged = True
        return self.w

    def fxlms_update(self, e: float) -> np.ndarray:
        return self._mark(fxlms_kernel(self.w, self.xf_line.buf, self.xf_line.pos, self.mu, e))

    def wcfxlms_update(self, e: float) -> np.ndarray:
        return self._mark(
            wcfxlms_kernel(self.w, self.xf_line.buf, self.xf_line.pos, self.center, self.mu, self.alpha, e)
        )

    def leaky_fxlms_update(self, e: float) -> np.ndarray:
        zero = np.zeros(self.n_taps)
        return self._mark(wcfxlms_kernel(self.w, self.xf_line.buf, self.xf_line.pos, zero, self.mu, self.alpha, e))

    def self_boost_tick(self, e: float, n: int) -> BoostEvent | None:
        """Accumulate the residual noise level and, at a window boundary, maybe move the center.

        Sample ``n`` (0-based) closes a window when ``(n + 1) % window_len == 0``;
        the window then spans exactly ``window_len`` samples ending at ``n``.
        """
        self.rnl_sum += rnl_db(e)
        self.rnl_count += 1
        if self.window_len is None or (n + 1) % self.window_len != 0:
            return None
        if self.rnl_count != self.window_len:
            raise RuntimeError(
                f"node {self.node}: window closed after {self.rnl_count} samples, expected {self.window_len}"
            )
        eta_bar = self.rnl_sum / self.window_len
        self.window_means.append(eta_bar)
        self.rnl_sum = 0.0
        self.rnl_count = 0
        if self.boost and eta_bar < self.eta_min:
            event = BoostEvent(self.node, n, self.eta_min, eta_bar)
            self.center[:] = self.w
            self.eta_min = eta_bar
            self.boost_events += 1
            return event
        return None


def control_output(state: NodeController, x: float) -> float:
    return state.control_output(x)


def filtered_reference_step(state: NodeController, x: float) -> float:
    return state.filtered_reference_step(x)


def fxlms_update(state: NodeController, e: float) -> np.ndarray:
    return state.fxlms_update(e)


def wcfxlms_update(state: NodeController, e: float) -> np.ndarray:
    return state.wcfxlms_update(e)


def leaky_fxlms_update(state: NodeController, e: float) -> np.ndarray:
    return state.leaky_fxlms_update(e)


def self_boost_tick(state: NodeController, e: float, n: int) -> BoostEvent | None:
    return state.self_boost_tick(e, n)


def _plant_or_flag(paths, x, y, plant_state, nodes):
    try:
        return plant_step(paths, x, y, plant_state)
    except DivergenceError:
        for node, value in zip(nodes, y):
            if not math.isfinite(value):
                node.diverged = True
        raise


def decentralized_node_step(
    nodes: Sequence[NodeController], paths: PathSet, plant_state: PlantState, x, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One sample of independent per-node FxLMS.

    Returns ``(y, d, e)``. Raises :class:`DivergenceError` if a node's output
    is not finite; that node is flagged and the others are untouched.
    """
    y = np.array([node.control_output(xk) for node, xk in zip(nodes, x)])
    d, e = _plant_or_flag(paths, x, y, plant_state, nodes)
    for node, xk, ek in zip(nodes, x, e):
        node.filtered_reference_step(xk)
        node.fxlms_update(ek)
        node.self_boost_tick(ek, n)
    return y, d, e


def sb_wcfxlms_node_step(
    nodes: Sequence[NodeController], paths: PathSet, plant_state: PlantState, x, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[BoostEvent]]:
    """One sample of the self-boosted weight-constrained loop.

    Per node: output, then (after the plant) filtered reference, constrained
    update, and the boost check. Node ``k`` reads only ``x[k]`` and ``e[k]``.
    """
    y = np.array([node.control_output(xk) for node, xk in zip(nodes, x)])
    d, e = _plant_or_flag(paths, x, y, plant_state, nodes)
    events = []
    for node, xk, ek in zip(nodes, x, e):
        node.filtered_reference_step(xk)
        node.wcfxlms_update(ek)
        event = node.self_boost_tick(ek, n)
        if event is not None:
            events.append(event)
    return y, d, e, events


@njit(cache=True)
def central_update_kernel(w, xf_bufs, xf_pos, mu, e):
    """Multiple-error update ``w[k, j] += sum_m mu_k * x'_{m,k,j} * e_m``.

    Args:
        w: ``(K, J, N)`` filters, source ``k`` / reference ``j``.
        xf_bufs: ``(K, K, J, 2N)`` filtered-reference delay lines indexed
            ``[m, k, j]`` (error ``m``, source ``k``, reference ``j``).
        mu: ``(K,)`` per-source step sizes.
        e: ``(K,)`` error samples.

    Returns per-source finiteness flags.
    """
    n_src, n_ref, n_taps = w.shape
    ok = np.ones(n_src, dtype=np.bool_)
    for k in range(n_src):
        check = 0.0
        for j in range(n_ref):
            for i in range(n_taps):
                acc = 0.0
                for m in range(n_src):
                    acc += mu[k] * xf_bufs[m, k, j, xf_pos + i] * e[m]
                w[k, j, i] = w[k, j, i] + acc
                check += w[k, j, i]
        ok[k] = math.isfinite(check)
    return ok


def reference_map(n_nodes: int, collocated: bool) -> np.ndarray:
    """Reference index used by each source's sub-filters, shape ``(K, J)``.

    Centralized control gives source ``k`` its own reference only;
    collocated control gives every source all ``K`` references.
    """
    if collocated:
        return np.tile(np.arange(n_nodes), (n_nodes, 1))
    return np.arange(n_nodes).reshape(n_nodes, 1)


class CentralizedController:
    """Multiple-error FxLMS over all ``K`` error signals.

    Source ``k`` drives ``y_k = sum_j w_kj . x_{ref[k, j]}`` and adapts with
    ``w_kj += mu_k * sum_m x'_{m,k,j} e_m`` where
    ``x'_{m,k,j} = shat_mk * x_{ref[k, j]}``.
    """

    def __init__(self, n_taps: int, estimates: Sequence[Sequence[FirResponse]], mu, ref_map=None):
        self.n_taps = int(n_taps)
        k = len(estimates)
        self.n_nodes = k
        self.ref_map = reference_map(k, False) if ref_map is None else np.asarray(ref_map, dtype=np.int64)
        if self.ref_map.shape[0] != k:
            raise ValueError("reference map needs one row per source")
        n_ref = self.ref_map.shape[1]
        self.mu = np.broadcast_to(np.asarray(mu, dtype=float), (k,)).copy()
        est_len = max(len(s) for row in estimates for s in row)
        self.shat = np.zeros((k, k, est_len))
        for m in range(k):
            for src in range(k):
                taps = estimates[m][src].taps
                self.shat[m, src, : taps.size] = taps
        self.w = np.zeros((k, n_ref, self.n_taps))
        self.x_lines = [ConvolverState(max(self.n_taps, est_len)) for _ in range(k)]
        self.xf_bufs = np.zeros((k, k, n_ref, 2 * self.n_taps))
        self.xf_pos = 0
        self.diverged = np.zeros(k, dtype=bool)

    def control_output(self, x) -> np.ndarray:
        for line, xr in zip(self.x_lines, x):
            line.push(xr)
        y = np.empty(self.n_nodes)
        for k in range(self.n_nodes):
            acc = 0.0
            for j, r in enumerate(self.ref_map[k]):
                line = self.x_lines[r]
                acc += fir_dot(self.w[k, j], line.buf, line.pos)
            y[k] = acc
        return y

    def filtered_reference_step(self) -> None:
        n = self.n_taps
        pos = self.xf_pos - 1
        if pos < 0:
            pos += n
        for m in range(self.n_nodes):
            for k in range(self.n_nodes):
                for j, r in enumerate(self.ref_map[k]):
                    line = self.x_lines[r]
                    xf = fir_dot(self.shat[m, k], line.buf, line.pos)
                    self.xf_bufs[m, k, j, pos] = xf
                    self.xf_bufs[m, k, j, pos + n] = xf
        self.xf_pos = pos

    def update(self, e) -> np.ndarray:
        ok = central_update_kernel(self.w, self.xf_bufs, self.xf_pos, self.mu, np.asarray(e, dtype=float))
        self.diverged |= ~ok
        return self.w


def centralized_step(
    state: CentralizedController, paths: PathSet, plant_state: PlantState, x
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One sample: outputs, plant, filtered references, multiple-error update."""
    y = state.control_output(x)
    try:
        d, e = plant_step(paths, x, y, plant_state)
    except DivergenceError:
        state.diverged |= ~np.isfinite(y)
        raise
    state.filtered_reference_step()
    state.update(e)
    return y, d, e
