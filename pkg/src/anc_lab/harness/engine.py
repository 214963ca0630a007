"""Jitted whole-run loops.

These mirror :func:`anc_lab.controllers.decentralized_node_step`,
:func:`~anc_lab.controllers.sb_wcfxlms_node_step` and
:func:`~anc_lab.controllers.centralized_step` operation for operation and
call the same kernels, so a run here is bit-identical to stepping the
Python objects sample by sample (the test suite checks this).

Per sample: outputs, plant, record, filtered references, update, RNL
window. A non-finite control output or error stops the run at that sample.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..acoustics import fir_dot
from ..controllers import central_update_kernel, fxlms_kernel, rnl_db, wcfxlms_kernel

FXLMS, LEAKY, WCFXLMS, SB_WCFXLMS = 0, 1, 2, 3


@njit(cache=True)
def _advance(pos, m):
    pos -= 1
    if pos < 0:
        pos += m
    return pos


@njit(cache=True)
def _put(buf, pos, m, x):
    buf[pos] = x
    buf[pos + m] = x


@njit(cache=True)
def _plant(P, S, xbuf, xpos, ybuf, ypos, V, n, d, e):
    """Fill ``d`` and ``e`` for sample ``n``; returns False on a non-finite error."""
    n_nodes = P.shape[0]
    noisy = V.shape[0] > 0
    ok = True
    for k in range(n_nodes):
        d[k] = fir_dot(P[k], xbuf[k], xpos)
    for k in range(n_nodes):
        acc = 0.0
        for m in range(n_nodes):
            acc += fir_dot(S[k, m], ybuf[m], ypos)
        e[k] = d[k] - acc
        if noisy:
            e[k] += V[k, n]
        if not np.isfinite(e[k]):
            ok = False
    return ok


@njit(cache=True)
def _record(n, keep_from, e, d, y, out_e, out_d, out_y, be2, bd2, block_len, blk_e2, blk_d2, blk):
    if n >= keep_from:
        i = n - keep_from
        for k in range(e.size):
            out_e[k, i] = e[k]
            out_d[k, i] = d[k]
            out_y[k, i] = y[k]
    for k in range(e.size):
        be2[k] += e[k] * e[k]
        bd2[k] += d[k] * d[k]
    if (n + 1) % block_len == 0:
        for k in range(e.size):
            blk_e2[k, blk] = be2[k] / block_len
            blk_d2[k, blk] = bd2[k] / block_len
            be2[k] = 0.0
            bd2[k] = 0.0
        return blk + 1
    return blk


@njit(cache=True)
def run_nodes(
    mode, X, V, P, S, SHAT, W, C, mu, alpha, window_len, block_len, keep_from,
    out_e, out_d, out_y, blk_e2, blk_d2, win_eta, win_min, win_changed,
    ev_node, ev_sample, ev_old, ev_new, diverged_at,
):
    """Per-node algorithms; ``mode`` is one of FXLMS/LEAKY/WCFXLMS/SB_WCFXLMS.

    ``W`` and ``C`` (``(K, N)``) are updated in place. Returns
    ``(samples_done, n_events, n_windows, n_blocks)``.
    """
    n_nodes, n_total = X.shape
    n_taps = W.shape[1]
    mx = max(n_taps, P.shape[1], SHAT.shape[1])
    my = S.shape[2]
    xbuf = np.zeros((n_nodes, 2 * mx))
    ybuf = np.zeros((n_nodes, 2 * my))
    xfbuf = np.zeros((n_nodes, 2 * n_taps))
    xpos = 0
    ypos = 0
    xfpos = 0
    zero = np.zeros(n_taps)
    snap = C.copy()
    rnl_sum = np.zeros(n_nodes)
    eta_min = np.full(n_nodes, np.inf)
    y = np.zeros(n_nodes)
    d = np.zeros(n_nodes)
    e = np.zeros(n_nodes)
    be2 = np.zeros(n_nodes)
    bd2 = np.zeros(n_nodes)
    n_ev = 0
    win = 0
    blk = 0
    for n in range(n_total):
        xpos = _advance(xpos, mx)
        for k in range(n_nodes):
            _put(xbuf[k], xpos, mx, X[k, n])
        finite = True
        for k in range(n_nodes):
            y[k] = fir_dot(W[k], xbuf[k], xpos)
            if not np.isfinite(y[k]):
                finite = False
                if diverged_at[k] < 0:
                    diverged_at[k] = n
        if not finite:
            return n, n_ev, win, blk
        ypos = _advance(ypos, my)
        for k in range(n_nodes):
            _put(ybuf[k], ypos, my, y[k])
        if not _plant(P, S, xbuf, xpos, ybuf, ypos, V, n, d, e):
            for k in range(n_nodes):
                if not np.isfinite(e[k]) and diverged_at[k] < 0:
                    diverged_at[k] = n
            return n, n_ev, win, blk
        blk = _record(n, keep_from, e, d, y, out_e, out_d, out_y, be2, bd2, block_len, blk_e2, blk_d2, blk)

        xfpos = _advance(xfpos, n_taps)
        for k in range(n_nodes):
            _put(xfbuf[k], xfpos, n_taps, fir_dot(SHAT[k], xbuf[k], xpos))
        for k in range(n_nodes):
            if mode == FXLMS:
                ok = fxlms_kernel(W[k], xfbuf[k], xfpos, mu[k], e[k])
            elif mode == LEAKY:
                ok = wcfxlms_kernel(W[k], xfbuf[k], xfpos, zero, mu[k], alpha[k], e[k])
            else:
                ok = wcfxlms_kernel(W[k], xfbuf[k], xfpos, C[k], mu[k], alpha[k], e[k])
            if not ok and diverged_at[k] < 0:
                diverged_at[k] = n
            rnl_sum[k] += rnl_db(e[k])

        if window_len > 0 and (n + 1) % window_len == 0:
            for k in range(n_nodes):
                eta = rnl_sum[k] / window_len
                rnl_sum[k] = 0.0
                win_eta[k, win] = eta
                if mode == SB_WCFXLMS and eta < eta_min[k]:
                    ev_node[n_ev] = k
                    ev_sample[n_ev] = n
                    ev_old[n_ev] = eta_min[k]
                    ev_new[n_ev] = eta
                    n_ev += 1
                    C[k, :] = W[k, :]
                    eta_min[k] = eta
                win_min[k, win] = eta_min[k]
                for i in range(n_taps):
                    if C[k, i] != snap[k, i]:
                        win_changed[k, win] = True
                        break
                snap[k, :] = C[k, :]
            win += 1
    return n_total, n_ev, win, blk


@njit(cache=True)
def run_central(
    X, V, P, S, SHATF, refmap, W, mu, window_len, block_len, keep_from,
    out_e, out_d, out_y, blk_e2, blk_d2, win_eta, diverged_at,
):
    """Centralized/collocated multiple-error FxLMS.

    ``SHATF`` is ``(K, K, L)`` indexed ``[error, source]``; ``refmap`` is
    ``(K, J)``; ``W`` is ``(K, J, N)`` and updated in place.
    """
    n_nodes, n_total = X.shape
    n_ref = refmap.shape[1]
    n_taps = W.shape[2]
    mx = max(n_taps, P.shape[1], SHATF.shape[2])
    my = S.shape[2]
    xbuf = np.zeros((n_nodes, 2 * mx))
    ybuf = np.zeros((n_nodes, 2 * my))
    xfbuf = np.zeros((n_nodes, n_nodes, n_ref, 2 * n_taps))
    xpos = 0
    ypos = 0
    xfpos = 0
    rnl_sum = np.zeros(n_nodes)
    y = np.zeros(n_nodes)
    d = np.zeros(n_nodes)
    e = np.zeros(n_nodes)
    be2 = np.zeros(n_nodes)
    bd2 = np.zeros(n_nodes)
    win = 0
    blk = 0
    for n in range(n_total):
        xpos = _advance(xpos, mx)
        for k in range(n_nodes):
            _put(xbuf[k], xpos, mx, X[k, n])
        finite = True
        for k in range(n_nodes):
            acc = 0.0
            for j in range(n_ref):
                acc += fir_dot(W[k, j], xbuf[refmap[k, j]], xpos)
            y[k] = acc
            if not np.isfinite(acc):
                finite = False
                if diverged_at[k] < 0:
                    diverged_at[k] = n
        if not finite:
            return n, win, blk
        ypos = _advance(ypos, my)
        for k in range(n_nodes):
            _put(ybuf[k], ypos, my, y[k])
        if not _plant(P, S, xbuf, xpos, ybuf, ypos, V, n, d, e):
            for k in range(n_nodes):
                if not np.isfinite(e[k]) and diverged_at[k] < 0:
                    diverged_at[k] = n
            return n, win, blk
        blk = _record(n, keep_from, e, d, y, out_e, out_d, out_y, be2, bd2, block_len, blk_e2, blk_d2, blk)

        xfpos = _advance(xfpos, n_taps)
        for m in range(n_nodes):
            for k in range(n_nodes):
                for j in range(n_ref):
                    _put(xfbuf[m, k, j], xfpos, n_taps, fir_dot(SHATF[m, k], xbuf[refmap[k, j]], xpos))
        ok = central_update_kernel(W, xfbuf, xfpos, mu, e)
        for k in range(n_nodes):
            if not ok[k] and diverged_at[k] < 0:
                diverged_at[k] = n
            rnl_sum[k] += rnl_db(e[k])
        if window_len > 0 and (n + 1) % window_len == 0:
            for k in range(n_nodes):
                win_eta[k, win] = rnl_sum[k] / window_len
                rnl_sum[k] = 0.0
            win += 1
    return n_total, win, blk
