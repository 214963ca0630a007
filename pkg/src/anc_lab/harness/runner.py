"""Scenario assembly and execution."""

from __future__ import annotations

import configparser
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from ..acoustics import PathFileError, PathSet, load_paths, make_estimates, read_coefficient_file, stack_taps, synth_paths
from ..controllers import BoostEvent, reference_map
from ..metrics import RunTrace
from ..signals import ToneSpec, gen_bandlimited_noise, gen_multitone, load_wave_file
from . import engine
from .config import ConfigError, ScenarioConfig, parse_assignments

log = logging.getLogger(__name__)

MU_EPS = 1e-12
NODE_MODES = {
    "decentralized-fxlms": engine.FXLMS,
    "leaky": engine.LEAKY,
    "wcfxlms": engine.WCFXLMS,
    "sb-wcfxlms": engine.SB_WCFXLMS,
}


def is_centralized(config: ScenarioConfig) -> bool:
    return config.algorithm in ("centralized", "collocated-centralized")


def build_paths(config: ScenarioConfig) -> PathSet:
    """True plant plus the secondary-path models the chosen algorithm needs."""
    pc = config.paths
    full = is_centralized(config)
    if pc.source == "file":
        try:
            paths = load_paths(pc.file, n_nodes=config.n_nodes)
        except (PathFileError, OSError) as exc:
            raise ConfigError(str(exc)) from None
        if paths.sample_rate_hz != config.fs:
            raise ConfigError(f"{pc.file}: path sample rate {paths.sample_rate_hz} Hz != scenario fs {config.fs} Hz")
        has_models = paths.estimate_len == config.estimate_len and (not full or paths.estimate_matrix is not None)
        if has_models and pc.estimate_mismatch == 0:
            return paths
    else:
        paths = synth_paths(
            config.n_nodes,
            pc.primary_len,
            pc.secondary_len,
            delay_range=(pc.delay_min, pc.delay_max),
            decay_rate=pc.decay_rate,
            coupling_gain=pc.coupling_gain,
            seed=pc.seed,
            primary_delay_range=(pc.primary_delay_min, pc.primary_delay_max),
            sample_rate_hz=config.fs,
        )
    return make_estimates(paths, config.estimate_len, pc.estimate_mismatch, pc.estimate_seed, full_matrix=full)


def build_references(config: ScenarioConfig, n_samples: int | None = None) -> np.ndarray:
    """Reference signals ``(K, n)``; shared mode repeats one stream for every node."""
    n = config.n_samples if n_samples is None else n_samples
    nz = config.noise
    k = config.n_nodes
    if nz.kind == "multitone":
        amps = nz.amplitudes * len(nz.tones_hz) if len(nz.amplitudes) == 1 else nz.amplitudes
        phases = nz.phases_rad * len(nz.tones_hz) if len(nz.phases_rad) == 1 else nz.phases_rad
        tones = [ToneSpec(f, a, p) for f, a, p in zip(nz.tones_hz, amps, phases)]
        base = gen_multitone(tones, config.fs, n).samples
    elif nz.kind == "bandlimited":
        if config.reference_mode == "per-node" and nz.distinct_per_node:
            return np.array([
                gen_bandlimited_noise(nz.low_hz, nz.high_hz, config.fs, n, nz.seed + i, nz.target_rms).samples
                for i in range(k)
            ]).reshape(k, n)
        base = gen_bandlimited_noise(nz.low_hz, nz.high_hz, config.fs, n, nz.seed, nz.target_rms).samples
    else:
        try:
            sig = load_wave_file(nz.wave_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if sig.sample_rate_hz != config.fs:
            raise ConfigError(f"{nz.wave_file}: sample rate {sig.sample_rate_hz} Hz != scenario fs {config.fs} Hz")
        if len(sig) < n:
            raise ConfigError(f"{nz.wave_file}: {len(sig)} samples, scenario needs {n}")
        base = sig.samples[:n]
    return np.tile(base, (k, 1))


def sensor_noise(config: ScenarioConfig, n_samples: int) -> np.ndarray:
    if config.noise.sensor_noise_rms == 0:
        return np.zeros((0, 0))
    rng = np.random.default_rng(config.noise.sensor_seed)
    return config.noise.sensor_noise_rms * rng.standard_normal((config.n_nodes, n_samples))


def step_sizes(config: ScenarioConfig, paths: PathSet, refs: np.ndarray) -> np.ndarray:
    """Per-source ``mu = mu_bar / (N * P + eps)``.

    ``P`` is the mean filtered-reference power over the first second of the
    run (or the whole run if shorter), summed over every filtered reference
    that drives the source's update.
    """
    k = config.n_nodes
    calib = refs[:, : min(refs.shape[1], config.fs)]
    if calib.shape[1] == 0:
        return np.zeros(k)

    def power(model, x):
        return float(np.mean(sps.lfilter(model.taps, 1.0, x) ** 2))

    if not is_centralized(config):
        p = np.array([power(paths.estimates[i], calib[i]) for i in range(k)])
    else:
        models = paths.full_estimates()
        refmap = reference_map(k, config.algorithm == "collocated-centralized")
        p = np.array([
            sum(power(models[m][src], calib[r]) for m in range(k) for r in refmap[src])
            for src in range(k)
        ])
    return config.mu_bar / (config.n_taps * p + MU_EPS)


def load_center(config: ScenarioConfig) -> np.ndarray:
    centers = np.zeros((config.n_nodes, config.n_taps))
    if not config.center_file:
        return centers
    try:
        header, rows = read_coefficient_file(config.center_file)
    except (PathFileError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    if header.get("K") != config.n_nodes or header.get("N") != config.n_taps:
        raise ConfigError(
            f"{config.center_file}: header K={header.get('K')} N={header.get('N')} "
            f"does not match scenario K={config.n_nodes} N={config.n_taps}"
        )
    for i in range(config.n_nodes):
        taps = rows.get(("W", i))
        if taps is None or taps.size != config.n_taps:
            raise ConfigError(f"{config.center_file}: row W {i + 1} missing or not {config.n_taps} taps")
        centers[i] = taps
    return centers


@dataclass
class Prepared:
    config: ScenarioConfig
    paths: PathSet
    refs: np.ndarray
    noise: np.ndarray
    mu: np.ndarray
    centers: np.ndarray


def prepare(config: ScenarioConfig) -> Prepared:
    config.validate()
    paths = build_paths(config)
    refs = build_references(config)
    mu = step_sizes(config, paths, refs)
    if not is_centralized(config) and config.algorithm != "decentralized-fxlms":
        for k, (m, a) in enumerate(zip(mu, config.alphas())):
            # the penalty alone scales w by (1 - mu*alpha) per sample
            if m * a >= 2:
                log.warning("node %d: mu*alpha = %.3g >= 2, the penalty term is unstable on its own", k + 1, m * a)
    return Prepared(config, paths, refs, sensor_noise(config, refs.shape[1]), mu, load_center(config))


def run_scenario(config: ScenarioConfig) -> RunTrace:
    """Run one scenario start to finish. Divergence is recorded in the trace, never raised."""
    return run_prepared(prepare(config))


def run_prepared(prep: Prepared) -> RunTrace:
    config, paths = prep.config, prep.paths
    k = config.n_nodes
    n_total = prep.refs.shape[1]
    block_len = config.block_len
    window_len = config.window_len or 0
    spectrum_len = int(round(config.spectrum_seconds * config.fs))
    keep_from = 0 if config.store_samples else max(0, n_total - spectrum_len)
    n_keep = n_total - keep_from
    n_blocks = n_total // block_len
    n_windows = n_total // window_len if window_len else 0

    out_e = np.zeros((k, n_keep))
    out_d = np.zeros((k, n_keep))
    out_y = np.zeros((k, n_keep))
    blk_e2 = np.zeros((k, n_blocks))
    blk_d2 = np.zeros((k, n_blocks))
    win_eta = np.zeros((k, n_windows))
    win_min = np.full((k, n_windows), np.inf)
    win_changed = np.zeros((k, n_windows), dtype=np.bool_)
    diverged_at = np.full(k, -1, dtype=np.int64)
    P = stack_taps(paths.primary)
    S = np.stack([stack_taps(row, max(len(s) for r in paths.secondary for s in r)) for row in paths.secondary])

    events: list[BoostEvent] = []
    if is_centralized(config):
        refmap = reference_map(k, config.algorithm == "collocated-centralized")
        W = np.zeros((k, refmap.shape[1], config.n_taps))
        shatf = np.stack([stack_taps(row) for row in paths.full_estimates()])
        done, n_win, n_blk = engine.run_central(
            prep.refs, prep.noise, P, S, shatf, refmap, W, prep.mu, window_len, block_len, keep_from,
            out_e, out_d, out_y, blk_e2, blk_d2, win_eta, diverged_at,
        )
        centers = None
    else:
        W = np.zeros((k, config.n_taps))
        C = prep.centers.copy()
        shat = stack_taps(paths.estimates)
        max_events = max(1, k * n_windows)
        ev_node = np.zeros(max_events, dtype=np.int64)
        ev_sample = np.zeros(max_events, dtype=np.int64)
        ev_old = np.zeros(max_events)
        ev_new = np.zeros(max_events)
        alpha = np.array(config.alphas(), dtype=float)
        done, n_ev, n_win, n_blk = engine.run_nodes(
            NODE_MODES[config.algorithm], prep.refs, prep.noise, P, S, shat, W, C, prep.mu, alpha,
            window_len, block_len, keep_from, out_e, out_d, out_y, blk_e2, blk_d2,
            win_eta, win_min, win_changed, ev_node, ev_sample, ev_old, ev_new, diverged_at,
        )
        events = [
            BoostEvent(int(ev_node[i]), int(ev_sample[i]), float(ev_old[i]), float(ev_new[i])) for i in range(n_ev)
        ]
        centers = C

    if done < n_total:
        log.info("run stopped at sample %d of %d: non-finite signal", done, n_total)
    kept = max(0, done - keep_from)
    changes = [(int(node), int(w)) for node, w in zip(*np.nonzero(win_changed[:, :n_win]))]
    changes.sort(key=lambda c: (c[1], c[0]))
    return RunTrace(
        algorithm=config.algorithm,
        sample_rate_hz=config.fs,
        n_nodes=k,
        n_samples=int(done),
        block_len=block_len,
        window_len=config.window_len,
        block_e_power=blk_e2[:, :n_blk],
        block_d_power=blk_d2[:, :n_blk],
        window_eta=win_eta[:, :n_win],
        eta_min=win_min[:, :n_win],
        boost_events=events,
        center_changes=changes,
        diverged_at=diverged_at,
        sample_offset=keep_from,
        e=out_e[:, :kept],
        d=out_d[:, :kept],
        y=out_y[:, :kept],
        final_weights=W,
        final_centers=centers,
    )


# -- sweeps ---------------------------------------------------------------------

DEFAULT_MAX_CELLS = 256


class GridTooLargeError(ConfigError):
    pass


@dataclass
class Grid:
    params: list[str]
    cells: list[dict[str, str]]


def read_grid(path: str | Path) -> Grid:
    """Parse a grid file.

    ``[grid]`` holds ``mode`` (``cartesian`` or ``listed``), optional
    ``max_cells``, and one comma-separated value list per swept key, e.g.
    ``mu_bar = 0.05, 0.1`` or ``paths.coupling_gain = 0, 0.8``. Listed mode
    zips equal-length lists instead of taking their product.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not parser.has_section("grid"):
        raise ConfigError(f"{path}: missing [grid] section")
    items = dict(parser.items("grid"))
    mode = items.pop("mode", "cartesian").strip()
    max_cells = int(items.pop("max_cells", DEFAULT_MAX_CELLS))
    params = list(items)
    values = [[v.strip() for v in items[p].split(",") if v.strip()] for p in params]
    if not params or any(not v for v in values):
        raise ConfigError(f"{path}: grid needs at least one key with values")
    if mode == "cartesian":
        combos = list(itertools.product(*values))
    elif mode == "listed":
        if len({len(v) for v in values}) != 1:
            raise ConfigError(f"{path}: listed grids need equal-length value lists")
        combos = list(zip(*values))
    else:
        raise ConfigError(f"{path}: grid mode must be cartesian or listed, got {mode!r}")
    if len(combos) > max_cells:
        raise GridTooLargeError(f"{path}: grid has {len(combos)} cells, cap is {max_cells}")
    return Grid(params, [dict(zip(params, combo)) for combo in combos])


@dataclass
class SweepCell:
    index: int
    overrides: dict[str, str]
    config: ScenarioConfig
    trace: RunTrace | None
    error: str = ""

    def summary_row(self) -> dict:
        trace = self.trace
        return {
            "cell": self.index,
            **self.overrides,
            "final_anse_db": trace.final_anse_db() if trace else float("nan"),
            "diverged": int(trace.diverged) if trace else -1,
            "boost_count": trace.boost_count() if trace else 0,
            "error": self.error,
        }


def _run_cell(args):
    index, overrides, config = args
    try:
        return SweepCell(index, overrides, config, run_scenario(config))
    except ConfigError as exc:
        return SweepCell(index, overrides, config, None, str(exc))


def sweep(config: ScenarioConfig, grid: Grid | dict, jobs: int = 1, max_cells: int = DEFAULT_MAX_CELLS) -> list[SweepCell]:
    """Run every grid cell as an independent scenario.

    ``grid`` may also be a plain ``{key: [values]}`` mapping (Cartesian).
    A cell with a configuration error is reported in its row; other cells
    still run.
    """
    if isinstance(grid, dict):
        params = list(grid)
        combos = list(itertools.product(*[[str(v) for v in grid[p]] for p in params]))
        if len(combos) > max_cells:
            raise GridTooLargeError(f"grid has {len(combos)} cells, cap is {max_cells}")
        grid = Grid(params, [dict(zip(params, c)) for c in combos])
    tasks = []
    for i, cell in enumerate(grid.cells):
        cfg = config.with_overrides(parse_assignments([f"{k}={v}" for k, v in cell.items()]))
        tasks.append((i, cell, cfg))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]
