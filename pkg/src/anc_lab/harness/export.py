"""CSV and manifest output.

Files written by :func:`export_trace`:

``anse.csv``
    ``block_index,time_s,anse_db,anse_node_1..K`` with ``time_s`` the block end.
``events.csv``
    ``sample,node,old_eta_min,new_eta_min`` (nodes 1-based, samples 0-based).
``windows.csv``
    ``window_index,time_s,eta_node_1..K,eta_min_node_1..K``.
``spectrum.csv``
    ``freq_hz,psd_db_node_1..K`` of the error over the retained tail; only
    written when at least one segment's worth of samples was kept.
``samples.csv``
    ``sample,e_1..K,d_1..K,y_1..K``; only when ``store_samples`` is on.
``manifest.json``
    config echo, seeds, derived values, input file digests, version.

Floats are written with ``repr`` so re-reading them recovers the exact values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..metrics import RunTrace, psd_db
from .config import ScenarioConfig

SPECTRUM_SEGMENT = 4096


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _file_digest(name: str) -> str | None:
    if not name:
        return None
    try:
        return hashlib.sha256(Path(name).read_bytes()).hexdigest()
    except OSError:
        return None


def manifest(config: ScenarioConfig, trace: RunTrace | None = None, mu=None) -> dict:
    data = {
        "tool": "anc-lab",
        "version": __version__,
        "config": config.to_dict(),
        "seeds": config.seeds(),
        "derived": {
            "n_samples": config.n_samples,
            "window_len": config.window_len,
            "block_len": config.block_len,
            "alpha_per_node": list(config.alphas()),
        },
        "inputs": {
            "paths_file_sha256": _file_digest(config.paths.file) if config.paths.source == "file" else None,
            "wave_file_sha256": _file_digest(config.noise.wave_file) if config.noise.kind == "wavefile" else None,
            "center_file_sha256": _file_digest(config.center_file),
        },
    }
    if mu is not None:
        data["derived"]["mu_per_source"] = [float(m) for m in mu]
    if trace is not None:
        data["result"] = {
            "samples_run": trace.n_samples,
            "diverged": trace.diverged,
            "diverged_at_sample": [int(v) for v in trace.diverged_at] if trace.diverged_at is not None else None,
            "final_anse_db": None if trace.n_blocks == 0 else trace.final_anse_db(),
            "boost_count": trace.boost_count(),
        }
    return data


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_manifest(data: dict, path: Path) -> None:
    Path(path).write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


def export_trace(trace: RunTrace, config: ScenarioConfig, out_dir: str | Path, mu=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = trace.n_nodes
    nodes = range(1, k + 1)
    block_s = trace.block_len / trace.sample_rate_hz

    res = trace.anse
    _write(
        out / "anse.csv",
        ["block_index", "time_s", "anse_db", *[f"anse_node_{i}" for i in nodes]],
        (
            [b, _num((b + 1) * block_s), _num(res.anse_db[b]), *[_num(v) for v in res.node_db[:, b]]]
            for b in range(trace.n_blocks)
        ),
    )
    _write(
        out / "events.csv",
        ["sample", "node", "old_eta_min", "new_eta_min"],
        ([ev.sample, ev.node + 1, _num(ev.old_eta_min), _num(ev.new_eta_min)] for ev in trace.boost_events),
    )
    if trace.window_len:
        win_s = trace.window_len / trace.sample_rate_hz
        _write(
            out / "windows.csv",
            ["window_index", "time_s", *[f"eta_node_{i}" for i in nodes], *[f"eta_min_node_{i}" for i in nodes]],
            (
                [w, _num((w + 1) * win_s), *[_num(v) for v in trace.window_eta[:, w]], *[_num(v) for v in trace.eta_min[:, w]]]
                for w in range(trace.window_eta.shape[1])
            ),
        )
    if trace.e is not None and trace.e.shape[1] >= SPECTRUM_SEGMENT:
        seconds = config.spectrum_seconds if config.store_samples else None
        freqs, psd = trace.spectrum("e", seconds=seconds, segment_len=SPECTRUM_SEGMENT)
        db = psd_db(psd)
        _write(
            out / "spectrum.csv",
            ["freq_hz", *[f"psd_db_node_{i}" for i in nodes]],
            ([_num(f), *[_num(v) for v in db[:, i]]] for i, f in enumerate(freqs)),
        )
    if config.store_samples and trace.e is not None:
        _write(
            out / "samples.csv",
            ["sample", *[f"e_{i}" for i in nodes], *[f"d_{i}" for i in nodes], *[f"y_{i}" for i in nodes]],
            (
                [trace.sample_offset + n, *map(_num, trace.e[:, n]), *map(_num, trace.d[:, n]), *map(_num, trace.y[:, n])]
                for n in range(trace.e.shape[1])
            ),
        )
    write_manifest(manifest(config, trace, mu), out / "manifest.json")
    return out


def export_summary(cells, out_dir: str | Path, config: ScenarioConfig | None = None) -> Path:
    """Write ``summary.csv`` (one row per sweep cell) and, if given, the base config manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [cell.summary_row() for cell in cells]
    header = list(rows[0]) if rows else ["cell", "final_anse_db", "diverged", "boost_count", "error"]
    _write(
        out / "summary.csv",
        header,
        ([_num(v) if isinstance(v, float) else v for v in row.values()] for row in rows),
    )
    if config is not None:
        write_manifest(manifest(config), out / "manifest.json")
    return out


def read_csv_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Load a numeric CSV written by this module into ``{column: array}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
