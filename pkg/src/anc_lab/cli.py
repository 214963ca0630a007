"""``anc-lab`` command line.

Exit codes: 0 success, 2 configuration error, 3 at least one node diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .acoustics import PathFileError, load_paths, make_estimates, save_paths, synth_paths
from .harness import ConfigError, ScenarioConfig, export_summary, export_trace, prepare, read_grid, run_prepared, sweep

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.scenario)
    if args.set:
        cfg = cfg.with_overrides(args.set)
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _load_config(args)
    prep = prepare(cfg)
    trace = run_prepared(prep)
    out = Path(args.out)
    export_trace(trace, cfg, out, mu=prep.mu)
    final = trace.final_anse_db()
    print(f"algorithm      {cfg.algorithm}  (K={cfg.n_nodes}, {trace.n_samples} samples)")
    print(f"final ANSE     {final:.2f} dB" if trace.n_blocks else "final ANSE     n/a (no complete block)")
    print(f"boost events   {trace.boost_count()}")
    if trace.diverged:
        nodes = [i + 1 for i, s in enumerate(trace.diverged_at) if s >= 0]
        print(f"DIVERGED       node(s) {nodes}")
    print(f"output         {out}")
    return EXIT_DIVERGED if trace.diverged else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    grid = read_grid(args.grid)
    cells = sweep(cfg, grid, jobs=args.jobs)
    out = Path(args.out)
    for cell in cells:
        if cell.trace is not None:
            export_trace(cell.trace, cell.config, out / f"cell_{cell.index:03d}")
    export_summary(cells, out, cfg)
    for cell in cells:
        row = cell.summary_row()
        params = " ".join(f"{k}={v}" for k, v in cell.overrides.items())
        status = cell.error or ("DIVERGED" if row["diverged"] == 1 else "ok")
        print(f"cell {cell.index:3d}  {params:40s}  ANSE {row['final_anse_db']:8.2f} dB  boosts {row['boost_count']:3d}  {status}")
    if any(cell.error for cell in cells):
        return EXIT_CONFIG
    return EXIT_DIVERGED if any(c.trace is not None and c.trace.diverged for c in cells) else EXIT_OK


def cmd_paths_synth(args) -> int:
    paths = synth_paths(
        args.nodes,
        args.primary_len,
        args.secondary_len,
        delay_range=(args.delay_min, args.delay_max),
        decay_rate=args.decay_rate,
        coupling_gain=args.coupling_gain,
        seed=args.seed,
        primary_delay_range=(args.primary_delay_min, args.primary_delay_max),
        sample_rate_hz=args.fs,
    )
    paths = make_estimates(paths, args.estimate_len, args.mismatch, args.seed + 1, full_matrix=args.full_matrix)
    save_paths(paths, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_paths_inspect(args) -> int:
    paths = load_paths(args.file)
    k = paths.n_nodes
    print(f"K={k}  fs={paths.sample_rate_hz}  estimate_len={paths.estimate_len}  "
          f"full estimate matrix={'yes' if paths.estimate_matrix is not None else 'no'}")
    for i in range(k):
        p = paths.primary[i]
        first = int(np.flatnonzero(p.taps)[0]) if np.any(p.taps) else -1
        print(f"P {i + 1}: {len(p)} taps, energy {p.energy:.4g}, first nonzero tap {first}")
    print("secondary energy matrix (row = error sensor, column = source):")
    for i in range(k):
        print("  " + " ".join(f"{paths.secondary[i][j].energy:9.4g}" for j in range(k)))
    for i in range(k):
        true = paths.secondary[i][i].taps
        est = paths.estimates[i].taps
        n = min(true.size, est.size)
        err = np.sum((true[:n] - est[:n]) ** 2) + np.sum(true[n:] ** 2) + np.sum(est[n:] ** 2)
        print(f"Shat {i + 1}: {est.size} taps, relative model error {err / max(paths.secondary[i][i].energy, 1e-300):.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anc-lab", description="Multichannel active noise control simulations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write CSV output")
    run.add_argument("scenario")
    run.add_argument("--out", default="out")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a parameter grid")
    sw.add_argument("scenario")
    sw.add_argument("--grid", required=True)
    sw.add_argument("--out", default="sweep_out")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--set", action="append", metavar="KEY=VALUE")
    sw.set_defaults(func=cmd_sweep)

    paths = sub.add_parser("paths", help="create or inspect path files")
    psub = paths.add_subparsers(dest="paths_command", required=True)
    synth = psub.add_parser("synth", help="write a synthetic path file")
    synth.add_argument("--nodes", "-K", type=int, default=6)
    synth.add_argument("--primary-len", type=int, default=512)
    synth.add_argument("--secondary-len", type=int, default=512)
    synth.add_argument("--estimate-len", type=int, default=256)
    synth.add_argument("--delay-min", type=int, default=0)
    synth.add_argument("--delay-max", type=int, default=3)
    synth.add_argument("--primary-delay-min", type=int, default=10)
    synth.add_argument("--primary-delay-max", type=int, default=30)
    synth.add_argument("--decay-rate", type=float, default=0.1)
    synth.add_argument("--coupling-gain", type=float, default=0.5)
    synth.add_argument("--mismatch", type=float, default=0.0)
    synth.add_argument("--full-matrix", action="store_true", help="also model every cross path")
    synth.add_argument("--fs", type=int, default=16000)
    synth.add_argument("--seed", type=int, default=2)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_paths_synth)
    inspect = psub.add_parser("inspect", help="summarize a path file")
    inspect.add_argument("file")
    inspect.set_defaults(func=cmd_paths_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PathFileError, FileNotFoundError) as exc:
        print(f"anc-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"anc-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
