"""Command-line front end: precompute, localize, simulate, bench, plot-data.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .geometry import GeometryError, build_doa_grid, build_neighbor_sets, build_null_ranges, compute_tdoa, resolve_array
from .metrics import azimuth
from .pipeline import ESTIMATE_FIELDS, DataError, Localizer, RunConfig, check_model, estimate_rows, get_model, read_wav
from .svd import ModelError, build_model, load_model, save_model

log = logging.getLogger("svdphat")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    g = p.add_argument_group("localization parameters")
    g.add_argument("--geometry", default=d.geometry, help="preset (linear7, planar7, spatial7) or array JSON file")
    g.add_argument("--grid-level", type=int, default=d.grid_level, help="icosphere subdivisions (4 gives 2562 points)")
    g.add_argument("--fs", type=float, default=d.fs, help="sample rate in Hz")
    g.add_argument("--frame", type=int, default=d.frame_size, help="frame size N")
    g.add_argument("--hop", type=int, default=d.hop, help="hop size in samples")
    g.add_argument("--alpha", type=float, default=d.alpha, help="cross-spectrum adaptation rate")
    g.add_argument("--delta", type=float, default=d.delta, help="tolerated reconstruction error of the low-rank model")
    g.add_argument("--dtheta", type=float, default=d.delta_theta, help="SRP-PHAT nulling radius in radians")
    g.add_argument("--c", type=float, default=d.c, help="speed of sound in m/s")
    g.add_argument("--scans", type=int, default=d.scans, help="number of scans R per frame")
    g.add_argument("--method", choices=["srp", "svd", "both"], default=d.method)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--model", help="SVD-PHAT model file (built and cached when omitted)")
    g.add_argument("--cache-dir", help="model cache directory (default $SVDPHAT_CACHE or ~/.cache/svdphat)")


def _run_config(args) -> RunConfig:
    try:
        return RunConfig(
            geometry=args.geometry,
            grid_level=args.grid_level,
            fs=args.fs,
            frame_size=args.frame,
            hop=args.hop,
            alpha=args.alpha,
            delta=args.delta,
            delta_theta=args.dtheta,
            c=args.c,
            scans=args.scans,
            method=args.method,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _array(args):
    try:
        return resolve_array(args.geometry)
    except (GeometryError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load geometry: {exc}") from exc


def _model(args, array, cfg):
    if args.model:
        model = load_model(args.model)
        check_model(model, array, cfg)
        return model
    return get_model(array, cfg, args.cache_dir)


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


# -- commands --------------------------------------------------------------

def cmd_precompute(args) -> int:
    cfg = _run_config(args)
    array = _array(args)
    if cfg.grid_level > 6 or cfg.grid_level < 0:
        raise UsageError("grid level must lie in [0, 6]")
    grid = build_doa_grid(cfg.grid_level)
    model = build_model(compute_tdoa(array, grid, cfg.fs, cfg.c), cfg.frame_size, cfg.delta, grid, array)
    out = Path(args.out or f"{array.name}.svdphat")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"K={model.rank} energy_ratio={model.energy_ratio():.9f} Q={model.num_points} -> {out}")
    return EXIT_OK


def cmd_localize(args) -> int:
    cfg = _run_config(args)
    array = _array(args)
    fs, audio = read_wav(args.wav)
    if fs != cfg.fs:
        raise DataError(f"{args.wav}: sample rate {fs:g} Hz, expected {cfg.fs:g} Hz")
    if audio.shape[0] != array.num_mics:
        raise DataError(f"{args.wav}: {audio.shape[0]} channels, array {array.name} has {array.num_mics}")
    model = _model(args, array, cfg) if cfg.method in ("svd", "both") else None
    loc = Localizer(array, cfg, model=model, cache_dir=args.cache_dir)
    frames = loc.process(audio)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_FIELDS)
        w.writerows(estimate_rows(frames, loc.methods))
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .campaign import CampaignConfig, run_campaign

    run = _run_config(args)
    overrides = {}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read campaign config: {exc}") from exc
    if args.scenarios is not None:
        overrides["scenarios_per_cell"] = args.scenarios
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.sources:
        overrides["source_counts"] = [int(t) for t in args.sources.split(",")]
    if args.geometries:
        overrides["geometries"] = args.geometries.split(",")
    if args.save_audio:
        overrides["save_audio"] = True
    overrides.setdefault("seed", args.seed)
    try:
        cfg = CampaignConfig.from_dict(overrides, run=run)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid campaign config: {exc}") from exc
    for name in cfg.geometries:
        resolve_array(name)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    out = Path(args.out or "campaign")
    rows = run_campaign(cfg, out, workers=args.workers, cache_dir=args.cache_dir)
    print(f"{'geometry':<10} {'T':>2} {'n':>5} {'SRP-PHAT':>9} {'SVD-PHAT':>9}")
    for row in rows:
        print(f"{row.geometry:<10} {row.num_sources:>2} {row.count:>5} {row.srp:>9.4f} {row.svd:>9.4f}")
    print(f"results in {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench
    from .srp import SrpPhat

    cfg = _run_config(args)
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    array = _array(args)
    model = _model(args, array, cfg)
    grid = build_doa_grid(cfg.grid_level)
    tdoa = compute_tdoa(array, grid, cfg.fs, cfg.c)
    srp = SrpPhat(grid, tdoa, build_null_ranges(tdoa, build_neighbor_sets(grid, cfg.delta_theta), cfg.delta_theta), cfg.frame_size)
    report = run_bench(srp, model, num_scans=cfg.scans, frames=args.frames, seed=cfg.seed)
    report["geometry"] = array.name
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _truth_azimuths(args) -> list[float]:
    values = list(args.truth_azimuth or [])
    if args.truths:
        try:
            with open(args.truths) as fh:
                doas = np.asarray(json.load(fh), dtype=np.float64).reshape(-1, 3)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read truths: {exc}") from exc
        values += [float(g) for g in azimuth(doas / np.linalg.norm(doas, axis=1, keepdims=True))]
    return values


def plot_rows(rows, method: str | None, num_scans: int, truths: list[float]):
    """Group estimate rows by frame into ``time, r1..rR, s1..sT`` records."""
    frames: dict[int, dict] = {}
    for row in rows:
        if method is not None and row["method"] != method:
            continue
        fr = frames.setdefault(int(row["frame"]), {"time": row["time_s"]})
        doa = np.array([float(row["x"]), float(row["y"]), float(row["z"])])
        fr[int(row["scan_r"])] = float(azimuth(doa / np.linalg.norm(doa)))
    for frame in sorted(frames):
        fr = frames[frame]
        scans = [f"{fr[r]:.6f}" if r in fr else "" for r in range(1, num_scans + 1)]
        yield [fr["time"]] + scans + [f"{s:.6f}" for s in truths]


def cmd_plot_data(args) -> int:
    array = _array(args)
    if array.geometry_class() != 1:
        raise UsageError(f"plot-data needs a linear array; {array.name} spans {array.geometry_class()} dimensions")
    truths = _truth_azimuths(args)
    try:
        with open(args.estimates, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read estimates: {exc}") from exc
    if rows and not set(ESTIMATE_FIELDS) <= set(rows[0]):
        raise DataError(f"{args.estimates}: missing columns; expected {ESTIMATE_FIELDS}")
    methods = sorted({r["method"] for r in rows})
    method = args.method if args.method != "both" else None
    if method is None and len(methods) > 1:
        raise UsageError("estimates hold several methods; pick one with --method")
    num_scans = max([int(r["scan_r"]) for r in rows], default=args.scans)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"r{r}" for r in range(1, num_scans + 1)] + [f"s{t}" for t in range(1, len(truths) + 1)])
        w.writerows(plot_rows(rows, method, num_scans, truths))
    finally:
        if close:
            fh.close()
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svdphat", description="Multiple sound source localization with SRP-PHAT and SVD-PHAT.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("precompute", help="build and save an SVD-PHAT model")
    _common(p)
    p.add_argument("--out", help="model file to write (default <geometry>.svdphat)")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("localize", help="localize sources in a multichannel WAV file")
    p.add_argument("wav")
    _common(p)
    p.add_argument("--out", help="estimates CSV (default stdout)")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate", help="run a reverberant simulation campaign")
    _common(p)
    p.add_argument("--config", help="campaign JSON (geometries, source_counts, scenarios_per_cell, duration, room, rt60_range, seed)")
    p.add_argument("--scenarios", type=int, help="scenarios per (geometry, source count) cell")
    p.add_argument("--sources", help="comma-separated source counts, e.g. 1,2,3")
    p.add_argument("--geometries", help="comma-separated geometries")
    p.add_argument("--duration", type=float, help="signal length in seconds")
    p.add_argument("--save-audio", action="store_true", help="also write the rendered mixtures as WAV")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory (default ./campaign)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time the online loops of both methods")
    _common(p)
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--out", help="JSON report (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot-data", help="azimuth-versus-time table from an estimates CSV")
    p.add_argument("estimates")
    p.add_argument("--geometry", default="linear7")
    p.add_argument("--method", choices=["srp", "svd", "both"], default="both", help="rows to keep when the CSV holds both")
    p.add_argument("--scans", type=int, default=1, help="scan columns to emit when the CSV is empty")
    p.add_argument("--truths", help="JSON list of true unit DOA vectors")
    p.add_argument("--truth-azimuth", type=float, action="append", help="true azimuth in radians (repeatable)")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"svdphat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelError, GeometryError, OSError) as exc:
        print(f"svdphat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
