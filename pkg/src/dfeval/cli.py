"""Command-line entry point: ``dfeval {eval,rank-modes,replay,gen-pattern}``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
Settings come from flags, then an optional ``--config`` key/value file, then
built-in defaults, in that order of precedence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import NumericalError
from .evaluation import dumps, run_monte_carlo
from .flightreplay import load_track_file, process_track
from .geometry import parse_grid_spec
from .modeselect import (
    analytic_pattern,
    cupola_structure,
    enumerate_admissible_sets,
    load_structure_file,
    rank_sets,
    write_ranking_csv,
)
from .patterns import cupola_port_set, fourier_port_set, parse_port_spec, sample_port_set, save_pattern_file

logger = logging.getLogger("dfeval")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "eval": {
        "ports": "fourier:3", "grid": "hemisphere:341", "candidate_grid": None,
        "snr": -10.0, "trials": 1000, "seed": 0, "out": ".", "keep_trials": False,
        "adaptive_stop": False, "bin_width": 5.0, "snr_reference": "per-port",
        "snapshots": 1, "eigensolver": "lapack",
    },
    "rank-modes": {
        "structure": None, "grid": "hemisphere:341", "candidate_grid": None,
        "snr": -10.0, "trials": 1000, "seed": 0, "out": ".", "max_eigenvalue": 3.0,
        "snr_reference": "per-port",
    },
    "replay": {
        "track": None, "ports": None, "candidate_grid": "equiangular:5", "out": ".",
        "outlier_threshold": 90.0, "bin_step": 10.0, "no_offset": False,
    },
    "gen-pattern": {"kind": None, "step": 5.0, "theta_max": 90.0, "out": "pattern.csv"},
}
# execution details that never change results are kept out of embedded configs
_NOT_ECHOED = {"out", "workers", "config"}


class InputError(ValueError):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def read_config_file(path):
    """Flat ``key = value`` lines; keys mirror the long flags (dashes or underscores)."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{n}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return values


def _coerce(key, raw, default):
    if raw is None or not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def effective_config(command, args):
    """Merge CLI flags over config-file values over defaults."""
    defaults = DEFAULTS[command]
    from_file = read_config_file(args.config) if args.config else {}
    unknown = set(from_file) - set(defaults) - {"workers"}
    if unknown:
        raise InputError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = {}
    for key, default in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = from_file.get(key, default)
        try:
            cfg[key] = _coerce(key, val, default)
        except ValueError as exc:
            raise InputError(f"invalid value for {key}: {exc}") from None
    workers = args.workers if args.workers is not None else from_file.get(
        "workers", os.environ.get("DFEVAL_WORKERS", "1"))
    try:
        cfg["workers"] = int(workers)
    except ValueError:
        raise InputError(f"invalid worker count {workers!r}") from None
    if cfg["workers"] < 1:
        raise InputError("workers must be >= 1")
    return cfg


def _echo(cfg, command):
    out = {k: v for k, v in cfg.items() if k not in _NOT_ECHOED}
    out["command"] = command
    out["tool_version"] = __version__
    return out


def _outdir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eval(cfg):
    ports = parse_port_spec(cfg["ports"])
    grid = parse_grid_spec(cfg["grid"])
    cand = parse_grid_spec(cfg["candidate_grid"]) if cfg["candidate_grid"] else grid
    report = run_monte_carlo(
        ports, grid, cand, cfg["snr"], cfg["trials"], cfg["seed"],
        snapshots=cfg["snapshots"], snr_reference=cfg["snr_reference"],
        bin_width=cfg["bin_width"], keep_trials=cfg["keep_trials"],
        adaptive=cfg["adaptive_stop"], eigensolver=cfg["eigensolver"], workers=cfg["workers"],
    )
    report.config["run"] = _echo(cfg, "eval")
    out = _outdir(cfg)
    report.to_json(out / "eval_report.json")
    report.to_csv(out / "eval_per_doa.csv")
    report.histograms_to_csv(out / "eval_histograms.csv")
    if cfg["keep_trials"]:
        report.trials_to_csv(out / "eval_trials.csv")
    agg = report.aggregate
    print(
        f"eval: {len(report.doa_index)} DoAs x {int(report.trials[0])} trials, "
        f"SNR {cfg['snr']:g} dB: RMSE az {agg['rmse_az']:.2f} deg, "
        f"el {agg['rmse_el']:.2f} deg, great-circle {agg['rmse_gc']:.2f} deg"
    )
    return EXIT_OK


def cmd_rank_modes(cfg):
    if cfg["structure"] in (None, "", "builtin:cupola"):
        if cfg["structure"] is None:
            raise InputError("--structure is required (or builtin:cupola)")
        structure = cupola_structure()
    else:
        structure = load_structure_file(cfg["structure"])
    grid = parse_grid_spec(cfg["grid"])
    cand = parse_grid_spec(cfg["candidate_grid"]) if cfg["candidate_grid"] else grid
    sets = enumerate_admissible_sets(structure, cfg["max_eigenvalue"])
    if not sets:
        logger.warning("structure %s has no admissible mode set", structure.name)
    ranked = rank_sets(structure, sets, grid, cand, cfg["snr"], cfg["trials"], cfg["seed"],
                       snr_reference=cfg["snr_reference"], workers=cfg["workers"])
    echo = _echo(cfg, "rank-modes")
    out = _outdir(cfg)
    write_ranking_csv(out / "ranking.csv", structure.name, ranked, echo)
    payload = {
        "config": echo,
        "structure": {
            "name": structure.name, "diameter_m": structure.diameter_m,
            "height_to_width": structure.height_to_width, "frequency_mhz": structure.frequency_mhz,
        },
        "ranking": [
            {"members": [str(m) for m in ms.members], "rmse_gc_deg": ms.rmse_deg,
             "rmse_az_deg": ms.rmse_az_deg, "rmse_el_deg": ms.rmse_el_deg}
            for ms, _ in ranked
        ],
    }
    (out / "ranking.json").write_text(dumps(payload), encoding="utf-8")
    for ms, r in ranked:
        print(f"{structure.name} {ms.label()}: RMSE {r:.2f} deg")
    return EXIT_OK


def cmd_replay(cfg):
    if not cfg["track"]:
        raise InputError("--track is required")
    mode, n_ports, samples = load_track_file(cfg["track"])
    ports = None
    if mode == "steering":
        if not cfg["ports"]:
            raise InputError("steering tracks need --ports")
        ports = parse_port_spec(cfg["ports"])
        if ports.n_ports != n_ports:
            raise InputError(f"track declares P={n_ports} but ports have P={ports.n_ports}")
    step = cfg["bin_step"]
    edges = np.arange(0.0, 90.0 + step / 2, step)
    if edges[-1] != 90.0:
        raise InputError("bin step must divide 90")
    report = process_track(samples, ports, parse_grid_spec(cfg["candidate_grid"]),
                           cfg["outlier_threshold"], edges, not cfg["no_offset"])
    report.config = _echo(cfg, "replay")
    out = _outdir(cfg)
    (out / "track_report.json").write_text(dumps(report.to_dict()), encoding="utf-8")
    report.bins_to_csv(out / "track_bins.csv")
    line = (f"replay: {report.azimuth_errors.size} samples, RMSE az {report.rmse_az_raw:.2f} deg, "
            f"el {report.rmse_el_raw:.2f} deg")
    if report.rmse_az_filtered is not None:
        line += (f"; filtered az RMSE {report.rmse_az_filtered:.2f} deg "
                 f"({100 * report.excluded_fraction:.1f}% excluded)")
    print(line)
    return EXIT_OK


def _patterns_for_kind(kind):
    k = kind.strip().lower()
    if k.startswith("fourier:"):
        try:
            return list(fourier_port_set(int(k.split(":", 1)[1])).patterns)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    if k in ("cupola-analytic", "cupola"):
        return list(cupola_port_set().patterns)
    try:
        return [analytic_pattern(part) for part in k.split("+")]
    except ValueError as exc:
        raise InputError(f"invalid pattern kind {kind!r}: {exc}") from None


def cmd_gen_pattern(cfg):
    if not cfg["kind"]:
        raise InputError("pattern kind is required")
    patterns = _patterns_for_kind(cfg["kind"])
    sampled = sample_port_set(patterns, cfg["step"], cfg["theta_max"])
    out = Path(cfg["out"])
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    comment = "config=" + json.dumps(_echo(cfg, "gen-pattern"), sort_keys=True)
    save_pattern_file(sampled, out, comments=[comment])
    print(f"gen-pattern: wrote {len(sampled)} port(s) on a {cfg['step']:g} deg lattice to {out}")
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "rank-modes": cmd_rank_modes,
    "replay": cmd_replay,
    "gen-pattern": cmd_gen_pattern,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dfeval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dfeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file mirroring the flags")
        p.add_argument("--out", help="output directory (file for gen-pattern)")
        p.add_argument("--workers", type=int, help="worker threads (default $DFEVAL_WORKERS or 1)")
        p.add_argument("-v", "--verbose", action="store_true")

    def mc(p):
        p.add_argument("--grid", help="true DoA grid: hemisphere:N or equiangular:STEP")
        p.add_argument("--candidate-grid", dest="candidate_grid", help="search grid (default: --grid)")
        p.add_argument("--snr", type=float, help="SNR in dB")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials per DoA")
        p.add_argument("--seed", type=int, help="master seed (recorded in every output)")
        p.add_argument("--snr-reference", dest="snr_reference", choices=("per-port", "total"))

    p = sub.add_parser("eval", help="Monte-Carlo RMSE of a port set")
    common(p)
    mc(p)
    p.add_argument("--ports", help="fourier:P, cupola-analytic or file:PATH")
    p.add_argument("--keep-trials", dest="keep_trials", action="store_const", const=True)
    p.add_argument("--adaptive-stop", dest="adaptive_stop", action="store_const", const=True)
    p.add_argument("--bin-width", dest="bin_width", type=float)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--eigensolver", choices=("lapack", "jacobi"))

    p = sub.add_parser("rank-modes", help="rank admissible characteristic-mode sets")
    common(p)
    mc(p)
    p.add_argument("--structure", help="structure JSON file or builtin:cupola")
    p.add_argument("--max-eigenvalue", dest="max_eigenvalue", type=float)

    p = sub.add_parser("replay", help="post-process a track file")
    common(p)
    p.add_argument("--track", help="track CSV")
    p.add_argument("--ports", help="port set for steering-vector tracks")
    p.add_argument("--candidate-grid", dest="candidate_grid")
    p.add_argument("--outlier-threshold", dest="outlier_threshold", type=float)
    p.add_argument("--bin-step", dest="bin_step", type=float)
    p.add_argument("--no-offset", dest="no_offset", action="store_const", const=True)

    p = sub.add_parser("gen-pattern", help="write analytic patterns as a pattern CSV")
    common(p)
    p.add_argument("kind", nargs="?", help="fourier:P, cupola-analytic, monopole, magnetic-dipole:AXIS")
    p.add_argument("--step", type=float)
    p.add_argument("--theta-max", dest="theta_max", type=float)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = effective_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"dfeval: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"dfeval: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
