"""Experiment orchestration.

`anonphy run <preset | --config file.toml>` executes one sweep per selected
precoder and writes a CSV (the reproducibility contract: UTF-8, LF newlines,
%.6g float formatting, byte-identical for identical seed and config), a JSON
run manifest, and optional DER/SER plots.

Exit codes: 0 success, 2 invalid configuration, 3 solver failures beyond the
block-failure budget.
"""

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import replace

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .channel import RNG_LABEL
from .errors import ConfigError
from .simulation import PRECODERS, SystemConfig, run_sweep

CSV_HEADER = (
    "scenario,precoder,detector,snr_db,n_t,n_r,k,epsilon,zeta,delta,"
    "blocks,der,ser,entropy_bits,mean_objective,mean_iterations,seed"
)

_INT_FIELDS = {"k", "n_r", "n_t", "m_order", "block_len", "n_blocks", "seed"}
_FLOAT_FIELDS = {
    "p_max", "epsilon", "zeta", "delta", "beta", "tau",
    "gamma_lo", "gamma_hi", "failure_budget",
}
_STR_FIELDS = {"scenario", "precoder", "detector"}


@dataclasses.dataclass
class Experiment:
    name: str
    cfg: SystemConfig
    precoders: list
    axis: str = "snr"
    values: object = None          # grid list, or {precoder: grid} for thresholds


def _fmt(value):
    return "%.6g" % value


def format_row(row):
    """One CSV line; integers stay exact, measurements use %.6g."""
    return ",".join(
        [
            row.scenario,
            row.precoder,
            row.detector,
            _fmt(row.snr_db),
            str(row.n_t),
            str(row.n_r),
            str(row.k),
            _fmt(row.epsilon),
            _fmt(row.zeta),
            _fmt(row.delta),
            str(row.blocks),
            _fmt(row.der),
            _fmt(row.ser),
            _fmt(row.entropy_bits),
            _fmt(row.mean_objective),
            _fmt(row.mean_iterations),
            str(row.seed),
        ]
    )


def build_presets(fast=False):
    """The shipped experiment presets; --fast swaps in small antenna arrays."""
    blocks = 150 if fast else 500
    ss = SystemConfig(
        scenario="strong_sender",
        n_t=4 if fast else 10,
        n_r=4 if fast else 10,
        n_blocks=blocks,
    )
    sr = SystemConfig(
        scenario="strong_receiver",
        n_t=3 if fast else 9,
        n_r=4 if fast else 10,
        n_blocks=blocks,
        precoder="cia",
    )
    full_snr = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    at20 = replace(ss, snr_grid=(20.0,))
    sr20 = replace(sr, snr_grid=(20.0,))
    presets = {
        "ss-snr": Experiment(
            "ss-snr", replace(ss, snr_grid=full_snr),
            ["isa", "cia", "mmse", "svd", "ci"],
        ),
        "ss-antennas": Experiment(
            "ss-antennas", at20, ["isa", "cia", "svd"], axis="antennas",
            values=[(2, 2), (4, 4)] if fast else [(2, 2), (4, 4), (6, 6), (8, 8), (10, 10)],
        ),
        "ss-thresholds": Experiment(
            "ss-thresholds", at20, ["isa", "cia"], axis="threshold",
            values={"isa": [5.0, 20.0, 45.0], "cia": [2.0, 8.0, 32.0]},
        ),
        "isa-convergence": Experiment("isa-convergence", at20, ["isa"]),
        "sr-snr": Experiment(
            "sr-snr", replace(sr, snr_grid=full_snr), ["cia", "mmse", "svd", "ci"],
        ),
        "sr-antennas": Experiment(
            "sr-antennas", sr20, ["cia", "svd"], axis="antennas",
            values=[(3, 4)] if fast else [(5, 6), (7, 8), (9, 10)],
        ),
        "sr-thresholds": Experiment(
            "sr-thresholds", sr20, ["cia"], axis="threshold",
            values={"cia": [0.01, 0.03, 0.1, 1.0]},
        ),
    }
    return presets


def load_config_file(path):
    """Flat TOML mirroring SystemConfig field names, plus optional
    name/precoders/sweep_axis/sweep_values keys."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")

    name = data.pop("name", os.path.splitext(os.path.basename(path))[0])
    precoders = data.pop("precoders", None)
    axis = data.pop("sweep_axis", "snr")
    values = data.pop("sweep_values", None)
    if "snr_grid" in data:
        data["snr_grid"] = tuple(float(v) for v in data["snr_grid"])

    cfg = SystemConfig()
    for key, value in data.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"{path}: unknown config key {key!r}")
        setattr(cfg, key, value)
    if precoders is None:
        precoders = [cfg.precoder]
    if axis == "antennas" and values is not None:
        values = [tuple(v) for v in values]
    return Experiment(name=name, cfg=cfg, precoders=list(precoders), axis=axis, values=values)


def _apply_overrides(cfg, args):
    for name in _INT_FIELDS | _FLOAT_FIELDS | _STR_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if args.snr is not None:
        cfg.snr_grid = tuple(float(v) for v in args.snr.split(","))
    if args.blocks is not None:
        cfg.n_blocks = args.blocks
    return cfg


def _resolve_seed(args, cfg):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ANONPHY_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ANONPHY_SEED must be an integer, got {env!r}")
    return cfg.seed


def run_experiment(exp, out_dir, plots=False, progress=sys.stderr):
    """Execute an Experiment; returns (exit_code, csv_path, manifest_path)."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{exp.name}.csv")
    manifest_path = os.path.join(out_dir, f"{exp.name}.manifest.json")

    t0 = time.monotonic()
    all_rows = []
    n_failed = 0
    n_blocks = 0
    for precoder in exp.precoders:
        if precoder not in PRECODERS:
            raise ConfigError(f"unknown precoder {precoder!r}")
        cfg_p = replace(exp.cfg, precoder=precoder)
        values = exp.values[precoder] if isinstance(exp.values, dict) else exp.values

        def progress_line(i, total, row, _p=precoder):
            if progress is not None:
                print(
                    f"[{exp.name}] {_p} point {i + 1}/{total}: "
                    f"der={row.der:.3f} ser={row.ser:.4g}",
                    file=progress,
                    flush=True,
                )

        report = run_sweep(cfg_p, axis=exp.axis, values=values, progress=progress_line)
        all_rows.extend(report.rows)
        n_failed += report.n_failed
        n_blocks += report.n_blocks

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in all_rows:
            fh.write(format_row(row) + "\n")

    failure_rate = n_failed / n_blocks if n_blocks else 0.0
    manifest = {
        "name": exp.name,
        "version": __version__,
        "rng": RNG_LABEL,
        "config": dataclasses.asdict(exp.cfg),
        "precoders": exp.precoders,
        "sweep_axis": exp.axis,
        "sweep_values": exp.values,
        "csv": os.path.basename(csv_path),
        "rows": len(all_rows),
        "blocks_total": n_blocks,
        "blocks_failed": n_failed,
        "failure_rate": failure_rate,
        "wall_seconds": time.monotonic() - t0,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if plots:
        _emit_plots(exp, all_rows, out_dir)

    if failure_rate > exp.cfg.failure_budget:
        print(
            f"error: {n_failed}/{n_blocks} blocks failed "
            f"(budget {exp.cfg.failure_budget:.1%})",
            file=sys.stderr,
        )
        return 3, csv_path, manifest_path
    return 0, csv_path, manifest_path


def _axis_value(exp, row):
    if exp.axis == "snr":
        return row.snr_db
    if exp.axis == "antennas":
        return row.n_r
    if row.precoder == "isa":
        return row.epsilon
    return row.zeta if row.scenario == "strong_sender" else row.delta


def _emit_plots(exp, rows, out_dir):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("warning: matplotlib unavailable, skipping plots", file=sys.stderr)
        return
    for metric in ("der", "ser"):
        fig, ax = plt.subplots(figsize=(6, 4))
        for precoder in exp.precoders:
            pts = [(r, getattr(r, metric)) for r in rows if r.precoder == precoder]
            xs = [_axis_value(exp, r) for r, _ in pts]
            ys = [v for _, v in pts]
            ax.plot(xs, ys, marker="o", label=precoder)
        ax.set_xlabel(exp.axis)
        ax.set_ylabel(metric.upper())
        ax.set_title(exp.name)
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"{exp.name}.{metric}.png"), dpi=120)
        plt.close(fig)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anonphy",
        description="Monte-Carlo experiments for sender-anonymous multi-antenna uplinks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a preset or a TOML config")
    run_p.add_argument("preset", nargs="?", help="preset name (see --list)")
    run_p.add_argument("--config", help="TOML config file path")
    run_p.add_argument("--list", action="store_true", help="list presets and exit")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--blocks", type=int, help="blocks per grid point")
    run_p.add_argument("--fast", action="store_true", help="small-array preset variants")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--plots", action="store_true", help="emit DER/SER png plots")
    run_p.add_argument("--jobs", type=int, default=1, help="reserved; blocks run sequentially")
    run_p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    for name in sorted(_INT_FIELDS - {"seed"}):
        run_p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    for name in sorted(_FLOAT_FIELDS):
        run_p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    for name in sorted(_STR_FIELDS):
        run_p.add_argument(f"--{name.replace('_', '-')}", dest=name)
    run_p.add_argument("--snr", help="comma-separated SNR grid in dB")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.list:
            for name in sorted(build_presets()):
                print(name)
            return 0
        if bool(args.preset) == bool(args.config):
            raise ConfigError("give exactly one of: a preset name, or --config file")
        if args.preset:
            presets = build_presets(fast=args.fast)
            if args.preset not in presets:
                raise ConfigError(
                    f"unknown preset {args.preset!r}; available: {', '.join(sorted(presets))}"
                )
            exp = presets[args.preset]
        else:
            exp = load_config_file(args.config)

        exp.cfg = _apply_overrides(exp.cfg, args)
        exp.cfg.seed = _resolve_seed(args, exp.cfg)
        exp.cfg.validate()

        code, csv_path, manifest_path = run_experiment(
            exp,
            args.out,
            plots=args.plots,
            progress=None if args.quiet else sys.stderr,
        )
        if code == 0:
            print(csv_path)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
