"""Command-line entry point: ``jmgt-lab <command> [--config FILE] [flags]``.

Configuration files are flat ``key = value`` lines; ``#`` starts a comment.
Every key can also be given as a flag (``tau_grid.count`` becomes
``--tau-grid-count``) or as ``--set key=value``; flags override the file.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 self-test failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import re
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .experiments import (
    ExperimentConfig,
    initial_data,
    jmgt_initial_state,
    run_decay_sweep,
    run_mms_order,
    run_picard_vs_etd,
    run_tau_sweep,
    run_threshold_search,
)
from .model import EnergySample, WestState
from .propagator import JMGT, simulate
from .spectral import ConfigurationError, NumericalFailure

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_SELFTEST = 3

ENERGY_HEADER = EnergySample.FIELDS
SWEEP_HEADER = ("tau", "sup_err_sq", "uttt_integral", "omega", "r_squared", "flag")
THRESHOLD_HEADER = ("iter", "amplitude", "h0tau_norm", "decayed")


class ConfigError(ConfigurationError):
    def __init__(self, key: str, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")
        self.key = key
        self.line = line


# --------------------------------------------------------------------- config

_PI = re.compile(r"^\s*([-+]?[0-9.]*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def _float(text: str) -> float:
    m = _PI.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return float(text)


def _convert(ftype: str, text: str):
    text = text.strip()
    if ftype == "int":
        if not re.fullmatch(r"[-+]?\d+", text):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(text)
    if ftype == "float":
        return _float(text)
    if ftype == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if ftype.startswith("tuple"):
        return tuple(_float(x) for x in text.split(",") if x.strip())
    return text


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ",".join(format(float(x), ".17g") for x in value)
    return str(value)


def read_config_file(path: str | Path | None) -> list[tuple[str, str, int]]:
    """(key, raw value, line number) triples from a flat key=value file."""
    if path is None:
        return []
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(line, "expected 'key = value'", lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            entries.append((key, value, lineno))
    return entries


def parse_config(
    path: str | Path | None = None, flag_overrides: dict[str, str] | None = None
) -> ExperimentConfig:
    """Resolve a configuration: defaults, then file entries, then flags."""
    keys = ExperimentConfig.keys()
    types = {f.name: str(f.type) for f in dataclasses.fields(ExperimentConfig)}
    values: dict[str, object] = {}
    sources: dict[str, int | None] = {}
    entries = read_config_file(path)
    entries += [(k, v, None) for k, v in (flag_overrides or {}).items()]
    for key, raw, lineno in entries:
        if key not in keys:
            raise ConfigError(key, "unknown key", lineno)
        name = keys[key]
        try:
            values[name] = _convert(types[name], raw)
        except ValueError as exc:
            raise ConfigError(key, str(exc), lineno) from None
        sources[name] = lineno
    try:
        return ExperimentConfig(**values)
    except ConfigurationError as exc:
        key = str(exc).split(":", 1)[0]
        line = sources.get(keys.get(key, ""), None)
        raise ConfigError(key, str(exc).split(":", 1)[-1].strip(), line) from None


def config_echo(cfg: ExperimentConfig) -> dict[str, str]:
    return {
        f.metadata["key"]: _format(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)
    }


def write_config(cfg: ExperimentConfig, path: Path) -> None:
    lines = [f"{k} = {v}" for k, v in config_echo(cfg).items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ output io


def _num(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_num(x) for x in row) + "\n")
    return path


def write_plot(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(["set datafile separator ','", "set key autotitle columnhead"] + lines) + "\n")
    return path


def _jsonable(x):
    # strict JSON has no NaN/inf; numpy scalars become plain numbers
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


class Run:
    """Collects outputs of one command and writes the manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig, out_dir: Path):
        self.command = command
        self.cfg = cfg
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.summary: dict = {}
        self.start = time.perf_counter()

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self, status: int) -> int:
        write_config(self.cfg, self.path("config.resolved"))
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config": config_echo(self.cfg),
            "wall_clock_seconds": time.perf_counter() - self.start,
            "outputs": self.files + ["manifest.json"],
            "exit_status": status,
            "summary": self.summary,
        }
        text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True, allow_nan=False)
        (self.out / "manifest.json").write_text(text + "\n")
        return status


# ------------------------------------------------------------------- commands


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("simulate", cfg, out_dir)
    basis = cfg.basis()
    u0, u1 = initial_data(cfg, basis)
    if cfg.solver == JMGT:
        p = cfg.params()
        s0 = jmgt_initial_state(u0, u1, p, cfg.well_prepared, cfg.padding)
    else:
        p = cfg.params().with_tau(0.0)
        s0 = WestState(0.0, u0, u1)
    traj = simulate(s0, p, cfg.T, cfg.dt, cfg.stride, cfg.solver, padding=cfg.padding, ceiling=cfg.ceiling)
    write_csv(run.path("energies.csv"), ENERGY_HEADER, traj.energies)
    write_plot(
        run.path("energies.gp"),
        ["set logscale y", "set xlabel 't'",
         "plot 'energies.csv' using 1:5 with lines, '' using 1:6 with lines, '' using 1:4 with lines"],
    )
    run.summary = {"status": traj.status, "message": traj.message, "snapshots": len(traj)}
    return run.finish(EXIT_OK if traj.ok else EXIT_NUMERICAL)


def cmd_sweep_tau(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("sweep-tau", cfg, out_dir)
    res = run_tau_sweep(cfg)
    rows = []
    for r in res.records:
        f = r.decay_fit
        rows.append((r.tau, r.sup_err_sq, r.uttt_integral,
                     f.omega if f else math.nan, f.r_squared if f else math.nan, r.flag))
    write_csv(run.path("sweep_tau.csv"), SWEEP_HEADER, rows)
    write_plot(
        run.path("sweep_tau.gp"),
        ["set logscale xy", "set xlabel 'tau'",
         "plot 'sweep_tau.csv' using 1:2 with linespoints, '' using 1:3 with linespoints"],
    )
    run.summary = {"slope": res.slope, "uttt_slope": res.uttt_slope, "note": res.note}
    failed = any(r.flag not in ("ok", "fit_failed") for r in res.records)
    return run.finish(EXIT_NUMERICAL if failed else EXIT_OK)


def cmd_sweep_decay(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("sweep-decay", cfg, out_dir)
    res = run_decay_sweep(cfg)
    rows = []
    for tau, f, g, st in zip(res.taus, res.fits, res.fits_frakE, res.statuses):
        rows.append((tau, f.omega if f else math.nan, f.r_squared if f else math.nan,
                     g.omega if g else math.nan, g.r_squared if g else math.nan, st))
    write_csv(run.path("sweep_decay.csv"),
              ("tau", "omega", "r_squared", "omega_frakE", "r_squared_frakE", "flag"), rows)
    write_plot(run.path("sweep_decay.gp"),
               ["set logscale x", "set xlabel 'tau'",
                "plot 'sweep_decay.csv' using 1:2 with linespoints, '' using 1:4 with linespoints"])
    run.summary = {"verdict": res.verdict, "evidence": res.evidence, "omega_ref": res.omega_ref}
    return run.finish(EXIT_OK)


def cmd_threshold(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("threshold", cfg, out_dir)
    res = run_threshold_search(cfg)
    rows = [(i, a, rho, d) for i, (a, rho, d) in enumerate(res.history)]
    write_csv(run.path("threshold.csv"), THRESHOLD_HEADER, rows)
    write_plot(run.path("threshold.gp"),
               ["set xlabel 'iteration'", "plot 'threshold.csv' using 1:2 with linespoints"])
    run.summary = {
        "amplitude_bracket": [res.lo, res.hi],
        "h0tau_bracket": [res.rho_lo, res.rho_hi],
        "r_level": res.r_level,
        "r_bracket": [res.r_lo, res.r_hi],
        "open_ended": res.open_ended,
        "energies": res.energies,
    }
    return run.finish(EXIT_OK)


def cmd_mms(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("mms", cfg, out_dir)
    res = run_mms_order(cfg)
    rows = [(name, dt, e) for name, r in res.items() for dt, e in zip(r.dts, r.errors)]
    write_csv(run.path("mms.csv"), ("solver", "dt", "error"), rows)
    write_plot(run.path("mms.gp"),
               ["set logscale xy", "set xlabel 'dt'", "plot 'mms.csv' using 2:3 with points"])
    run.summary = {name: {"slope": r.slope, "pairwise": r.pairwise, "roundoff": r.roundoff,
                          "passed": r.passed} for name, r in res.items()}
    return run.finish(EXIT_OK if all(r.passed for r in res.values()) else EXIT_SELFTEST)


def cmd_picard(cfg: ExperimentConfig, out_dir: Path) -> int:
    run = Run("picard", cfg, out_dir)
    res = run_picard_vs_etd(cfg)
    rows = [(i + 2, r) for i, r in enumerate(res.ratios)]
    write_csv(run.path("picard_ratios.csv"), ("iter", "ratio"), rows)
    if res.ramp:
        write_csv(run.path("picard_ramp.csv"),
                  ("amplitude", "h0tau_norm", "max_ratio", "converged"), res.ramp)
    write_plot(run.path("picard.gp"),
               ["set logscale y", "plot 'picard_ratios.csv' using 1:2 with linespoints"])
    run.summary = {
        "discrepancy": res.discrepancy,
        "tolerance": res.tolerance,
        "converged": res.converged,
        "iterations": res.iterations,
        "first_noncontractive": res.first_noncontractive,
    }
    return run.finish(EXIT_OK if res.converged else EXIT_NUMERICAL)


def cmd_selftest(cfg: ExperimentConfig | None = None, out_dir: Path | None = None) -> int:
    from .acceptance import run_all

    results = run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_SELFTEST if failed else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep-tau": cmd_sweep_tau,
    "sweep-decay": cmd_sweep_decay,
    "threshold": cmd_threshold,
    "mms": cmd_mms,
    "picard": cmd_picard,
    "selftest": cmd_selftest,
}


COMMAND_HELP = {
    "simulate": "one run; writes energies.csv",
    "sweep-tau": "distance to the Westervelt limit over the tau grid",
    "sweep-decay": "decay-rate fits over the tau grid and a uniformity verdict",
    "threshold": "bisect the data amplitude where decay is lost",
    "mms": "temporal order of both solvers on a manufactured solution",
    "picard": "Picard iteration versus the ETD2 run, with an optional amplitude ramp",
    "selftest": "run acceptance criteria 1-10",
}


def _flag(key: str) -> str:
    return "--" + key.replace(".", "-").replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jmgt-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMAND_HELP[name])
        sp.add_argument("--config", help="flat key=value configuration file")
        sp.add_argument("--out-dir", default="out", help="output directory (default ./out)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in ExperimentConfig.keys():
            sp.add_argument(_flag(key), dest="cfg:" + key, metavar="VALUE", default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for dest, value in vars(args).items():
        if dest.startswith("cfg:") and value is not None:
            overrides[dest[4:]] = value
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigurationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, Path(args.out_dir))
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
