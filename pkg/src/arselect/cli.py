"""Command-line front end.

Config files are INI-style (configparser)::

    [run]
    seed = 7
    reps = 1000
    n = 1000                 ; select / simulate
    n_values = 180, 300      ; experiment / oracle
    criteria = aic, bic, hq  ; short names, or [criterion:NAME] sections
    mode = same_realization
    workers = 4

    [process]
    kind = arma11
    phi = 0.9
    theta = 0.0

    [criterion:ape_small]
    kind = ape
    delta = inv_log

    [oracle]
    D = 2, 3

    [table1]
    cells = 1000:0.9:0.0, 180:0.0:0.98   ; or "all"

Command-line flags override the file.  Data goes to stdout (or ``--out``),
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .criteria import SELECTION_CSV_HEADER, CriterionSpec, FitCache, criterion_from_config, parse_criteria_list, select
from .errors import ArselectError, ConfigurationError, InputError, InvalidSpecError
from .montecarlo import (
    MODES, SAME, ExperimentPlan, check_cells, estimate_re, run_table1, table1_cells, table1_wide, with_baseline,
)
from .oracle import ORACLE_CSV_HEADER, oracle_sweep
from .procgen import ProcessSpec, SeriesWindow, simulate

SUBCOMMANDS = ("simulate", "select", "oracle", "table1", "experiment")
RUN_KEYS = {"seed", "reps", "n", "n_values", "criteria", "mode", "workers", "burn_in", "out"}
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


# -- input series ------------------------------------------------------------

def parse_series(text: str, source: str = "<input>") -> SeriesWindow:
    """One number per line; blank lines and lines starting with '#' are skipped."""
    vals = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            v = float(s)
        except ValueError:
            raise InputError(f"{source}:{lineno}: not a number: {s!r}") from None
        if not np.isfinite(v):
            raise InputError(f"{source}:{lineno}: non-finite value {s!r}")
        vals.append(v)
    if not vals:
        raise InputError(f"{source}: no numeric values")
    return SeriesWindow(np.array(vals))


def read_series(path: str) -> SeriesWindow:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read input file {path!r}: {exc.strerror}") from None
    return parse_series(text, path)


# -- config ------------------------------------------------------------------

def _int(value, key, minimum=None):
    try:
        v = int(str(value).strip())
    except ValueError:
        raise ConfigurationError(f"key {key!r}: expected an integer, got {value!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigurationError(f"key {key!r}: must be >= {minimum}, got {v}")
    return v


def _int_list(value, key, minimum=None):
    items = [t for t in str(value).replace(",", " ").split() if t]
    if not items:
        raise ConfigurationError(f"key {key!r}: empty list")
    return tuple(_int(t, key, minimum) for t in items)


def _float_list(value, key):
    items = [t for t in str(value).replace(",", " ").split() if t]
    try:
        return tuple(float(t) for t in items)
    except ValueError:
        raise ConfigurationError(f"key {key!r}: cannot parse {value!r}") from None


def _kv_pairs(text, key):
    out = {}
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"{key}: expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip().lower()] = v.strip()
    return out


def parse_cells(text: str):
    if str(text).strip().lower() == "all":
        return table1_cells()
    cells = []
    for item in (t.strip() for t in str(text).split(",")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"key 'cells': expected n:phi:theta, got {item!r}")
        try:
            cells.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise ConfigurationError(f"key 'cells': cannot parse {item!r}") from None
    if not cells:
        raise ConfigurationError("key 'cells': no cells given")
    check_cells(cells)
    return cells


@dataclass
class RunConfig:
    subcommand: str
    process: Optional[ProcessSpec] = None
    criteria: List[CriterionSpec] = field(default_factory=list)
    n: Optional[int] = None
    n_values: tuple = ()
    reps: int = 1000
    seed: int = 0
    workers: int = 1
    mode: str = SAME
    burn_in: Optional[int] = None
    out: Optional[str] = None
    input: Optional[str] = None
    D_values: tuple = (2.0,)
    K: Optional[int] = None
    cells: list = field(default_factory=list)
    profile: Optional[str] = None
    replications_out: Optional[str] = None
    long: bool = False


def load_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is None:
        return cp
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path!r}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path!r}: {exc}") from None
    for sec in cp.sections():
        if sec not in ("run", "process", "oracle", "table1") and not sec.startswith("criterion:"):
            raise ConfigurationError(f"unknown config section [{sec}]")
    return cp


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file and flags into a fully validated :class:`RunConfig`."""
    cp = load_config(args.config)
    run = dict(cp["run"]) if cp.has_section("run") else {}
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [run]: {', '.join(sorted(unknown))}")
    for key in ("seed", "reps", "workers", "out", "n", "n_values", "criteria", "mode", "burn_in"):
        flag = getattr(args, key, None)
        if flag is not None:
            run[key] = str(flag)

    cfg = RunConfig(args.subcommand)
    cfg.seed = _int(run.get("seed", 0), "seed", 0)
    cfg.reps = _int(run.get("reps", 1000), "reps", 1)
    cfg.workers = _int(run.get("workers", 1), "workers", 1)
    cfg.out = run.get("out")
    if "n" in run:
        cfg.n = _int(run["n"], "n", 1)
    if "n_values" in run:
        cfg.n_values = _int_list(run["n_values"], "n_values", 1)
    if "burn_in" in run:
        cfg.burn_in = _int(run["burn_in"], "burn_in", 0)
    cfg.mode = run.get("mode", SAME).strip()
    if cfg.mode not in MODES:
        raise ConfigurationError(f"key 'mode': expected one of {MODES}, got {cfg.mode!r}")

    proc = dict(cp["process"]) if cp.has_section("process") else {}
    if getattr(args, "process", None):
        proc.update(_kv_pairs(args.process, "--process"))
    if proc:
        cfg.process = ProcessSpec.from_config(proc)

    crit_sections = [s for s in cp.sections() if s.startswith("criterion:")]
    if "criteria" in run:
        cfg.criteria = parse_criteria_list(run["criteria"])
    elif crit_sections:
        for sec in crit_sections:
            block = dict(cp[sec])
            block.setdefault("name", sec.split(":", 1)[1])
            try:
                cfg.criteria.append(criterion_from_config(block))
            except ConfigurationError as exc:
                raise ConfigurationError(f"[{sec}] {exc}") from None

    cfg.input = getattr(args, "input", None)
    cfg.profile = getattr(args, "profile", None)
    cfg.replications_out = getattr(args, "replications_out", None)
    cfg.long = bool(getattr(args, "long", False))

    if cp.has_section("oracle"):
        o = dict(cp["oracle"])
        if "d" in o:
            cfg.D_values = _float_list(o["d"], "D")
        if "k" in o:
            cfg.K = _int(o["k"], "K", 1)
    if getattr(args, "D", None):
        cfg.D_values = _float_list(args.D, "D")
    if any(not D > 1 for D in cfg.D_values):
        raise ConfigurationError(f"key 'D': every value must exceed 1, got {cfg.D_values}")

    if args.subcommand == "table1":
        text = getattr(args, "cells", None) or (cp["table1"].get("cells") if cp.has_section("table1") else None) or "all"
        cfg.cells = parse_cells(text)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    sub = cfg.subcommand
    if sub in ("simulate", "oracle", "experiment") and cfg.process is None:
        raise ConfigurationError(f"{sub}: a [process] section or --process is required")
    if sub == "simulate" and cfg.n is None:
        raise ConfigurationError("simulate: key 'n' is required")
    if sub == "select":
        if (cfg.input is None) == (cfg.process is None):
            raise ConfigurationError("select: give exactly one series source (--input FILE or a process with 'n')")
        if cfg.process is not None and cfg.n is None:
            raise ConfigurationError("select: key 'n' is required with a simulated series")
        if not cfg.criteria:
            raise ConfigurationError("select: key 'criteria' is required")
    if sub in ("oracle", "experiment") and not cfg.n_values:
        raise ConfigurationError(f"{sub}: key 'n_values' is required")
    if sub == "experiment":
        if not cfg.criteria:
            raise ConfigurationError("experiment: key 'criteria' is required")
        for n in cfg.n_values:
            for c in with_baseline(cfg.criteria):
                K = c.max_order(n)
                if n <= 2 * K:
                    raise ConfigurationError(f"n_values: n={n} too short for criterion {c.key} with K_n={K}")


# -- commands ----------------------------------------------------------------

def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig) -> str:
    s = simulate(cfg.process, cfg.n, cfg.burn_in, seed=cfg.seed)
    head = "".join(f"# {k} = {v}\n" for k, v in cfg.process.to_config().items())
    return f"# arselect {__version__} simulate seed = {cfg.seed}\n" + head + "".join(f"{v:.17g}\n" for v in s.values)


def cmd_select(cfg: RunConfig) -> str:
    if cfg.input is not None:
        series = read_series(cfg.input)
    else:
        series = simulate(cfg.process, cfg.n, cfg.burn_in, seed=cfg.seed)
    cache = FitCache(series)
    records = [select(series, spec, cache) for spec in cfg.criteria]
    if cfg.profile:
        rows = [(r.criterion, k, f"{v:.12g}") for r in records for k, v in enumerate(r.criterion_values, 1)]
        _write(cfg.profile, _csv(rows, ("criterion", "k", "value")))
    return _csv([r.csv_row() for r in records], SELECTION_CSV_HEADER)


def cmd_oracle(cfg: RunConfig) -> str:
    K_rule = (lambda n: cfg.K) if cfg.K else None
    rows = oracle_sweep(cfg.process, cfg.n_values, cfg.D_values, K_rule)
    fmt = lambda v: f"{v:.12g}" if isinstance(v, float) else v
    return _csv([tuple(fmt(v) for v in r) for r in rows], ORACLE_CSV_HEADER)


def cmd_table1(cfg: RunConfig) -> str:
    table = run_table1(cfg.cells, cfg.reps, cfg.seed, cfg.workers)
    return table.to_csv() if cfg.long else table1_wide(table, cfg.cells)


def cmd_experiment(cfg: RunConfig) -> str:
    plan = ExperimentPlan(cfg.process, cfg.n_values, tuple(cfg.criteria), cfg.reps, cfg.seed, cfg.mode, cfg.burn_in)
    table = estimate_re(plan, cfg.workers, keep_replications=bool(cfg.replications_out))
    if cfg.replications_out:
        _write(cfg.replications_out, table.replications_csv(plan.criteria))
    return table.to_csv()


COMMANDS = {
    "simulate": cmd_simulate, "select": cmd_select, "oracle": cmd_oracle,
    "table1": cmd_table1, "experiment": cmd_experiment,
}


def _write(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path!r}: {exc.strerror}") from None


# -- argument parsing ----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", metavar="PATH", help="write data here instead of stdout")
    common.add_argument("--reps", type=int, help="Monte Carlo replications")
    common.add_argument("--process", metavar="K=V,...", help="process keys, e.g. kind=arma11,phi=0.9,theta=0")

    p = argparse.ArgumentParser(prog="arselect", description="Autoregressive order selection toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a series, one value per line")
    s.add_argument("--n", type=int)
    s.add_argument("--burn-in", dest="burn_in", type=int)

    s = sub.add_parser("select", parents=[common], help="select orders on one series")
    s.add_argument("--input", metavar="FILE", help="series file (one value per line)")
    s.add_argument("--n", type=int)
    s.add_argument("--criteria", help="comma list of aic, bic, hq, ape, two_stage")
    s.add_argument("--profile", metavar="PATH", help="also write criterion value profiles")
    s.add_argument("--burn-in", dest="burn_in", type=int)

    s = sub.add_parser("oracle", parents=[common], help="population-optimal orders")
    s.add_argument("--n-values", dest="n_values")
    s.add_argument("--D", dest="D", help="comma list of D values (default 2)")

    s = sub.add_parser("table1", parents=[common], help="relative-efficiency grid for ARMA(1,1) models")
    s.add_argument("--cells", help="'all' or comma list of n:phi:theta")
    s.add_argument("--long", action="store_true", help="long EfficiencyTable layout instead of the grid")

    s = sub.add_parser("experiment", parents=[common], help="run an experiment plan")
    s.add_argument("--n-values", dest="n_values")
    s.add_argument("--criteria")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--replications-out", dest="replications_out", metavar="PATH",
                   help="per-replication audit CSV")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = build_config(args)
        text = COMMANDS[cfg.subcommand](cfg)
        if cfg.out:
            _write(cfg.out, text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()
    except (ConfigurationError, InputError, InvalidSpecError) as exc:
        print(f"arselect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArselectError as exc:
        print(f"arselect: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
