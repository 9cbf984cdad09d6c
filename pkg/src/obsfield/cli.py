"""Command-line experiment runner.

    obsfield run CONFIG [--seed N] [--output PATH] [--threads N]
    obsfield list [--json]

A config is an INI file::

    [experiment]
    name = spectrum
    seed = 0
    shards = 1
    output_path = spectrum.json   ; optional

    [lattice]
    n_sites = 2
    dx = 1.0
    phi_max = 8.0
    n_phi = 128

    [potential]
    m2 = 1.0
    lambda3 = 0.0
    lambda4 = 0.0

    [parameters]
    hbar = 1.0
    dt = 0.01
    steps = 1000
    samples = 100000
    alpha = 2.0
    shift = 1.0

Exit status: 0 success, 2 invalid config, 3 a numerical guard tripped,
4 an I/O failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .experiments import CATALOG, RUNNERS
from .fluctuations import GridTooNarrowError
from .lattice import LatticeError, LatticeSpec, PotentialSpec
from .madelung import MadelungNodeError, madelung_step_limit
from .schrodinger import ConvergenceError, NormDriftError, TruncationError

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "OBSFIELD_OUTPUT_DIR"
EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 2, 3, 4

SECTIONS = {
    "experiment": {"name": str, "seed": int, "shards": int, "output_path": str},
    "lattice": {"n_sites": int, "dx": float, "phi_max": float, "n_phi": int},
    "potential": {"m2": float, "lambda3": float, "lambda4": float},
    "parameters": {"hbar": float, "dt": float, "steps": int, "samples": int, "alpha": float, "shift": float},
}
DEFAULTS = {
    "seed": 0, "shards": 1, "output_path": "",
    "phi_max": 8.0, "n_phi": 128,
    "m2": 1.0, "lambda3": 0.0, "lambda4": 0.0,
    "hbar": 1.0, "dt": 0.01, "steps": 1000, "samples": 100_000, "alpha": 2.0, "shift": 1.0,
}
WAVE_EXPERIMENTS = {"spectrum", "evolve", "madelung_crosscheck"}
DENSITY_EXPERIMENTS = {"divergence", "alpha_ratio", "observability"}
MAX_WAVE_SITES = 3
RUNTIME_ERRORS = (NormDriftError, ConvergenceError, MadelungNodeError, TruncationError, GridTooNarrowError)


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    lattice: LatticeSpec
    potential: PotentialSpec
    hbar: float
    dt: float
    steps: int
    samples: int
    alpha: float
    seed: int
    shards: int
    shift: float
    output_path: str = ""

    def echo(self) -> dict:
        """Everything needed to rerun, in config-file layout."""
        return {
            "experiment": {"name": self.experiment, "seed": self.seed, "shards": self.shards},
            "lattice": {
                "n_sites": self.lattice.n_sites, "dx": self.lattice.dx,
                "phi_max": self.lattice.phi_max, "n_phi": self.lattice.n_phi,
            },
            "potential": {"m2": self.potential.m2, "lambda3": self.potential.lambda3, "lambda4": self.potential.lambda4},
            "parameters": {
                "hbar": self.hbar, "dt": self.dt, "steps": self.steps, "samples": self.samples,
                "alpha": self.alpha, "shift": self.shift,
            },
        }


def _read_fields(parser: configparser.ConfigParser) -> tuple[dict, list[str]]:
    errors = []
    values = dict(DEFAULTS)
    for section in parser.sections():
        if section not in SECTIONS:
            errors.append(f"[{section}]: unknown section")
            continue
        for key, raw in parser.items(section):
            kind = SECTIONS[section].get(key)
            if kind is None:
                errors.append(f"{section}.{key}: unknown field")
                continue
            try:
                values[key] = kind(raw.strip()) if kind is not int else int(raw.strip(), 10)
            except ValueError:
                errors.append(f"{section}.{key}: expected {kind.__name__}, got {raw!r}")
    return values, errors


def validate(values: dict) -> ExperimentConfig:
    """Check every field against the preconditions of the module that consumes it."""
    errors = []
    name = values.get("name")
    if name is None:
        errors.append("experiment.name: required")
    elif name not in RUNNERS:
        errors.append(f"experiment.name: unknown experiment {name!r} (see `obsfield list`)")
    for key in ("n_sites", "dx"):
        if key not in values:
            errors.append(f"lattice.{key}: required")
    spec = pot = None
    if "n_sites" in values and "dx" in values:
        try:
            spec = LatticeSpec(values["n_sites"], values["dx"], values["phi_max"], values["n_phi"])
        except LatticeError as exc:
            errors.append(f"lattice: {exc}")
    try:
        pot = PotentialSpec(values["m2"], values["lambda3"], values["lambda4"])
    except (LatticeError, ValueError) as exc:
        errors.append(f"potential: {exc}")
    if not values["hbar"] > 0:
        errors.append("parameters.hbar: must be positive")
    if not values["dt"] > 0:
        errors.append("parameters.dt: must be positive")
    if values["steps"] < 0:
        errors.append("parameters.steps: must be nonnegative")
    if values["samples"] < 2:
        errors.append("parameters.samples: must be at least 2")
    if not values["alpha"] > 0:
        errors.append("parameters.alpha: must be positive")
    if values["seed"] < 0:
        errors.append("experiment.seed: must be nonnegative")
    if values["shards"] < 1:
        errors.append("experiment.shards: must be at least 1")
    if name in ("divergence", "alpha_ratio") and values["alpha"] == 1.0:
        errors.append("parameters.alpha: must differ from 1 for Renyi/Tsallis orders")
    if name in WAVE_EXPERIMENTS | DENSITY_EXPERIMENTS and spec is not None and spec.n_sites > MAX_WAVE_SITES:
        errors.append(f"lattice.n_sites: {name} works on the tensor grid, at most {MAX_WAVE_SITES} sites")
    if name in WAVE_EXPERIMENTS | DENSITY_EXPERIMENTS and pot is not None:
        try:
            pot.check_bounded_below()
        except (LatticeError, ValueError) as exc:
            errors.append(f"potential: {exc}")
    if name in ("evolve", "madelung_crosscheck") and values["steps"] < 1:
        errors.append("parameters.steps: must be at least 1")
    if name == "madelung_crosscheck" and spec is not None and values["hbar"] > 0:
        limit = madelung_step_limit(spec, values["hbar"])
        if values["dt"] >= limit:
            errors.append(f"parameters.dt: must be below {limit:.4g} for the hydrodynamic flow on this grid")
    if name in ("observability",) and values["steps"] < 1:
        errors.append("parameters.steps: must be at least 1")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        name, spec, pot, values["hbar"], values["dt"], values["steps"], values["samples"], values["alpha"],
        values["seed"], values["shards"], values["shift"], values["output_path"],
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate ``path``; I/O errors propagate as ``OSError``."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    values, errors = _read_fields(parser)
    if errors:
        raise ConfigError(errors)
    values.update(overrides or {})
    return validate(values)


def resolve_output(cfg: ExperimentConfig, cli_output: str | None) -> Path:
    if cli_output:
        return Path(cli_output)
    if cfg.output_path:
        return Path(cfg.output_path)
    base = Path(os.environ.get(OUTPUT_DIR_ENV) or ".")
    return base / f"{cfg.experiment}-seed{cfg.seed}.json"


def atomic_write(path: Path, data: str):
    """Write to a temporary file next to ``path`` and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _series_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def run(cfg: ExperimentConfig, output: Path, threads: int = 1) -> dict:
    """Run one experiment and write its record (and series) atomically; returns the record."""
    start = time.perf_counter()
    results, series = RUNNERS[cfg.experiment](cfg, threads)
    duration = time.perf_counter() - start
    series_info = None
    if series is not None:
        columns, rows = series
        series_path = output.with_suffix(".csv")
        atomic_write(series_path, _series_csv(columns, rows))
        series_info = {"path": series_path.name, "columns": list(columns), "rows": len(rows)}
    record = {
        "schema_version": SCHEMA_VERSION,
        "artifact": "obsfield",
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "results": {k: {"value": v, "std_error": se} for k, (v, se) in results.items()},
        "series": series_info,
        "duration_s": duration,
    }
    atomic_write(output, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def list_experiments(as_json: bool = False) -> str:
    if as_json:
        return json.dumps([{"name": k, "description": v} for k, v in CATALOG.items()], indent=2)
    width = max(len(k) for k in CATALOG)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in CATALOG.items())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="obsfield", description="Lattice field-theory observability experiments.")
    parser.add_argument("--version", action="version", version=f"obsfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config", help="path to an INI experiment config")
    p_run.add_argument("--seed", type=int, help="override experiment.seed")
    p_run.add_argument("--output", help=f"result path (default: config output_path, then ${OUTPUT_DIR_ENV}, then .)")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads for sampling (results do not depend on it)")
    p_list = sub.add_parser("list", help="list the available experiments")
    p_list.add_argument("--json", action="store_true", help="machine-readable catalog")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(list_experiments(args.json))
        return 0
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {} if args.seed is None else {"seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    output = resolve_output(cfg, args.output)
    try:
        record = run(cfg, output, args.threads)
    except RUNTIME_ERRORS as exc:
        print(f"runtime guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{cfg.experiment}: wrote {output} ({record['duration_s']:.2f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
