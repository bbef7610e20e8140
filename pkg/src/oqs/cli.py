"""Command line runner: ``oqs <experiment> --config cfg.json``.

Writes ``<experiment>.csv`` (with a ``#`` metadata header) and
``<experiment>.meta.json`` into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .config import EXPERIMENTS, load_config
from .errors import (ConfigError, ContractViolation, DegenerateCutoffError, DegenerateDecompositionError,
                     DegenerateSteadyStateError, InvalidModelError, NumericalDegeneracyError,
                     StiffnessError)

log = logging.getLogger("oqs")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (StiffnessError, DegenerateSteadyStateError, NumericalDegeneracyError,
                    DegenerateDecompositionError, DegenerateCutoffError, np.linalg.LinAlgError,
                    FloatingPointError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oqs", description="Redfield / RWA / truncated Lindblad experiments")
    p.add_argument("--version", action="version", version=f"oqs {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--seed", type=_u64, default=None)
        s.add_argument("--threads", type=_positive, default=1)
        s.add_argument("--full", action="store_true", help="paper-size grid (slow)")
    return p


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_outputs(table, out_dir: Path, experiment: str, meta: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{experiment}.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write(f"# oqs {__version__}\n")
        fh.write(f"# experiment: {experiment}\n")
        fh.write(f"# config_sha256: {meta['config_sha256']}\n")
        fh.write(f"# seed: {meta['seed']}\n")
        w = csv.writer(fh)
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(row[c]) for c in table.columns])
    meta_path = out_dir / f"{experiment}.meta.json"
    meta = dict(meta, columns=list(table.columns), n_rows=len(table.rows),
                summary=_jsonable(table.summary))
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def run(args) -> int:
    loaded = load_config(args.config, args.experiment)
    seed = args.seed if args.seed is not None else loaded.seed
    p = loaded.params
    name = args.experiment
    if args.full and name != "errormap":
        log.warning("--full only changes the errormap experiment; ignored")
    if name == "errormap":
        table = experiments.run_errormap(p, args.threads, args.full)
    elif name == "imbalance":
        table = experiments.run_imbalance(p, seed, args.threads)
    elif name == "optim-compare":
        table = experiments.run_optim_compare(p)
    elif name == "brownian":
        table = experiments.run_brownian(p, args.threads)
    else:
        table = experiments.run_weights(p)
    out = Path(args.out or loaded.output or "results")
    meta = {"experiment": name, "version": __version__, "config_sha256": loaded.sha256,
            "seed": seed, "full": bool(args.full), "config": loaded.raw}
    csv_path, _ = write_outputs(table, out, name, meta)
    log.info("wrote %s", csv_path)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run(args)
    except (ConfigError, InvalidModelError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except ContractViolation as exc:
        log.error("numerical failure (contract): %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
