"""Command-line interface: preprocess, simulate, validate, fit, summarize.

Configuration precedence is flags > config file > defaults; the config
file is flat `key = value` lines (# comments allowed).  Every run writes a
manifest (resolved config, its hash, seed, package version) next to its
primary output, and all randomness flows from the single recorded seed,
so identical config + seed reproduces outputs byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io as oio
from ._version import __version__
from .errors import (ArchiveFormatError, CsvFormatError, OrdlagError,
                     ValidationFailedError)
from .panel import ModelSpec, validate_panel
from .preprocess import build_recoded_panel
from .sampler import fit_model
from .summaries import write_summary_csvs
from .synth import TruthConfig, generate_panel

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_VALIDATION = 4

_SPEC_KEYS = {f.name: f.type for f in fields(ModelSpec)}


def read_config_file(path):
    """Flat key = value configuration; values stay strings until merged."""
    out = {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CsvFormatError(p, f"expected key = value, got {line!r}", lineno)
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(key, value):
    if isinstance(value, str):
        blank = {"true": True, "false": False}
        if value.lower() in blank:
            return blank[value.lower()]
        for cast in (int, float):
            try:
                return cast(value)
            except ValueError:
                continue
    return value


def build_spec(args, file_config):
    """ModelSpec from defaults, then config file, then explicit flags."""
    merged = {}
    for key, value in file_config.items():
        if key in _SPEC_KEYS:
            merged[key] = _coerce(key, value)
    for key in _SPEC_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return ModelSpec.from_dict(merged)


def _add_spec_flags(p):
    p.add_argument("--form", dest="factor_form", choices=["univariate", "bivariate"])
    p.add_argument("--lag-depth", dest="lag_depth", type=int)
    p.add_argument("--k", dest="K", type=int)
    p.add_argument("--constrained-lags", dest="constrained_lags",
                   action="store_const", const=True)
    p.add_argument("--iterations", dest="iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thinning", dest="thinning", type=int)
    p.add_argument("--chains", dest="chains", type=int)
    p.add_argument("--seed", dest="seed", type=int)


def _progress_printer(verbose):
    if not verbose:
        return None

    def progress(chain, it, total):
        print(f"[chain {chain}] {it}/{total} iterations", file=sys.stderr)

    return progress


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ordlag",
        description="Latent-factor distributed-lag modeling of ordinal wellness panels.")
    parser.add_argument("--version", action="version", version=f"ordlag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="recode a raw survey CSV into a model panel")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--config")
    p.add_argument("--k", dest="K", type=int)
    p.add_argument("--restarts", type=int, default=25)
    p.add_argument("--lag-depth", dest="lag_depth", type=int)
    p.add_argument("--seed", dest="seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="generate a synthetic panel from a truth config")
    p.add_argument("--truth", required=True, help="JSON truth configuration")
    p.add_argument("--output", required=True, help="panel CSV path")
    p.add_argument("--record", required=True, help="hidden truth record (JSON)")
    p.add_argument("--seed", dest="seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("validate", help="check a panel against the model invariants")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    _add_spec_flags(p)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("fit", help="run the Metropolis-within-Gibbs sampler")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="model archive path")
    p.add_argument("--config")
    p.add_argument("--artifacts", help="preprocessing artifacts to embed in the archive")
    p.add_argument("--threads", type=int, default=1)
    _add_spec_flags(p)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("summarize", help="write posterior summary tables from an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--match-days", help="athlete_id,date CSV of match days")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def cmd_preprocess(args):
    file_config = read_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_config)
    raw = oio.read_raw_csv(args.input)
    panel, covs, artifacts = build_recoded_panel(
        raw, k=spec.K, restarts=args.restarts, seed=spec.seed,
        lag_depth=spec.lag_depth)
    oio.write_panel_csv(args.output, panel, covs)
    Path(args.artifacts).write_text(json.dumps(artifacts, sort_keys=True, indent=1) + "\n")
    oio.write_manifest(args.output, "preprocess", {
        "input": args.input, "output": args.output, "artifacts": args.artifacts,
        "k": spec.K, "restarts": args.restarts, "lag_depth": spec.lag_depth,
        "seed": spec.seed,
    })
    if args.verbose:
        print(f"wrote {args.output} ({panel.n} athletes, {panel.J} metrics)",
              file=sys.stderr)
    return EXIT_OK


def _jsonable(arr):
    return np.where(np.isfinite(arr), arr.astype(object), None).tolist()


def cmd_simulate(args):
    truth_path = Path(args.truth)
    if not truth_path.exists():
        raise FileNotFoundError(f"truth config not found: {truth_path}")
    truth_dict = json.loads(truth_path.read_text())
    if args.seed is not None:
        truth_dict["seed"] = args.seed
    truth = TruthConfig.from_dict(truth_dict)
    panel, covs, record = generate_panel(truth)
    oio.write_panel_csv(args.output, panel, covs)
    rec = {
        "truth": truth.to_dict(),
        "alpha_ind": record.alpha_ind.tolist(),
        "y": _jsonable(record.y),
        "ztilde": _jsonable(record.ztilde),
        "usable": record.usable.tolist(),
    }
    Path(args.record).write_text(json.dumps(rec, sort_keys=True, indent=1) + "\n")
    oio.write_manifest(args.output, "simulate", {
        "truth": args.truth, "output": args.output, "record": args.record,
        "seed": truth.seed,
    })
    if args.verbose:
        print(f"simulated {panel.n} athletes x {int(panel.T.max())} days",
              file=sys.stderr)
    return EXIT_OK


def cmd_validate(args):
    file_config = read_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_config)
    panel, covs = oio.read_panel_csv(args.input, lag_depth=spec.lag_depth)
    if spec.K != panel.K:
        spec = ModelSpec.from_dict({**spec.to_dict(), "K": panel.K})
    report = validate_panel(panel, covs, spec)
    for line in report.format_lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_fit(args):
    file_config = read_config_file(args.config) if args.config else {}
    spec = build_spec(args, file_config)
    panel, covs = oio.read_panel_csv(args.input, lag_depth=spec.lag_depth)
    if spec.K != panel.K and "K" not in file_config and args.K is None:
        spec = ModelSpec.from_dict({**spec.to_dict(), "K": panel.K})
    artifacts = None
    if args.artifacts:
        ap = Path(args.artifacts)
        if not ap.exists():
            raise FileNotFoundError(f"artifacts file not found: {ap}")
        artifacts = json.loads(ap.read_text())
    draws = fit_model(panel, covs, spec, threads=args.threads,
                      progress=_progress_printer(args.verbose))
    oio.write_archive(args.output, draws, preprocess_artifacts=artifacts)
    oio.write_manifest(args.output, "fit", {
        "input": args.input, "output": args.output, "threads": args.threads,
        "seed": spec.seed, **spec.to_dict(),
    })
    if args.verbose:
        for name, rate in sorted(draws.acceptance.items()):
            print(f"acceptance {name}: {rate:.3f}", file=sys.stderr)
        print(f"wrote {args.output} ({draws.num_draws} draws)", file=sys.stderr)
    return EXIT_OK


def cmd_summarize(args):
    draws, _ = oio.read_archive(args.archive)
    match_days = oio.read_matchdays_csv(args.match_days) if args.match_days else None
    paths = write_summary_csvs(draws, args.output_dir, match_days=match_days,
                               window=args.window, level=args.level)
    oio.write_manifest(Path(args.output_dir) / "summaries", "summarize", {
        "archive": args.archive, "output_dir": args.output_dir,
        "window": args.window, "level": args.level,
        "match_days": args.match_days, "seed": draws.seed,
    })
    if args.verbose:
        for name, p in sorted(paths.items()):
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
}


def dispatch(argv) -> int:
    """Parse argv and run the requested subcommand, mapping error classes
    to distinct exit codes (2 usage, 3 bad input, 4 failed validation)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (CsvFormatError, ArchiveFormatError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationFailedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OrdlagError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
