"""Command-line front end.

Configuration is a JSON file of the form::

    {"source": {"kind": "coherent", "mu": 1.0},
     "detector": {"pixels": 400, "efficiency": 0.41, "dark_mean": 0.00125,
                  "crosstalk_p": 0.177, "crosstalk_mode": "event_linear"},
     "trials": 1000000, "mu_grid": [0.05, 0.1, 0.2, 0.5, 1, 2, 5],
     "mode": "exact_m", "resamples": 500, "hbt": false, "workers": 1}

Every key may be overridden with ``--set dotted.key=value`` (values are
parsed as JSON, falling back to a plain string). The random seed is never
read from a default: simulation subcommands require ``--seed``.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
numeric failures.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import __version__, streams
from .detector import DetectorConfig, simulate_dark_histogram, simulate_histogram
from .errors import (
    ConfigError,
    DegenerateFitError,
    InvalidSpecError,
    ModelValidityWarning,
    UndefinedCorrelationError,
    UnphysicalCorrectionWarning,
)
from .estimator import estimate_g
from .fitting import CurvePoint, Model, lm_fit
from .histogram import read_histogram, write_histogram
from .ingest import AmplitudeRecord, discretize_amplitudes, read_amplitudes
from .sources import source_from_dict
from .sweep import RunConfig, run_pipeline, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

CURVE_HEADER = "mu,g,sigma,corrected"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# --- configuration ---------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return data


def apply_override(data: dict, assignment: str) -> None:
    key, sep, text = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    *parents, leaf = key.split(".")
    node = data
    for name in parents:
        node = node.setdefault(name, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {name} is not a section")
    node[leaf] = value


_KNOWN = {"source", "detector", "trials", "seed", "mu_grid", "mode", "resamples", "hbt", "workers"}


def build_run_config(data: dict, seed: int) -> RunConfig:
    unknown = set(data) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "source" not in data:
        raise ConfigError("config needs a 'source' section")
    try:
        source = source_from_dict(data["source"])
        detector = DetectorConfig(**data.get("detector", {}))
        kwargs = {k: data[k] for k in ("trials", "mu_grid", "mode", "resamples", "hbt", "workers") if k in data}
        return RunConfig(source=source, detector=detector, seed=seed, **kwargs)
    except ConfigError:
        raise
    except (InvalidSpecError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _config_from_args(args, path: str | None, overrides: Sequence[str]) -> RunConfig:
    data = copy.deepcopy(load_config(path))
    for assignment in overrides:
        apply_override(data, assignment)
    for flag, key in (("trials", "trials"), ("mu_grid", "mu_grid"), ("mode", "mode"),
                      ("resamples", "resamples"), ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if getattr(args, "hbt", False):
        data["hbt"] = True
    return build_run_config(data, args.seed)


# --- output ----------------------------------------------------------------


def _dump_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_curve(path: str | Path, points: Sequence[CurvePoint]) -> None:
    lines = [CURVE_HEADER] + [
        f"{p.mu!r},{p.g!r},{p.sigma!r},{str(p.corrected).lower()}" for p in points
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path: str | Path) -> list[CurvePoint]:
    try:
        rows = Path(path).read_text().split()
    except OSError as exc:
        raise ConfigError(f"cannot read curve {path}: {exc}") from exc
    if not rows or rows[0] != CURVE_HEADER:
        raise ConfigError(f"{path}: expected header {CURVE_HEADER!r}")
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            mu, g, sigma, corrected = row.split(",")
            points.append(CurvePoint(float(mu), float(g), float(sigma), corrected == "true"))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return points


# --- subcommands -----------------------------------------------------------


def cmd_simulate(args) -> None:
    cfg = _config_from_args(args, args.config, args.set)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "version": __version__}
    hist = simulate_histogram(cfg.source, cfg.detector, cfg.trials,
                              streams.derive_seed(cfg.seed, 0), workers=cfg.workers)
    write_histogram(args.out, hist, meta)
    if args.dark_out:
        dark = simulate_dark_histogram(cfg.detector, cfg.trials,
                                       streams.derive_seed(cfg.seed, 1), workers=cfg.workers)
        write_histogram(args.dark_out, dark, meta)


def cmd_sweep(args) -> None:
    cfg = _config_from_args(args, args.config, args.set)
    sweep = run_sweep(cfg)
    write_curve(args.out, sweep.curve)
    if args.hbt_out:
        if not cfg.hbt:
            raise ConfigError("--hbt-out needs the HBT arm (--hbt or hbt: true)")
        write_curve(args.hbt_out, sweep.hbt_curve)
    if args.report:
        _dump_json({**sweep.to_dict(), "version": __version__}, args.report)


def cmd_estimate(args) -> None:
    signal, meta = read_histogram(args.histogram)
    dark = read_histogram(args.dark)[0] if args.dark else None
    pixels = args.pixels
    if pixels is None:
        pixels = meta.get("config", {}).get("detector", {}).get("pixels", DetectorConfig().pixels)
    est = estimate_g(signal, dark, l=args.order, m=pixels, mode=args.mode,
                     resamples=args.resamples, seed=args.seed)
    _dump_json({
        "estimate": est.to_dict(),
        "inputs": {"histogram": str(args.histogram), "dark": args.dark and str(args.dark)},
        "pixels": pixels,
        "resamples": args.resamples,
        "seed": args.seed,
        "version": __version__,
    }, args.out)


def cmd_fit(args) -> None:
    points = read_curve(args.curve)
    fit = lm_fit(args.model, points)
    _dump_json({
        "fit": fit.to_dict(),
        "curve": str(args.curve),
        "points": [[p.mu, p.g, p.sigma, p.corrected] for p in points],
        "version": __version__,
    }, args.out)


def cmd_pipeline(args) -> None:
    if args.reference_config or args.subject_config:
        if not (args.reference_config and args.subject_config):
            raise ConfigError("give both --reference-config and --subject-config")
        if args.seed is None:
            raise ConfigError("--seed is required when the pipeline simulates its sweeps")
        ref_cfg = _config_from_args(args, args.reference_config, args.set)
        ref_cfg = dataclasses.replace(ref_cfg, seed=streams.derive_seed(args.seed, 1))
        sub_cfg = _config_from_args(args, args.subject_config, args.set)
        sub_cfg = dataclasses.replace(sub_cfg, seed=streams.derive_seed(args.seed, 2))
        reference, subject = run_sweep(ref_cfg).curve, run_sweep(sub_cfg).curve
        provenance = {
            "seed": args.seed,
            "reference_config": ref_cfg.to_dict(),
            "subject_config": sub_cfg.to_dict(),
        }
    elif args.reference and args.subject:
        reference, subject = read_curve(args.reference), read_curve(args.subject)
        provenance = {"reference_curve": str(args.reference), "subject_curve": str(args.subject)}
    else:
        raise ConfigError("give --reference/--subject curves or --reference-config/--subject-config")
    provenance["version"] = __version__
    report = run_pipeline(reference, subject, provenance)
    _dump_json(report.to_dict(), args.out)
    if args.corrected_out:
        write_curve(args.corrected_out, report.corrected)


def cmd_discretize(args) -> None:
    amps = read_amplitudes(args.amplitudes)
    hist = discretize_amplitudes(AmplitudeRecord(amps, args.unit, args.full_scale))
    write_histogram(args.out, hist, {
        "amplitudes": str(args.amplitudes),
        "unit_amplitude": args.unit,
        "full_scale": args.full_scale,
        "version": __version__,
    })


# --- parser ----------------------------------------------------------------


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad mu grid {text!r}") from exc


def _run_options(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable; dotted keys for sections)")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--trials", type=int)
    p.add_argument("--mu-grid", dest="mu_grid", type=_grid, help="comma-separated targets")
    p.add_argument("--mode", choices=["exact_m", "large_m"])
    p.add_argument("--resamples", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--hbt", action="store_true", help="add the simulated HBT arm")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mppc-g2", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one fired-count histogram")
    _run_options(p)
    p.add_argument("--out", required=True, help="histogram CSV")
    p.add_argument("--dark-out", help="also simulate a dark histogram")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate and estimate g2 over the mu grid")
    _run_options(p)
    p.add_argument("--out", required=True, help="curve CSV")
    p.add_argument("--hbt-out", help="HBT curve CSV")
    p.add_argument("--report", help="JSON report")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", help="estimate g^(l) from a histogram CSV")
    p.add_argument("histogram")
    p.add_argument("--dark", help="dark histogram to subtract")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--pixels", type=int)
    p.add_argument("--mode", choices=["exact_m", "large_m"], default="exact_m")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--out", help="JSON report (default stdout)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit a model to a curve CSV")
    p.add_argument("curve")
    p.add_argument("--model", choices=[m.value for m in Model], default="hyperbola")
    p.add_argument("--out", help="JSON report (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pipeline", help="calibrate P on a reference, correct and fit a subject")
    _run_options(p, seed_required=False)
    p.add_argument("--reference", help="reference curve CSV (g2 = 1 source)")
    p.add_argument("--subject", help="subject curve CSV")
    p.add_argument("--reference-config", help="simulate the reference sweep from this config")
    p.add_argument("--subject-config", help="simulate the subject sweep from this config")
    p.add_argument("--out", help="JSON report (default stdout)")
    p.add_argument("--corrected-out", help="corrected subject curve CSV")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("discretize", help="bin pulse amplitudes into a histogram")
    p.add_argument("amplitudes", help="amplitude CSV with header 'amplitude'")
    p.add_argument("--unit", type=float, required=True, help="single-pixel amplitude A0")
    p.add_argument("--full-scale", type=float, help="largest admissible amplitude")
    p.add_argument("--out", required=True, help="histogram CSV")
    p.set_defaults(func=cmd_discretize)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            for category in (ModelValidityWarning, UnphysicalCorrectionWarning):
                warnings.simplefilter("always", category)
            warnings.showwarning = _show_warning
            args.func(args)
    except (ConfigError, InvalidSpecError, OSError) as exc:
        print(f"mppc-g2: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UndefinedCorrelationError, DegenerateFitError, ArithmeticError) as exc:
        print(f"mppc-g2: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"mppc-g2: warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
