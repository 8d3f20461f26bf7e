"""Command-line front end.

Subcommands::

    msrv estimate   --input ticks.csv [--level 0.95] [--m-policy plugin] ...
    msrv weights    --kind {optimal,hstar} --m M
    msrv simulate   --config sim.json [--seed S] --output path.csv
    msrv experiment {convergence,coverage,compare} --config sim.json --output DIR

Tick files are UTF-8 CSV with a mandatory header containing ``timestamp`` and
``logprice`` (or ``price`` together with ``--price``). Timestamps are decimal
seconds; they are shifted so the first one is 0.

Config files are JSON objects. Simulation keys are the fields of
:class:`msrv.simulate.SimConfig`; the experiment keys are

* ``n_list`` (convergence; coverage and compare use ``n``),
* ``policy``: M policy, ``sqrt`` | ``plugin`` | ``fixed:<M>`` | ``c:<c>``,
* ``scheme``: ``optimal`` | ``hstar``,
* ``level`` (coverage), ``modes`` (coverage), ``estimators`` and ``tsrv_k``
  (convergence), ``workers``.

Unknown keys are fatal. Exit codes: 0 ok, 2 input or usage error,
3 ``--assert`` threshold failure, 4 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, InputError, MSRVError, ParameterError
from .estimators import TickSeries
from .grid import SamplingGrid
from .inference import build_scheme, estimate, parse_m_policy
from .simulate import (
    SimConfig,
    compare_estimators,
    gen_path,
    run_convergence_experiment,
    run_coverage_experiment,
)
from .weights import scheme_document

EXIT_OK, EXIT_INPUT, EXIT_ASSERT, EXIT_CONFIG = 0, 2, 3, 4

DEFAULT_N_LIST = (2**10, 2**12, 2**14, 2**16)
EXPERIMENT_KEYS = {
    "convergence": {"n_list", "policy", "scheme", "estimators", "tsrv_k", "workers"},
    "coverage": {"policy", "scheme", "level", "modes", "workers"},
    "compare": {"policy", "scheme", "workers"},
}

THRESHOLDS = {
    "msrv_slope": (-0.33, -0.17),
    "tsrv_slope": (-0.25, -0.09),
    "rv_bias_slope": (0.85, 1.15),
    "coverage": (0.91, 0.98),
    "plugin_gap": 0.04,
}


class UsageError(MSRVError):
    pass


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        from . import __version__

        return __version__


# ---------------------------------------------------------------------------
# ingestion


def read_ticks(path, use_price: bool = False, sort: bool = False, dedupe: bool = False) -> TickSeries:
    """Parse a tick CSV into a :class:`TickSeries`.

    Errors carry the 1-based line number of the offending row. Without
    ``sort``, timestamps must be nondecreasing; without ``dedupe``, they must
    be distinct (``dedupe`` keeps the last row of each timestamp).
    """
    column = "price" if use_price else "logprice"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for name in ("timestamp", column):
            if name not in header:
                raise InputError(f"{path}: header must contain '{name}'")
        it, iv = header.index("timestamp"), header.index(column)
        ts, vals = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                t, v = float(row[it]), float(row[iv])
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric value") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise InputError(f"{path}:{line}: non-finite value")
            if use_price:
                if v <= 0:
                    raise InputError(f"{path}:{line}: price must be positive")
                v = math.log(v)
            if not sort and ts and t < ts[-1]:
                raise InputError(f"{path}:{line}: timestamp decreases (use --sort)")
            ts.append(t)
            vals.append(v)
    if not ts:
        raise InputError(f"{path}: no data rows")
    t = np.array(ts)
    y = np.array(vals)
    if sort:
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
    dup = np.diff(t) == 0
    if np.any(dup):
        if not dedupe:
            raise InputError(f"{path}: duplicate timestamp {t[1:][dup][0]!r} (use --dedupe)")
        keep = np.append(~dup, True)
        t, y = t[keep], y[keep]
    if t.size < 3:
        raise InputError(f"{path}: need at least 3 distinct timestamps")
    return TickSeries.from_arrays(t, y)


def write_ticks(path, grid: SamplingGrid, logprices) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "logprice"])
        for t, y in zip(grid.times, logprices):
            w.writerow([repr(float(t)), repr(float(y))])


# ---------------------------------------------------------------------------
# config


def config_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def split_config(doc: dict, kind: Optional[str]) -> tuple:
    """Separate simulation keys from experiment keys; reject anything else."""
    sim_fields = set(SimConfig.__dataclass_fields__)
    exp_fields = EXPERIMENT_KEYS.get(kind, set())
    unknown = sorted(set(doc) - sim_fields - exp_fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    sim = {k: v for k, v in doc.items() if k in sim_fields}
    exp = {k: v for k, v in doc.items() if k in exp_fields and k not in sim_fields}
    return SimConfig.from_dict(sim), exp


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _emit(text: str, output: Optional[str]) -> list:
    if output is None or output == "-":
        sys.stdout.write(text)
        return []
    Path(output).write_text(text, encoding="utf-8")
    return [str(output)]


def write_manifest(directory: Path, command: str, config: dict, seed, outputs, started: str) -> Path:
    manifest = {
        "command": command,
        "config_digest": config_digest(config),
        "seed": seed,
        "artifact_version": _version(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(str(p) for p in outputs),
    }
    path = directory / "manifest.json"
    path.write_text(_dump(manifest), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    series = read_ticks(args.input, use_price=args.price, sort=args.sort, dedupe=args.dedupe)
    parse_m_policy(args.m_policy)
    report = estimate(
        series,
        level=args.level,
        m_policy=args.m_policy,
        scheme=args.scheme,
        tsrv_k=args.k,
        bias_correct=args.bias_correct,
    )
    _emit(_dump(report.to_dict()), args.output)
    return EXIT_OK


def cmd_weights(args) -> int:
    if args.m < 2:
        raise UsageError("--m must be at least 2")
    doc = scheme_document(build_scheme(args.kind, args.m))
    doc["kind"] = args.kind
    _emit(_dump(doc), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    doc = load_config(args.config)
    config, _ = split_config(doc, None)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    bundle = gen_path(config)
    out = Path(args.output)
    write_ticks(out, bundle.grid, bundle.observed)
    summary = {"true_qv": bundle.true_qv, "true_eta_sq": bundle.true_eta_sq, "n": bundle.n,
               "config": config.to_dict()}
    side = out.with_name(out.stem + "_truth.json")
    side.write_text(_dump(summary), encoding="utf-8")
    write_manifest(out.parent, "simulate", config.to_dict(), config.seed, [out, side], started)
    return EXIT_OK


def _check(name, value, lo, hi, failures):
    if not (lo <= value <= hi):
        failures.append(f"{name}={value:.4g} outside [{lo}, {hi}]")


def assert_thresholds(kind: str, summary: dict) -> list:
    failures = []
    if kind == "convergence":
        slopes = summary["slopes"]
        if "msrv" in slopes:
            _check("msrv_slope", slopes["msrv"]["rmse"], *THRESHOLDS["msrv_slope"], failures)
        if "tsrv" in slopes:
            _check("tsrv_slope", slopes["tsrv"]["rmse"], *THRESHOLDS["tsrv_slope"], failures)
        if "rv" in slopes:
            _check("rv_bias_slope", slopes["rv"]["bias"], *THRESHOLDS["rv_bias_slope"], failures)
        last = summary["table"][-1]
        if "msrv" in last and "tsrv" in last and not last["msrv"]["rmse"] < last["tsrv"]["rmse"]:
            failures.append("rmse(msrv) >= rmse(tsrv) at the largest n")
    elif kind == "coverage":
        if "oracle" in summary:
            _check("oracle_coverage", summary["oracle"]["coverage"], *THRESHOLDS["coverage"], failures)
        gap = summary.get("plugin_minus_oracle")
        if gap is not None and abs(gap) > THRESHOLDS["plugin_gap"]:
            failures.append(f"plugin coverage differs from oracle by {gap:+.3f}")
    elif kind == "compare":
        if summary["ranking"] != ["msrv", "tsrv", "rv"]:
            failures.append(f"rmse ranking is {summary['ranking']}")
    return failures


def cmd_experiment(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    kind = args.kind
    doc = load_config(args.config)
    config, exp = split_config(doc, kind)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["replications"] = args.reps
    config = config.replace(**changes)
    workers = int(exp.pop("workers", args.workers))
    if "policy" in exp:
        parse_m_policy(exp["policy"])
    try:
        if kind == "convergence":
            n_list = exp.pop("n_list", DEFAULT_N_LIST)
            result = run_convergence_experiment(config, n_list, workers=workers, **exp)
        elif kind == "coverage":
            result = run_coverage_experiment(config, workers=workers, **exp)
        else:
            result = compare_estimators(config, workers=workers, **exp)
    except (TypeError, ParameterError) as exc:
        raise ConfigError(str(exc)) from exc

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{kind}.csv"
    json_path = out / f"{kind}_summary.json"
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    summary = dict(result.summary)
    summary["config"] = config.to_dict()
    json_path.write_text(_dump(summary), encoding="utf-8")
    full_config = {**config.to_dict(), **exp, "workers": workers}
    write_manifest(out, f"experiment {kind}", full_config, config.seed, [csv_path, json_path], started)

    if args.assert_:
        failures = assert_thresholds(kind, result.summary)
        for msg in failures:
            print(f"assertion failed: {msg}", file=sys.stderr)
        if failures:
            return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msrv", description="Multi-scale realized variance toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate integrated variance from a tick CSV")
    e.add_argument("--input", required=True, help="CSV with timestamp,logprice header")
    e.add_argument("--output", help="JSON report path (default stdout)")
    e.add_argument("--level", type=_level, default=0.95)
    e.add_argument("--m-policy", default="plugin", help="plugin | sqrt | fixed:<M> | c:<c>")
    e.add_argument("--scheme", choices=("optimal", "hstar"), default="optimal")
    e.add_argument("--k", type=int, help="TSRV scale (default ceil(n^(2/3)))")
    e.add_argument("--sort", action="store_true", help="sort rows by timestamp")
    e.add_argument("--dedupe", action="store_true", help="keep the last row per timestamp")
    e.add_argument("--price", action="store_true", help="read a price column and take logs")
    e.add_argument("--bias-correct", action="store_true", help="add 2 * estimated E eps^2 to the MSRV")
    e.set_defaults(func=cmd_estimate)

    w = sub.add_parser("weights", help="print a weight scheme")
    w.add_argument("--kind", choices=("optimal", "hstar"), default="optimal")
    w.add_argument("--m", type=int, required=True)
    w.add_argument("--output")
    w.set_defaults(func=cmd_weights)

    s = sub.add_parser("simulate", help="simulate one noisy path to CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    x.add_argument("kind", choices=tuple(EXPERIMENT_KEYS))
    x.add_argument("--config", required=True)
    x.add_argument("--seed", type=int)
    x.add_argument("--reps", type=int)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--output", required=True, help="output directory")
    x.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 3 if acceptance thresholds fail")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MSRVError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
