"""Configuration-driven experiment runner.

Subcommands:
  parakernel run <config.ini>        run one experiment, write CSV + JSON
  parakernel suite <manifest.json>   run a list of configs, aggregate verdicts
  parakernel dump-grid <file>        print the header and stats of a grid dump

Configs are INI files with three sections: [experiment] (kind, id, seed,
expect), [coefficients] (family and its parameters), and [params] (experiment
parameters). Values are parsed as JSON fragments, so lists and numbers are
written naturally; bare words stay strings. Exit status is 0 when the verdict
matches the expectation (an expected failure counts as success) or the probe
is outside a theorem's hypothesis, nonzero otherwise.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import ConfigError, build_field, run_experiment
from .mixed_norms import load_grid
from .report import ProbeReport, write_report


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, ValueError):
        return raw


def _section(cfg: configparser.ConfigParser, name: str) -> dict:
    if not cfg.has_section(name):
        return {}
    return {k: _parse_value(v) for k, v in cfg.items(name)}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cfg.read(path)
    exp = _section(cfg, "experiment")
    for key in ("kind", "id", "seed"):
        if key not in exp:
            raise ConfigError(f"[experiment] section of {path} is missing {key!r}")
    expect = exp.get("expect", "pass")
    if expect not in ("pass", "fail"):
        raise ConfigError(f"[experiment] expect must be 'pass' or 'fail', got {expect!r}")
    return {
        "experiment": exp,
        "coefficients": _section(cfg, "coefficients"),
        "params": _section(cfg, "params"),
        "path": str(path),
    }


def run_config(config: dict) -> ProbeReport:
    exp = config["experiment"]
    field = build_field(config["coefficients"])
    echo = {"experiment": exp, "coefficients": config["coefficients"],
            "params": config["params"]}
    return run_experiment(
        kind=exp["kind"], field=field, params=config["params"],
        seed=int(exp["seed"]), experiment_id=str(exp["id"]),
        expected=exp.get("expect", "pass"), config_echo=echo)


def _outdir(args) -> Path:
    if args.outdir:
        return Path(args.outdir)
    env = os.environ.get("PARAKERNEL_OUTDIR")
    return Path(env) if env else Path("reports")


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        report = run_config(config)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    paths = write_report(report, _outdir(args))
    print(f"{report.experiment_id}: {report.status} "
          f"(verdict={report.verdict}, expected={report.expected})")
    print(f"  wrote {paths['csv']} and {paths['json']}")
    return 0 if report.ok else 1


def run_suite(manifest_path, outdir, continue_on_error: bool = True) -> dict:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    entries = manifest.get("experiments")
    if entries is None:
        raise ConfigError("manifest needs an 'experiments' list")
    seen = set()
    runs = []
    base = manifest_path.parent
    for entry in entries:
        cfg_path = (base / entry).resolve() if not Path(entry).is_absolute() else Path(entry)
        config = load_config(cfg_path)
        exp_id = str(config["experiment"]["id"])
        if exp_id in seen:
            raise ConfigError(f"duplicate experiment id {exp_id!r} in manifest")
        seen.add(exp_id)
        try:
            report = run_config(config)
        except Exception as exc:  # surfaced with the offending parameters
            if not continue_on_error:
                raise
            report = ProbeReport(experiment_id=exp_id,
                                 kind=config["experiment"]["kind"],
                                 verdict="error", expected="pass",
                                 config={"error": str(exc)})
        write_report(report, outdir)
        runs.append({"id": report.experiment_id, "kind": report.kind,
                     "verdict": report.verdict, "expected": report.expected,
                     "status": report.status, "ok": report.ok})
        print(f"{report.experiment_id}: {report.status}")
    aggregate = {"schema": "parakernel-suite-v1",
                 "manifest": manifest_path.name,
                 "runs": runs,
                 "all_ok": all(r["ok"] for r in runs)}
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "aggregate.json").write_text(
        json.dumps(aggregate, sort_keys=True, indent=1) + "\n")
    return aggregate


def cmd_suite(args) -> int:
    try:
        aggregate = run_suite(args.manifest, _outdir(args),
                              continue_on_error=not args.fail_fast)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n_ok = sum(1 for r in aggregate["runs"] if r["ok"])
    print(f"suite: {n_ok}/{len(aggregate['runs'])} ok")
    return 0 if aggregate["all_ok"] else 1


def cmd_dump_grid(args) -> int:
    try:
        grid = load_grid(Path(args.file).with_suffix(""))
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"domain:   {grid.domain}")
    print(f"shape:    {grid.values.shape}")
    print(f"spacings: {grid.spacings}")
    print(f"offsets:  {grid.offsets}")
    if grid.bounds is not None:
        print(f"bounds:   {grid.bounds}")
    v = grid.values
    print(f"min/max:  {v.min():.6g} / {v.max():.6g}")
    print(f"mean/l2:  {v.mean():.6g} / {float(np.sqrt(np.mean(v ** 2))):.6g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="parakernel",
        description="Green-function estimate probes for parabolic operators "
                    "with time-measurable coefficients")
    parser.add_argument("--outdir", help="report directory "
                        "(default: $PARAKERNEL_OUTDIR or ./reports)")
    parser.add_argument("--threads", type=int, default=1,
                        help="thread count; 1 is the deterministic reference mode")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(fn=cmd_run)

    p_suite = sub.add_parser("suite", help="run a JSON manifest of configs")
    p_suite.add_argument("manifest")
    p_suite.add_argument("--fail-fast", action="store_true",
                         help="abort on the first error instead of continuing")
    p_suite.set_defaults(fn=cmd_suite)

    p_dump = sub.add_parser("dump-grid", help="inspect a saved grid function")
    p_dump.add_argument("file", help="path to the .json or .bin dump")
    p_dump.set_defaults(fn=cmd_dump_grid)

    args = parser.parse_args(argv)
    if args.threads != 1:
        print(f"note: threads={args.threads} requested; computations run "
              "sequentially (threads=1 is the reference mode)", file=sys.stderr)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
