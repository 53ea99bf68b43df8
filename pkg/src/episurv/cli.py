"""Command-line interface.

Exit codes: 0 success, 1 data or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import cohort as co
from .coxph import Ties, cox_fit, wald_table
from .errors import ModelError
from .logit import logit_fit, odds_table
from .report import FORMATS, CurveSummary, Report, logrank_csv, logrank_json_obj, logrank_markdown, render_report
from .survfit import km_fit, log_rank
from .synth import DEFAULT_SEED, generate_calibrated

SUBCOMMANDS = ("table1", "km", "cox", "logit", "synth", "report")
ANALYSIS = ("table1", "km", "cox", "logit", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    data: str | None
    out: str | None
    format: str
    ties: Ties
    entry_mode: str
    conf: float
    seed: int
    horizon: int
    min_screen_minutes: float
    by: str | None
    only: tuple[str, ...] | None


def _conf(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--conf expects a number in (0, 1), got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"--conf must lie strictly between 0 and 1, got {text!r}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed expects a non-negative integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"--seed must fit in an unsigned 64-bit integer, got {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--horizon expects a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"--horizon must be >= 1, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="episurv", description="Survival analysis of an episode-timed character cohort.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="analysis to run")
    parser.add_argument("--config", help="key = value file supplying defaults for the flags below")
    parser.add_argument("--data", help="cohort CSV file")
    parser.add_argument("--out", help="output file (directory for km); stdout when omitted")
    parser.add_argument("--format", choices=FORMATS, default="markdown")
    parser.add_argument("--ties", choices=[t.value for t in Ties], default="efron")
    parser.add_argument("--entry-mode", choices=("staggered", "origin"), default="staggered")
    parser.add_argument("--conf", type=_conf, default=0.95)
    parser.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    parser.add_argument("--horizon", type=_positive_int, default=co.DEFAULT_HORIZON)
    parser.add_argument("--min-screen-minutes", type=float, default=co.DEFAULT_MIN_SCREEN_MINUTES)
    parser.add_argument("--by", choices=tuple(co.VARIABLES), help="grouping variable for km")
    parser.add_argument("--only", help="comma-separated levels of --by to keep")
    return parser


def _read_config(path) -> list[str]:
    """Turn a ``key = value`` file into flag arguments."""
    args = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    for num, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config {path}:{num}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        args += [f"--{key.replace('_', '-')}", value]
    return args


def parse_args(argv) -> RunConfig:
    argv = list(argv)
    if not argv:
        raise UsageError("missing subcommand")
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        # Config values first so explicit flags override them.
        ns = parser.parse_args([ns.subcommand] + _read_config(ns.config) + argv[1:])
    if ns.subcommand in ANALYSIS:
        if not ns.data:
            raise UsageError(f"{ns.subcommand} requires --data")
        if not os.path.isfile(ns.data):
            raise UsageError(f"--data: no such file {ns.data!r}")
    if ns.subcommand == "km" and not ns.by:
        raise UsageError("km requires --by")
    if ns.only and not ns.by:
        raise UsageError("--only needs --by")
    only = tuple(x.strip() for x in ns.only.split(",") if x.strip()) if ns.only else None
    return RunConfig(
        subcommand=ns.subcommand,
        data=ns.data,
        out=ns.out,
        format=ns.format,
        ties=Ties.parse(ns.ties),
        entry_mode=ns.entry_mode,
        conf=ns.conf,
        seed=ns.seed,
        horizon=ns.horizon,
        min_screen_minutes=ns.min_screen_minutes,
        by=ns.by,
        only=only,
    )


# --- pipeline pieces --------------------------------------------------------


def load(cfg: RunConfig) -> co.Cohort:
    cohort = co.read_cohort(cfg.data, cfg.horizon)
    cohort, _ = co.apply_exclusions(cohort, cfg.min_screen_minutes)
    cohort.require_nonempty()
    return cohort


def entry_times(cohort: co.Cohort, mode: str) -> np.ndarray:
    """Risk-set entry per subject: first appearance, or episode 1 for everyone."""
    return np.ones(len(cohort)) if mode == "origin" else cohort.entries


def km_summary(cohort: co.Cohort, variable: str, only, mode: str, conf: float) -> CurveSummary:
    strata = {k: v for k, v in co.subjects_by_level(cohort, variable, only).items() if len(v)}
    if not strata:
        raise co.CohortError(f"no subjects in the requested levels of {variable}")
    curves = {label: km_fit(entry_times(sub, mode), sub.exits, sub.events, conf) for label, sub in strata.items()}
    test = None
    if len(strata) >= 2 and any(sub.events.any() for sub in strata.values()):
        groups = [(entry_times(sub, mode), sub.exits, sub.events) for sub in strata.values()]
        test = log_rank(groups, labels=list(strata))
    return CurveSummary(variable, curves, test)


def cox_table(cohort: co.Cohort, cfg: RunConfig):
    design = co.encode_design(cohort)
    fit = cox_fit(design, entry_times(cohort, cfg.entry_mode), cohort.exits, cohort.events, cfg.ties)
    table = wald_table(fit, level=cfg.conf)
    return replace(table, title=f"Multivariable Cox model ({cfg.ties.value} ties)")


def logit_table(cohort: co.Cohort, cfg: RunConfig):
    design = co.encode_design(cohort)
    fit = logit_fit(design, cohort.events)
    table = odds_table(fit, level=cfg.conf)
    return replace(table, title="Multivariable logistic model")


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".episurv-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: RunConfig, text: str, stdout):
    if cfg.out:
        _write_atomic(cfg.out, text)
    else:
        stdout.write(text)


def execute(cfg: RunConfig, stdout) -> None:
    if cfg.subcommand == "synth":
        cohort = generate_calibrated(seed=cfg.seed)
        _emit(cfg, co.serialize_cohort(cohort), stdout)
        return

    cohort = load(cfg)
    if cfg.subcommand == "table1":
        median, _ = co.follow_up_summary(cohort)
        report = Report(baseline=co.baseline_table(cohort), causes=co.cause_summary(cohort), median_follow_up=median)
        _emit(cfg, render_report(report, cfg.format), stdout)
    elif cfg.subcommand == "cox":
        _emit(cfg, render_report(Report(models=[cox_table(cohort, cfg)]), cfg.format), stdout)
    elif cfg.subcommand == "logit":
        _emit(cfg, render_report(Report(models=[logit_table(cohort, cfg)]), cfg.format), stdout)
    elif cfg.subcommand == "km":
        summary = km_summary(cohort, cfg.by, cfg.only, cfg.entry_mode, cfg.conf)
        files = {f"km_{cfg.by}_{label}.csv": curve.to_csv() for label, curve in summary.curves.items()}
        if cfg.format == "json":
            text = json.dumps(logrank_json_obj(summary), indent=2) + "\n"
        elif cfg.format == "csv":
            text = logrank_csv(summary)
        else:
            text = logrank_markdown(summary)
        outdir = cfg.out or "."
        os.makedirs(outdir, exist_ok=True)
        for name, body in files.items():
            _write_atomic(os.path.join(outdir, name), body)
        stdout.write(text)
    elif cfg.subcommand == "report":
        median, _ = co.follow_up_summary(cohort)
        report = Report(baseline=co.baseline_table(cohort), causes=co.cause_summary(cohort), median_follow_up=median)
        report.curves.append(km_summary(cohort, "allegiance", None, cfg.entry_mode, cfg.conf))
        for build in (cox_table, logit_table):
            try:
                report.models.append(build(cohort, cfg))
            except ModelError as exc:
                report.notes.append(f"{build.__name__.replace('_table', '')} model not estimable: {exc}")
        _emit(cfg, render_report(report, cfg.format), stdout)


def run(argv=None, stdout=None, stderr=None) -> int:
    """Entry point; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        stderr.write(build_parser().format_usage())
        stderr.write(f"episurv: error: {exc}\n")
        return 2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            execute(cfg, stdout)
            code = 0
        except ModelError as exc:
            stderr.write(f"episurv: model error: {exc}\n")
            code = 1
        except (co.CohortError, ValueError, OSError) as exc:
            stderr.write(f"episurv: data error: {exc}\n")
            code = 1
    for w in caught:
        stderr.write(f"episurv: warning: {w.message}\n")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
