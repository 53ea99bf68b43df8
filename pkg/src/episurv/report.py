"""Rendering of baseline, model and curve summaries as markdown, CSV or JSON."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .cohort import BaselineTable, CauseRow
from .survfit import KmCurve, LogRankResult
from .tables import ModelTable

FORMATS = ("markdown", "csv", "json")

_LEVEL_LABELS = {
    "male": "Male",
    "female": "Female",
    "HouseMember": "Member of a House or Royalty",
    "KnightSoldier": "Knight or Soldier",
}
_SECTION_LABELS = {"allegiance": "Allegiance", "occupation": "Occupation", "region": "Geographic Location"}


def _level_label(variable: str, level: str) -> str:
    if level == "Other":
        return "Other Allegiance/Commoners" if variable == "allegiance" else "Other Occupation"
    return _LEVEL_LABELS.get(level, level)


@dataclass(frozen=True)
class CurveSummary:
    """Per-stratum KM curves for one grouping variable plus their log-rank test."""

    variable: str
    curves: dict
    test: LogRankResult | None = None


@dataclass
class Report:
    baseline: BaselineTable | None = None
    causes: list[CauseRow] | None = None
    median_follow_up: float | None = None
    models: list[ModelTable] = field(default_factory=list)
    curves: list[CurveSummary] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return self.baseline is None and not self.models and not self.curves


def baseline_markdown(bt: BaselineTable, causes=None, median=None) -> str:
    lines = [
        "### Baseline characteristics",
        "",
        f"| Characteristic | Study Population (n={bt.n}) | Deaths [n(%)] |",
        "|---|---:|---:|",
        f"| Age, years [mean(SD)] | {bt.age_mean:.1f} ({bt.age_sd:.1f}) | |",
    ]
    current = None
    for st in bt.strata:
        if st.variable != current and st.variable in _SECTION_LABELS:
            lines.append(f"| **{_SECTION_LABELS[st.variable]}** | | |")
        current = st.variable
        lines.append(
            f"| {_level_label(st.variable, st.level)} | {st.population_count} ({st.population_pct:.1f}) "
            f"| {st.death_count} ({st.death_pct:.1f}) |"
        )
    lines.append(f"| Total | | {bt.deaths} ({bt.death_pct:.1f}) |")
    if median is not None:
        lines += ["", f"Median follow-up: {median:g} episodes"]
    if causes:
        lines += [
            "",
            "| Cause of death | n | % of deaths | % of cohort |",
            "|---|---:|---:|---:|",
        ]
        lines += [f"| {c.cause} | {c.count} | {c.pct_of_deaths:.1f} | {c.pct_of_cohort:.1f} |" for c in causes]
    return "\n".join(lines) + "\n"


def baseline_records(bt: BaselineTable) -> list[dict]:
    return [
        {
            "variable": st.variable,
            "level": st.level,
            "n": st.population_count,
            "pct": st.population_pct,
            "deaths": st.death_count,
            "death_pct": st.death_pct,
        }
        for st in bt.strata
    ]


def baseline_json_obj(bt: BaselineTable, causes=None, median=None) -> dict:
    obj = {
        "n": bt.n,
        "deaths": bt.deaths,
        "death_pct": bt.death_pct,
        "age_mean": bt.age_mean,
        "age_sd": bt.age_sd,
        "strata": baseline_records(bt),
    }
    if median is not None:
        obj["median_follow_up"] = median
    if causes is not None:
        obj["causes"] = [
            {"cause": c.cause, "n": c.count, "pct_of_deaths": c.pct_of_deaths, "pct_of_cohort": c.pct_of_cohort}
            for c in causes
        ]
    return obj


def baseline_csv(bt: BaselineTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "level", "n", "pct", "deaths", "death_pct"])
    for rec in baseline_records(bt):
        w.writerow(rec.values())
    w.writerow(["total", "", bt.n, 100.0, bt.deaths, bt.death_pct])
    return buf.getvalue()


def logrank_json_obj(summary: CurveSummary) -> dict:
    obj = {"variable": summary.variable, "strata": {}}
    for label, curve in summary.curves.items():
        obj["strata"][label] = {"events": int(curve.n_event.sum()), "final_survival": _final(curve)}
    if summary.test is not None:
        t = summary.test
        obj["log_rank"] = {
            "chi_square": t.chi_square,
            "df": t.degrees_of_freedom,
            "p": t.p_value,
            "observed": dict(zip(t.labels, t.observed.tolist())),
            "expected": dict(zip(t.labels, t.expected.tolist())),
        }
    return obj


def _final(curve: KmCurve) -> float:
    return float(curve.survival[-1]) if len(curve) else 1.0


def logrank_markdown(summary: CurveSummary) -> str:
    lines = [
        f"### Kaplan-Meier survival by {summary.variable}",
        "",
        "| Stratum | Events | Final survival | Observed | Expected |",
        "|---|---:|---:|---:|---:|",
    ]
    t = summary.test
    for i, (label, curve) in enumerate(summary.curves.items()):
        obs = f"{t.observed[i]:.0f}" if t else ""
        exp = f"{t.expected[i]:.2f}" if t else ""
        lines.append(f"| {label} | {int(curve.n_event.sum())} | {_final(curve):.3f} | {obs} | {exp} |")
    if t is not None:
        lines += ["", f"Log-rank chi-square = {t.chi_square:.3f} on {t.degrees_of_freedom} df, p = {t.p_value:.4g}"]
    return "\n".join(lines) + "\n"


def logrank_csv(summary: CurveSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stratum", "events", "final_survival", "observed", "expected"])
    t = summary.test
    for i, (label, curve) in enumerate(summary.curves.items()):
        w.writerow(
            [
                label,
                int(curve.n_event.sum()),
                repr(_final(curve)),
                repr(float(t.observed[i])) if t else "",
                repr(float(t.expected[i])) if t else "",
            ]
        )
    if t is not None:
        w.writerow(["chi_square", repr(t.chi_square), "df", t.degrees_of_freedom, ""])
        w.writerow(["p", repr(t.p_value), "", "", ""])
    return buf.getvalue()


def render_report(report: Report, fmt: str = "markdown") -> str:
    """Render every populated section of ``report`` in one document."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r} (expected one of {', '.join(FORMATS)})")
    if report.is_empty():
        raise ValueError("nothing to render: the report has no tables")

    if fmt == "json":
        obj = {}
        if report.baseline is not None:
            obj["baseline"] = baseline_json_obj(report.baseline, report.causes, report.median_follow_up)
        if report.curves:
            obj["survival"] = [logrank_json_obj(c) for c in report.curves]
        if report.models:
            obj["models"] = [m.to_json_obj() for m in report.models]
        if report.notes:
            obj["notes"] = list(report.notes)
        return json.dumps(obj, indent=2) + "\n"

    parts = []
    if fmt == "markdown":
        if report.baseline is not None:
            parts.append(baseline_markdown(report.baseline, report.causes, report.median_follow_up))
        parts += [logrank_markdown(c) for c in report.curves]
        parts += [m.to_markdown() for m in report.models]
        parts += [f"> {note}\n" for note in report.notes]
        return "\n".join(parts)

    if report.baseline is not None:
        parts.append("# baseline\n" + baseline_csv(report.baseline))
    parts += [f"# survival by {c.variable}\n" + logrank_csv(c) for c in report.curves]
    parts += [f"# {m.title or 'model'}\n" + m.to_csv() for m in report.models]
    parts += [f"# note: {note}\n" for note in report.notes]
    return "\n".join(parts)
