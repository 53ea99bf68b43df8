"""Wald inference tables shared by the Cox and logistic models."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .errors import NotConvergedError
from .statfn import critical_value, two_sided_p


@dataclass(frozen=True)
class TableRow:
    term: str
    coef: float
    se: float
    ratio: float
    ci_lower: float
    ci_upper: float
    z: float
    p: float


@dataclass(frozen=True)
class ModelTable:
    rows: tuple[TableRow, ...]
    level: float
    ratio_label: str = "hr"
    title: str = ""

    @property
    def terms(self) -> tuple[str, ...]:
        return tuple(r.term for r in self.rows)

    def row(self, term: str) -> TableRow:
        for r in self.rows:
            if r.term == term:
                return r
        raise KeyError(term)

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows:
            out.append(
                {
                    "term": r.term,
                    "coef": r.coef,
                    self.ratio_label: r.ratio,
                    "ci_lower": r.ci_lower,
                    "ci_upper": r.ci_upper,
                    "z": r.z,
                    "p": r.p,
                }
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "coef", self.ratio_label, "ci_lower", "ci_upper", "z", "p"])
        for rec in self.to_records():
            w.writerow([rec["term"]] + [repr(float(v)) for k, v in rec.items() if k != "term"])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        return {"title": self.title, "level": self.level, "ratio": self.ratio_label, "rows": self.to_records()}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)

    def to_markdown(self) -> str:
        pct = f"{100 * self.level:g}%"
        label = {"hr": "Hazard Ratio", "or": "Odds Ratio"}.get(self.ratio_label, self.ratio_label)
        lines = []
        if self.title:
            lines += [f"### {self.title}", ""]
        lines.append(f"| Term | Coefficient | {label} ({pct} CI) | P value |")
        lines.append("|---|---:|---:|---:|")
        for r in self.rows:
            lines.append(
                f"| {r.term} | {r.coef:.2f} | {r.ratio:.2f} ({r.ci_lower:.2f}-{r.ci_upper:.2f}) | {format_p(r.p)} |"
            )
        return "\n".join(lines) + "\n"


def format_p(p: float) -> str:
    if math.isnan(p):
        return "NA"
    if p < 0.0001:
        return "<0.0001"
    if p < 0.01:
        return f"{p:.2g}"
    return f"{p:.2f}"


def ratio_table(coefs, ses, terms, level: float, converged: bool, ratio_label: str = "hr", title: str = "") -> ModelTable:
    """Exponentiated coefficients with Wald limits ``exp(coef +- z* se)``."""
    if not converged:
        raise NotConvergedError("inference requested from a fit that did not converge")
    terms = tuple(terms)
    if not (len(terms) == len(coefs) == len(ses)):
        raise ValueError(f"{len(terms)} terms for {len(coefs)} coefficients")
    zstar = critical_value(level)
    rows = []
    for term, b, se in zip(terms, coefs, ses):
        b, se = float(b), float(se)
        if se == 0.0:
            z = 0.0 if b == 0.0 else math.copysign(math.inf, b)
        else:
            z = b / se
        p = 1.0 if z == 0.0 else 0.0 if math.isinf(z) else two_sided_p(z)
        rows.append(
            TableRow(
                term=term,
                coef=b,
                se=se,
                ratio=math.exp(b),
                ci_lower=math.exp(b - zstar * se),
                ci_upper=math.exp(b + zstar * se),
                z=z,
                p=p,
            )
        )
    return ModelTable(tuple(rows), level, ratio_label, title)
