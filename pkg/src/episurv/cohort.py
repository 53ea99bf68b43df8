"""Cohort data model, CSV ingestion, eligibility rules and covariate coding."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

DEFAULT_HORIZON = 67
DEFAULT_MIN_SCREEN_MINUTES = 5.0


class CohortError(ValueError):
    """Malformed or inconsistent cohort data."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class _Token(str, enum.Enum):
    @classmethod
    def parse(cls, token: str):
        key = token.strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        allowed = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown {cls.__name__.lower()} {token.strip()!r} (expected one of {allowed})")

    def __str__(self) -> str:
        return self.value


class Sex(_Token):
    MALE = "male"
    FEMALE = "female"


class Allegiance(_Token):
    STARK = "Stark"
    TARGARYEN = "Targaryen"
    LANNISTER = "Lannister"
    BARATHEON = "Baratheon"
    GREYJOY = "Greyjoy"
    MARTELL = "Martell"
    TYRELL = "Tyrell"
    OTHER = "Other"


class Occupation(_Token):
    HOUSE_MEMBER = "HouseMember"
    KNIGHT_SOLDIER = "KnightSoldier"
    ADVISOR = "Advisor"
    OTHER = "Other"


class Region(_Token):
    NORTH = "North"
    SOUTH = "South"
    ESSOS = "Essos"


class Cause(_Token):
    INVASIVE_INJURY = "invasive_injury"
    BURN = "burn"
    POISON = "poison"
    NATURAL = "natural"
    OTHER = "other"


VARIABLES = {
    "sex": Sex,
    "allegiance": Allegiance,
    "occupation": Occupation,
    "region": Region,
}

# Level order used by the baseline table (mirrors the published layout).
TABLE_ORDER = {
    "sex": (Sex.MALE, Sex.FEMALE),
    "allegiance": tuple(Allegiance),
    "occupation": (Occupation.HOUSE_MEMBER, Occupation.KNIGHT_SOLDIER, Occupation.ADVISOR, Occupation.OTHER),
    "region": tuple(Region),
}

# Dummy-column order used by the design matrix; the reference level is dropped.
DESIGN_ORDER = {
    "sex": (Sex.FEMALE, Sex.MALE),
    "allegiance": (
        Allegiance.STARK,
        Allegiance.BARATHEON,
        Allegiance.GREYJOY,
        Allegiance.LANNISTER,
        Allegiance.MARTELL,
        Allegiance.TARGARYEN,
        Allegiance.TYRELL,
        Allegiance.OTHER,
    ),
    "occupation": (Occupation.HOUSE_MEMBER, Occupation.ADVISOR, Occupation.KNIGHT_SOLDIER, Occupation.OTHER),
    "region": (Region.NORTH, Region.SOUTH, Region.ESSOS),
}

REQUIRED_COLUMNS = (
    "id",
    "name",
    "age_years",
    "sex",
    "allegiance",
    "occupation",
    "region",
    "entry_episode",
    "exit_episode",
    "event",
    "cause",
)
OPTIONAL_COLUMNS = ("screen_minutes", "killed_by_white_walker", "supernatural_non_aging")


@dataclass(frozen=True)
class Subject:
    id: str
    name: str
    age_years: float
    sex: Sex
    allegiance: Allegiance
    occupation: Occupation
    region: Region
    entry_episode: int
    exit_episode: int
    event: bool
    cause: Cause | None = None
    screen_minutes: float | None = None
    killed_by_white_walker: bool = False
    supernatural_non_aging: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.age_years) and self.age_years >= 0):
            raise CohortError(f"subject {self.id}: age_years must be finite and >= 0")
        if self.entry_episode < 1:
            raise CohortError(f"subject {self.id}: entry_episode must be >= 1")
        if self.entry_episode > self.exit_episode:
            raise CohortError(f"subject {self.id}: entry_episode > exit_episode")
        if self.cause is not None and not self.event:
            raise CohortError(f"subject {self.id}: cause given for a subject without an event")
        if self.screen_minutes is not None and not (
            math.isfinite(self.screen_minutes) and self.screen_minutes >= 0
        ):
            raise CohortError(f"subject {self.id}: screen_minutes must be finite and >= 0")

    @property
    def duration(self) -> int:
        """Inclusive number of episodes under observation."""
        return self.exit_episode - self.entry_episode + 1

    def level(self, variable: str):
        return getattr(self, variable)


@dataclass(frozen=True)
class Cohort:
    subjects: tuple[Subject, ...]
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        seen = set()
        for s in self.subjects:
            if s.id in seen:
                raise CohortError(f"duplicate id {s.id!r}")
            seen.add(s.id)
            if s.exit_episode > self.horizon:
                raise CohortError(f"subject {s.id}: exit_episode {s.exit_episode} beyond horizon {self.horizon}")

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)

    @property
    def entries(self) -> np.ndarray:
        return np.array([s.entry_episode for s in self.subjects], dtype=float)

    @property
    def exits(self) -> np.ndarray:
        return np.array([s.exit_episode for s in self.subjects], dtype=float)

    @property
    def events(self) -> np.ndarray:
        return np.array([s.event for s in self.subjects], dtype=bool)

    def where(self, variable: str, levels: Iterable) -> Cohort:
        levels = set(levels)
        return Cohort(tuple(s for s in self.subjects if s.level(variable) in levels), self.horizon)

    def require_nonempty(self):
        if not self.subjects:
            raise CohortError("cohort is empty")


# --- CSV ------------------------------------------------------------------


def _parse_bool(token: str, column: str) -> bool:
    key = token.strip().lower()
    if key in ("1", "true", "yes"):
        return True
    if key in ("0", "false", "no", ""):
        return False
    raise ValueError(f"column {column}: cannot parse {token!r} as a boolean")


def _parse_number(token: str, column: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"column {column}: cannot parse {token!r} as a number") from None
    if not math.isfinite(value):
        raise ValueError(f"column {column}: value {token!r} is not finite")
    return value


def _parse_int(token: str, column: str) -> int:
    value = _parse_number(token, column)
    if value != int(value):
        raise ValueError(f"column {column}: {token!r} is not an integer")
    return int(value)


def _parse_row(row: dict, has_optional: dict) -> Subject:
    event_token = row["event"].strip()
    if event_token not in ("0", "1"):
        raise ValueError(f"column event: expected 0 or 1, got {event_token!r}")
    event = event_token == "1"
    cause_token = row["cause"].strip()
    cause = Cause.parse(cause_token) if cause_token else None
    screen = None
    if has_optional["screen_minutes"] and row["screen_minutes"].strip():
        screen = _parse_number(row["screen_minutes"], "screen_minutes")
    age_token = row["age_years"].strip()
    if not age_token:
        raise ValueError("column age_years: missing value")
    return Subject(
        id=row["id"].strip(),
        name=row["name"].strip(),
        age_years=_parse_number(age_token, "age_years"),
        sex=Sex.parse(row["sex"]),
        allegiance=Allegiance.parse(row["allegiance"]),
        occupation=Occupation.parse(row["occupation"]),
        region=Region.parse(row["region"]),
        entry_episode=_parse_int(row["entry_episode"], "entry_episode"),
        exit_episode=_parse_int(row["exit_episode"], "exit_episode"),
        event=event,
        cause=cause,
        screen_minutes=screen,
        killed_by_white_walker=has_optional["killed_by_white_walker"]
        and _parse_bool(row["killed_by_white_walker"], "killed_by_white_walker"),
        supernatural_non_aging=has_optional["supernatural_non_aging"]
        and _parse_bool(row["supernatural_non_aging"], "supernatural_non_aging"),
    )


def parse_cohort(text: str, horizon: int = DEFAULT_HORIZON) -> Cohort:
    """Parse a cohort CSV document.

    Row numbers in error messages count the header as row 1, so they match
    the line numbers of a spreadsheet view of the file.
    """
    reader = csv.DictReader(io.StringIO(text.lstrip("﻿")))
    header = [h.strip() for h in (reader.fieldnames or [])]
    if not header:
        raise CohortError("missing header row")
    reader.fieldnames = header
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise CohortError(f"missing required column(s): {', '.join(missing)}")
    has_optional = {c: c in header for c in OPTIONAL_COLUMNS}

    subjects = []
    seen: set[str] = set()
    for rownum, row in enumerate(reader, start=2):
        if None in row or any(row[c] is None for c in header):
            raise CohortError("wrong number of fields", rownum)
        try:
            subject = _parse_row(row, has_optional)
        except CohortError as exc:
            raise CohortError(str(exc), rownum) from None
        except ValueError as exc:
            raise CohortError(str(exc), rownum) from None
        if subject.id in seen:
            raise CohortError(f"duplicate id {subject.id!r}", rownum)
        if subject.exit_episode > horizon:
            raise CohortError(f"exit_episode {subject.exit_episode} beyond horizon {horizon}", rownum)
        seen.add(subject.id)
        subjects.append(subject)
    return Cohort(tuple(subjects), horizon)


def read_cohort(path, horizon: int = DEFAULT_HORIZON) -> Cohort:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_cohort(fh.read(), horizon)


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def serialize_cohort(cohort: Cohort) -> str:
    """Render a cohort in the CSV schema understood by :func:`parse_cohort`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
    for s in cohort.subjects:
        writer.writerow(
            [
                s.id,
                s.name,
                _format_number(s.age_years),
                s.sex.value,
                s.allegiance.value,
                s.occupation.value,
                s.region.value,
                s.entry_episode,
                s.exit_episode,
                int(s.event),
                s.cause.value if s.cause else "",
                "" if s.screen_minutes is None else _format_number(s.screen_minutes),
                int(s.killed_by_white_walker),
                int(s.supernatural_non_aging),
            ]
        )
    return buf.getvalue()


# --- eligibility ----------------------------------------------------------


@dataclass(frozen=True)
class Exclusion:
    subject_id: str
    rule: str


def apply_exclusions(
    cohort: Cohort, min_screen_minutes: float = DEFAULT_MIN_SCREEN_MINUTES
) -> tuple[Cohort, list[Exclusion]]:
    """Drop ineligible subjects and report why each one was removed.

    Rules, checked in this order: screen time below ``min_screen_minutes``
    (only when recorded), death caused by a White Walker, and supernatural
    characters that do not age.
    """
    kept, report = [], []
    for s in cohort.subjects:
        if s.screen_minutes is not None and s.screen_minutes < min_screen_minutes:
            report.append(Exclusion(s.id, "screen_time"))
        elif s.killed_by_white_walker:
            report.append(Exclusion(s.id, "white_walker"))
        elif s.supernatural_non_aging:
            report.append(Exclusion(s.id, "supernatural"))
        else:
            kept.append(s)
    return Cohort(tuple(kept), cohort.horizon), report


# --- design matrix --------------------------------------------------------


@dataclass(frozen=True)
class CovariateSpec:
    age_scale: float = 10.0
    reference_levels: dict = field(
        default_factory=lambda: {
            "allegiance": Allegiance.STARK,
            "occupation": Occupation.HOUSE_MEMBER,
            "region": Region.NORTH,
            "sex": Sex.FEMALE,
        }
    )

    def __post_init__(self):
        if not (math.isfinite(self.age_scale) and self.age_scale > 0):
            raise ValueError("age_scale must be positive")
        refs = dict(self.reference_levels)
        for variable, level in list(refs.items()):
            if variable not in VARIABLES:
                raise ValueError(f"unknown variable {variable!r}")
            enum_cls = VARIABLES[variable]
            if not isinstance(level, enum_cls):
                try:
                    refs[variable] = enum_cls.parse(str(level))
                except ValueError:
                    raise ValueError(f"{level!r} is not a level of {variable}") from None
        defaults = CovariateSpec.__dataclass_fields__["reference_levels"].default_factory()
        object.__setattr__(self, "reference_levels", {**defaults, **refs})

    def with_reference(self, variable: str, level) -> CovariateSpec:
        return replace(self, reference_levels={**self.reference_levels, variable: level})


def _dummy_label(variable: str, level) -> str:
    if level.value == "Other":
        return "OtherAllegiance" if variable == "allegiance" else "OtherOccupation"
    return level.value


@dataclass(frozen=True)
class DesignMatrix:
    column_names: tuple[str, ...]
    rows: np.ndarray
    row_ids: tuple[str, ...]

    @property
    def shape(self):
        return self.rows.shape

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_names.index(name)]


def design_columns(spec: CovariateSpec) -> tuple[list[str], list[tuple[str, object]]]:
    """Column labels and the (variable, level) each dummy column encodes."""
    names = ["age_dec"]
    dummies: list[tuple[str, object]] = []
    for variable in ("sex", "allegiance", "occupation", "region"):
        ref = spec.reference_levels[variable]
        for level in DESIGN_ORDER[variable]:
            if level != ref:
                dummies.append((variable, level))
                names.append(_dummy_label(variable, level))
    return names, dummies


def encode_design(cohort: Cohort, spec: CovariateSpec | None = None) -> DesignMatrix:
    """Dummy-code a cohort into the 14-column model matrix.

    Columns are age in decades, then one indicator per non-reference level
    of sex, allegiance, occupation and region.
    """
    spec = spec or CovariateSpec()
    cohort.require_nonempty()
    names, dummies = design_columns(spec)
    rows = np.zeros((len(cohort), len(names)))
    for i, s in enumerate(cohort.subjects):
        rows[i, 0] = s.age_years / spec.age_scale
        for j, (variable, level) in enumerate(dummies, start=1):
            rows[i, j] = 1.0 if s.level(variable) == level else 0.0
    return DesignMatrix(tuple(names), rows, tuple(s.id for s in cohort.subjects))


# --- summaries ------------------------------------------------------------


def _pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 1) if total else 0.0


@dataclass(frozen=True)
class Stratum:
    variable: str
    level: str
    population_count: int
    population_pct: float
    death_count: int
    death_pct: float


@dataclass(frozen=True)
class BaselineTable:
    strata: tuple[Stratum, ...]
    n: int
    deaths: int
    death_pct: float
    age_mean: float
    age_sd: float

    @property
    def totals(self):
        return (self.n, self.deaths, self.death_pct)

    def get(self, variable: str, level: str) -> Stratum:
        for st in self.strata:
            if st.variable == variable and st.level.lower() == str(level).lower():
                return st
        raise KeyError((variable, level))


def baseline_table(cohort: Cohort) -> BaselineTable:
    """Counts and death rates per level of each baseline characteristic.

    Population percentages are of the whole cohort; death percentages are
    within each stratum. Both are rounded to one decimal place.
    """
    cohort.require_nonempty()
    n = len(cohort)
    strata = []
    for variable, levels in TABLE_ORDER.items():
        for level in levels:
            members = [s for s in cohort.subjects if s.level(variable) == level]
            deaths = sum(s.event for s in members)
            strata.append(
                Stratum(variable, level.value, len(members), _pct(len(members), n), deaths, _pct(deaths, len(members)))
            )
    ages = np.array([s.age_years for s in cohort.subjects])
    deaths = int(sum(s.event for s in cohort.subjects))
    sd = float(ages.std(ddof=1)) if n > 1 else 0.0
    return BaselineTable(tuple(strata), n, deaths, _pct(deaths, n), float(ages.mean()), sd)


def follow_up_summary(cohort: Cohort) -> tuple[float, list[int]]:
    """Median follow-up and the inclusive episode count for each subject."""
    cohort.require_nonempty()
    durations = [s.duration for s in cohort.subjects]
    ordered = sorted(durations)
    n = len(ordered)
    mid = n // 2
    median = float(ordered[mid]) if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2.0
    return median, durations


@dataclass(frozen=True)
class CauseRow:
    cause: str
    count: int
    pct_of_deaths: float
    pct_of_cohort: float


def cause_summary(cohort: Cohort) -> list[CauseRow]:
    """Cause-of-death counts against both the death count and the cohort size.

    Deaths without a recorded cause are counted under ``other``.
    """
    cohort.require_nonempty()
    n = len(cohort)
    dead = [s for s in cohort.subjects if s.event]
    rows = []
    for cause in Cause:
        count = sum(1 for s in dead if (s.cause or Cause.OTHER) == cause)
        rows.append(CauseRow(cause.value, count, _pct(count, len(dead)), _pct(count, n)))
    return rows


def subjects_by_level(cohort: Cohort, variable: str, levels: Sequence | None = None) -> dict[str, Cohort]:
    """Split a cohort into one sub-cohort per level of ``variable``."""
    if variable not in VARIABLES:
        raise CohortError(f"unknown variable {variable!r}; choose from {', '.join(VARIABLES)}")
    enum_cls = VARIABLES[variable]
    if levels is None:
        chosen = list(TABLE_ORDER[variable])
    else:
        try:
            chosen = [enum_cls.parse(str(lv)) for lv in levels]
        except ValueError as exc:
            raise CohortError(str(exc)) from None
    return {level.value: cohort.where(variable, [level]) for level in chosen}
