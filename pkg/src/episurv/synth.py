"""Deterministic data generators and brute-force grid oracles.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``, whose
bit stream is fixed across platforms and numpy releases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import (
    DEFAULT_HORIZON,
    TABLE_ORDER,
    Allegiance,
    Cause,
    Cohort,
    Occupation,
    Region,
    Sex,
    Subject,
)

DEFAULT_SEED = 67


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class CalibrationTargets:
    """Marginal counts a generated cohort must reproduce.

    ``population`` and ``deaths`` map variable -> {level: count}. Defaults are
    the published baseline characteristics of the 132-character cohort.
    """

    population: dict = field(
        default_factory=lambda: {
            "sex": {Sex.MALE: 100, Sex.FEMALE: 32},
            "allegiance": {
                Allegiance.STARK: 26,
                Allegiance.TARGARYEN: 14,
                Allegiance.LANNISTER: 19,
                Allegiance.BARATHEON: 13,
                Allegiance.GREYJOY: 5,
                Allegiance.MARTELL: 6,
                Allegiance.TYRELL: 4,
                Allegiance.OTHER: 45,
            },
            "occupation": {
                Occupation.HOUSE_MEMBER: 42,
                Occupation.KNIGHT_SOLDIER: 46,
                Occupation.ADVISOR: 13,
                Occupation.OTHER: 31,
            },
            "region": {Region.NORTH: 59, Region.SOUTH: 49, Region.ESSOS: 24},
        }
    )
    deaths: dict = field(
        default_factory=lambda: {
            "sex": {Sex.MALE: 68, Sex.FEMALE: 21},
            "allegiance": {
                Allegiance.STARK: 13,
                Allegiance.TARGARYEN: 9,
                Allegiance.LANNISTER: 11,
                Allegiance.BARATHEON: 10,
                Allegiance.GREYJOY: 2,
                Allegiance.MARTELL: 5,
                Allegiance.TYRELL: 4,
                Allegiance.OTHER: 35,
            },
            "occupation": {
                Occupation.HOUSE_MEMBER: 29,
                Occupation.KNIGHT_SOLDIER: 33,
                Occupation.ADVISOR: 7,
                Occupation.OTHER: 20,
            },
            "region": {Region.NORTH: 42, Region.SOUTH: 31, Region.ESSOS: 16},
        }
    )
    n: int = 132
    total_deaths: int = 89
    horizon: int = DEFAULT_HORIZON
    median_follow_up: float = 32.0
    age_mean: float = 35.1
    age_sd: float = 18.3
    causes: dict = field(
        default_factory=lambda: {Cause.INVASIVE_INJURY: 59, Cause.BURN: 12, Cause.POISON: 4, Cause.NATURAL: 1}
    )

    def validate(self):
        if self.n < 1 or not 0 <= self.total_deaths <= self.n:
            raise ValueError("need n >= 1 and 0 <= total_deaths <= n")
        if not 1 <= self.median_follow_up <= self.horizon:
            raise ValueError("median follow-up must lie within the horizon")
        for variable in TABLE_ORDER:
            pop = self.population.get(variable)
            if pop is None or sum(pop.values()) != self.n:
                raise ValueError(f"{variable} population counts must sum to n={self.n}")
            deaths = self.deaths.get(variable)
            if deaths is None:
                continue
            if sum(deaths.values()) != self.total_deaths:
                raise ValueError(f"{variable} death counts must sum to {self.total_deaths}")
            for level, d in deaths.items():
                if not 0 <= d <= pop.get(level, 0):
                    raise ValueError(f"{variable}={level}: {d} deaths exceed {pop.get(level, 0)} subjects")
        if sum(self.causes.values()) > self.total_deaths:
            raise ValueError("cause counts exceed total deaths")


def _levels(counts: dict, order) -> list:
    return [level for level in order for _ in range(counts.get(level, 0))]


def generate_calibrated(targets: CalibrationTargets | None = None, seed: int = DEFAULT_SEED) -> Cohort:
    """Build a fictional cohort that reproduces the target marginals.

    Death status is fixed first; every variable is then assigned by
    shuffling its death-stratum levels among the dead and the remaining
    levels among the survivors, so both population and death marginals
    come out exact. Variables without death targets are shuffled over the
    whole cohort. Follow-up lengths are stratified draws around the target
    median, placed at random within the horizon.
    """
    targets = targets or CalibrationTargets()
    targets.validate()
    rng = _rng(seed)
    n, horizon = targets.n, targets.horizon
    dead = np.zeros(n, dtype=bool)
    dead[: targets.total_deaths] = True
    rng.shuffle(dead)
    dead_idx = np.flatnonzero(dead)
    alive_idx = np.flatnonzero(~dead)

    assigned = {}
    for variable, order in TABLE_ORDER.items():
        pop = targets.population[variable]
        deaths = targets.deaths.get(variable)
        column = np.empty(n, dtype=object)
        if deaths is None:
            levels = _levels(pop, order)
            rng.shuffle(levels)
            column[:] = levels
        else:
            dead_levels = _levels(deaths, order)
            alive_levels = _levels({lv: pop[lv] - deaths.get(lv, 0) for lv in pop}, order)
            rng.shuffle(dead_levels)
            rng.shuffle(alive_levels)
            column[dead_idx] = dead_levels
            column[alive_idx] = alive_levels
        assigned[variable] = column

    shape = (targets.age_mean / targets.age_sd) ** 2
    scale = targets.age_sd**2 / targets.age_mean
    ages = np.maximum(1.0, np.round(rng.gamma(shape, scale, size=n)))

    # Stratified uniform draws on [1, 2m - 1] put the sample median within an
    # episode or so of m.
    top = min(horizon, int(round(2 * targets.median_follow_up - 1)))
    strata = (np.arange(n) + rng.random(n)) / n
    durations = np.clip(1 + np.floor(strata * top).astype(int), 1, horizon)
    rng.shuffle(durations)
    entries = np.empty(n, dtype=int)
    exits = np.empty(n, dtype=int)
    for i in range(n):
        d = int(durations[i])
        if dead[i]:
            entries[i] = int(rng.integers(1, horizon - d + 2))
            exits[i] = entries[i] + d - 1
        else:
            exits[i] = horizon
            entries[i] = horizon - d + 1

    causes = _levels(targets.causes, list(Cause))
    causes += [Cause.OTHER] * (targets.total_deaths - len(causes))
    rng.shuffle(causes)
    cause_of = dict(zip(dead_idx.tolist(), causes))

    subjects = []
    for i in range(n):
        subjects.append(
            Subject(
                id=f"C{i + 1:03d}",
                name=f"Character {i + 1:03d}",
                age_years=float(ages[i]),
                sex=assigned["sex"][i],
                allegiance=assigned["allegiance"][i],
                occupation=assigned["occupation"][i],
                region=assigned["region"][i],
                entry_episode=int(entries[i]),
                exit_episode=int(exits[i]),
                event=bool(dead[i]),
                cause=cause_of.get(i),
            )
        )
    return Cohort(tuple(subjects), horizon)


def calibration_report(cohort: Cohort, targets: CalibrationTargets | None = None) -> dict:
    """Observed-minus-target differences for every population and death count."""
    targets = targets or CalibrationTargets()
    report = {"n": len(cohort) - targets.n, "deaths": int(cohort.events.sum()) - targets.total_deaths}
    for variable, order in TABLE_ORDER.items():
        for level in order:
            members = [s for s in cohort.subjects if s.level(variable) == level]
            report[f"{variable}={level.value}"] = len(members) - targets.population[variable].get(level, 0)
            if variable in targets.deaths:
                observed = sum(s.event for s in members)
                report[f"{variable}={level.value}:deaths"] = observed - targets.deaths[variable].get(level, 0)
    return report


# --- proportional-hazards simulator ----------------------------------------


@dataclass(frozen=True)
class PhScenario:
    n: int
    true_coefficients: tuple
    baseline_hazard: float = 0.05
    covariates: str = "binary"
    horizon: int = DEFAULT_HORIZON
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.baseline_hazard > 0:
            raise ValueError("baseline_hazard must be positive")
        if self.covariates not in ("binary", "uniform"):
            raise ValueError("covariates must be 'binary' or 'uniform'")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


@dataclass(frozen=True)
class PhData:
    X: np.ndarray
    entries: np.ndarray
    exits: np.ndarray
    events: np.ndarray
    true_coefficients: np.ndarray


def generate_ph(scenario: PhScenario) -> PhData:
    """Simulate discrete episode survival under proportional hazards.

    Each subject dies in a given episode with probability
    ``1 - exp(-h0 * exp(x @ beta))``; survivors are censored at the horizon.
    """
    rng = _rng(scenario.seed)
    beta = np.atleast_1d(np.asarray(scenario.true_coefficients, dtype=float))
    n, p = scenario.n, beta.size
    if scenario.covariates == "binary":
        X = np.column_stack([rng.permutation(np.arange(n) % 2) for _ in range(p)]).astype(float)
    else:
        X = rng.random((n, p))
    with np.errstate(over="ignore"):
        rate = scenario.baseline_hazard * np.exp(X @ beta)
    q = -np.expm1(-rate)
    if not np.all(np.isfinite(rate)) or np.any(q >= 1.0):
        raise ValueError("hazard too large: a per-episode death probability reaches 1")
    u = rng.random(n)
    # Geometric waiting time: first episode k with u > (1 - q)^k.
    with np.errstate(divide="ignore"):
        death = np.ceil(np.log1p(-u) / -rate)
    death = np.maximum(death, 1)
    events = death <= scenario.horizon
    if not events.any():
        raise ValueError("scenario produced zero events")
    exits = np.where(events, death, scenario.horizon)
    return PhData(X, np.ones(n), exits.astype(float), events, beta)


# --- grid oracles ---------------------------------------------------------


def cox_objective(betas, X, entries, exits, events, ties="efron") -> np.ndarray:
    """Partial log-likelihood at many coefficient vectors at once.

    ``betas`` has shape ``(m, p)``. The sum is written out subject by
    subject so it shares no code with the fitter.
    """
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    X = np.asarray(X, dtype=float).reshape(len(exits), -1)
    entries = np.asarray(entries, dtype=float)
    exits = np.asarray(exits, dtype=float)
    events = np.asarray(events, dtype=bool)
    eta = X @ betas.T  # (n, m)
    total = np.zeros(betas.shape[0])
    for t in sorted(set(exits[events].tolist())):
        at_risk = [i for i in range(len(exits)) if entries[i] <= t <= exits[i]]
        died = [i for i in range(len(exits)) if exits[i] == t and events[i]]
        d = len(died)
        risk_sum = sum(np.exp(eta[i]) for i in at_risk)
        tie_sum = sum(np.exp(eta[i]) for i in died)
        for i in died:
            total += eta[i]
        for l in range(d):
            frac = l / d if str(ties).lower() == "efron" else 0.0
            total -= np.log(risk_sum - frac * tie_sum)
    return total


def logit_objective(betas, X, y) -> np.ndarray:
    """Bernoulli log-likelihood at many (intercept, slopes...) vectors."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    y = np.asarray(y, dtype=float)
    eta = betas[:, :1].T + X @ betas[:, 1:].T  # (n, m)
    return np.sum(y[:, None] * eta - np.logaddexp(0.0, eta), axis=0)


_GRID_BUDGET = 250_000


def _grid_argmax(objective, bounds, step):
    """Grid maximizer of a concave objective in one or two dimensions.

    A single exhaustive pass when the full grid fits the evaluation budget;
    otherwise an exhaustive coarse pass followed by exhaustive passes on
    successively finer grids around the incumbent, ending at ``step``.
    """
    dim = len(bounds)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    per_axis = int(_GRID_BUDGET ** (1.0 / dim))
    h = max(step, float(np.max(hi - lo)) / (per_axis - 1))
    # Snap the coarse spacing to a power-of-ten multiple of step so that
    # every level lies on the final lattice.
    h = step * 10 ** math.ceil(math.log10(h / step) - 1e-12)
    a, b = lo, hi
    best = None
    while True:
        axes = [np.arange(math.ceil((a[k] - lo[k]) / h - 1e-9), math.floor((b[k] - lo[k]) / h + 1e-9) + 1) * h + lo[k]
                for k in range(dim)]
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        values = objective(mesh)
        finite = np.isfinite(values)
        if not finite.any():
            raise ValueError("objective is non-finite over the whole grid")
        values = np.where(finite, values, -np.inf)
        best = mesh[int(np.argmax(values))]
        if h <= step * (1 + 1e-9):
            return best
        a = np.maximum(lo, best - 2 * h)
        b = np.minimum(hi, best + 2 * h)
        h /= 10.0


def oracle_grid_fit(model: str, data: dict, bounds=(-5.0, 5.0), step: float = 1e-4) -> np.ndarray:
    """Maximize the exact likelihood over a grid, with no derivatives.

    ``data`` holds ``X, entries, exits, events`` (and optionally ``ties``)
    for ``model="cox"``, or ``X, y`` for ``model="logit"``, whose free
    coefficients are the intercept and one slope.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if model == "cox":
        X = np.asarray(data["X"], dtype=float).reshape(len(data["exits"]), -1)
        p = X.shape[1]

        def objective(b):
            return cox_objective(b, X, data["entries"], data["exits"], data["events"], data.get("ties", "efron"))

    elif model == "logit":
        X = np.asarray(data["X"], dtype=float).reshape(len(data["y"]), -1)
        p = X.shape[1] + 1

        def objective(b):
            return logit_objective(b, X, data["y"])

    else:
        raise ValueError(f"unknown model {model!r}")
    if p > 2:
        raise ValueError(f"grid oracle supports at most 2 free coefficients, got {p}")
    if np.ndim(bounds) == 1:
        bounds = [tuple(bounds)] * p
    if any(not (math.isfinite(lo) and math.isfinite(hi) and lo < hi) for lo, hi in bounds):
        raise ValueError("bounds must be finite with lo < hi")
    return _grid_argmax(objective, bounds, step)
