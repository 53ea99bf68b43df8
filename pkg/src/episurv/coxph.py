"""Cox proportional-hazards regression on discrete episode time.

The partial likelihood is maximized by Newton-Raphson with step halving.
Risk sets follow the counting-process convention used throughout the
package: a subject is at risk at ``t`` when ``entry <= t <= exit``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, NonIdentifiableError
from .optim import newton_ascent
from .statfn import NotPositiveDefiniteError, inverse_spd
from .tables import ModelTable, ratio_table


class Ties(str, enum.Enum):
    EFRON = "efron"
    BRESLOW = "breslow"

    @classmethod
    def parse(cls, value) -> Ties:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown ties method {value!r} (expected efron or breslow)") from None


class SparseColumnWarning(UserWarning):
    """A covariate column carries very few events."""


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 50
    tol_loglik: float = 1e-9
    tol_grad: float = 1e-6
    max_halvings: int = 20
    divergence_bound: float = 15.0
    min_column_events: int = 5


@dataclass(frozen=True)
class CoxFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    log_likelihood_trace: tuple[float, ...]
    converged: bool
    iterations: int
    ties: Ties
    column_names: tuple[str, ...]
    gradient_norm: float
    n: int = 0
    n_events: int = 0

    @property
    def log_likelihood(self) -> float:
        return self.log_likelihood_trace[-1]

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def design_arrays(design):
    rows = getattr(design, "rows", design)
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = getattr(design, "column_names", None) or tuple(f"x{j}" for j in range(X.shape[1]))
    return X, tuple(names)


@dataclass
class _RiskSets:
    """Index sets for every distinct event time, computed once per dataset."""

    X: np.ndarray
    risk: list = field(default_factory=list)
    dead: list = field(default_factory=list)

    @classmethod
    def build(cls, X, entries, exits, events):
        entries = np.asarray(entries, dtype=float)
        exits = np.asarray(exits, dtype=float)
        events = np.asarray(events, dtype=bool)
        n = X.shape[0]
        if not (entries.shape == exits.shape == events.shape == (n,)):
            raise ValueError(
                f"dimension mismatch: design has {n} rows, got {entries.shape}, {exits.shape}, {events.shape}"
            )
        if np.any(exits < entries):
            raise ValueError("exit precedes entry for at least one subject")
        sets = cls(X)
        for t in np.unique(exits[events]):
            risk = np.flatnonzero((entries <= t) & (exits >= t))
            if risk.size == 0:
                raise ValueError(f"empty risk set at event time {t}")
            sets.risk.append(risk)
            sets.dead.append(np.flatnonzero((exits == t) & events))
        return sets


def _evaluate(beta, sets: _RiskSets, ties: Ties, order: int):
    """Partial log-likelihood and, up to ``order``, its gradient and Hessian."""
    X = sets.X
    p = X.shape[1]
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p,):
        raise ValueError(f"beta has shape {beta.shape}, design has {p} columns")
    eta = X @ beta
    shift = float(eta.max()) if eta.size else 0.0
    w = np.exp(eta - shift)
    efron = ties is Ties.EFRON

    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for risk, dead in zip(sets.risk, sets.dead):
        d = dead.size
        wr, wd = w[risk], w[dead]
        xr, xd = X[risk], X[dead]
        s_r, s_d = wr.sum(), wd.sum()
        loglik += eta[dead].sum()
        if order >= 1:
            a_r, a_d = xr.T @ wr, xd.T @ wd
            grad += xd.sum(axis=0)
        if order >= 2:
            b_r = (xr * wr[:, None]).T @ xr
            b_d = (xd * wd[:, None]).T @ xd
        frac = np.arange(d) / d if efron else np.zeros(d)
        den = s_r - frac * s_d
        loglik -= d * shift + np.log(den).sum()
        if order >= 1:
            means = (a_r[None, :] - frac[:, None] * a_d[None, :]) / den[:, None]
            grad -= means.sum(axis=0)
        if order >= 2:
            inv = 1.0 / den
            hess -= b_r * inv.sum() - b_d * (frac * inv).sum() - means.T @ means
    if order >= 2:
        hess = 0.5 * (hess + hess.T)
    return loglik, grad, hess


def partial_loglik(beta, design, entries, exits, events, ties=Ties.EFRON) -> float:
    """Cox partial log-likelihood at ``beta`` (Breslow or Efron ties)."""
    X, _ = design_arrays(design)
    return _evaluate(beta, _RiskSets.build(X, entries, exits, events), Ties.parse(ties), 0)[0]


def score_gradient(beta, design, entries, exits, events, ties=Ties.EFRON) -> np.ndarray:
    """Analytic gradient of :func:`partial_loglik` with respect to ``beta``."""
    X, _ = design_arrays(design)
    return _evaluate(beta, _RiskSets.build(X, entries, exits, events), Ties.parse(ties), 1)[1]


def observed_information(beta, design, entries, exits, events, ties=Ties.EFRON) -> np.ndarray:
    X, _ = design_arrays(design)
    return -_evaluate(beta, _RiskSets.build(X, entries, exits, events), Ties.parse(ties), 2)[2]


def _check_columns(X, names, events, options):
    for j, name in enumerate(names):
        if np.ptp(X[:, j]) == 0.0:
            raise ValueError(f"column {name!r} is constant and cannot be estimated")
    n_events = int(events.sum())
    if X.shape[1] >= n_events:
        warnings.warn(
            f"{X.shape[1]} covariates for only {n_events} events; estimates will be unstable",
            SparseColumnWarning,
            stacklevel=3,
        )
    for j, name in enumerate(names):
        col = X[:, j]
        if np.all((col == 0.0) | (col == 1.0)):
            k = int(np.sum(events & (col == 1.0)))
            if k < options.min_column_events:
                warnings.warn(f"column {name!r} has only {k} events", SparseColumnWarning, stacklevel=3)


def cox_fit(design, entries, exits, events, ties=Ties.EFRON, options: FitOptions | None = None) -> CoxFit:
    """Fit a Cox model by Newton-Raphson from ``beta = 0``.

    Raises :class:`DivergenceError` when a coefficient leaves
    ``[-divergence_bound, divergence_bound]`` (monotone likelihood) and
    :class:`NonIdentifiableError` when the information matrix is singular.
    """
    options = options or FitOptions()
    ties = Ties.parse(ties)
    X, names = design_arrays(design)
    events = np.asarray(events, dtype=bool)
    if events.size != X.shape[0]:
        raise ValueError(f"dimension mismatch: design has {X.shape[0]} rows, events has {events.size}")
    if not events.any():
        raise ValueError("Cox model needs at least one event")
    _check_columns(X, names, events, options)

    # Centering leaves the partial likelihood unchanged and keeps exp() tame.
    Xc = X - X.mean(axis=0)
    sets = _RiskSets.build(Xc, entries, exits, events)
    p = X.shape[1]
    def check(beta):
        if np.any(np.abs(beta) > options.divergence_bound):
            j = int(np.argmax(np.abs(beta)))
            raise DivergenceError(
                f"coefficient for {names[j]!r} diverges (|beta| > {options.divergence_bound:g}); "
                "the partial likelihood is monotone in this column",
                column=names[j],
            )

    def derivatives(beta):
        loglik, grad, hess = _evaluate(beta, sets, ties, 2)
        return loglik, grad, -hess

    res = newton_ascent(lambda b: _evaluate(b, sets, ties, 0)[0], derivatives, np.zeros(p), options, check)
    beta, grad, hess = res.beta, res.grad, -res.info
    trace, converged, iterations = res.trace, res.converged, res.iterations

    try:
        covariance = inverse_spd(-hess)
    except NotPositiveDefiniteError as exc:
        raise NonIdentifiableError(f"information matrix is singular at the estimate: {exc}") from None
    return CoxFit(
        coefficients=beta,
        covariance=covariance,
        log_likelihood_trace=tuple(trace),
        converged=converged,
        iterations=iterations,
        ties=ties,
        column_names=names,
        gradient_norm=float(np.max(np.abs(grad))),
        n=X.shape[0],
        n_events=int(events.sum()),
    )


def wald_table(fit: CoxFit, terms=None, level: float = 0.95) -> ModelTable:
    """Hazard ratios with Wald confidence limits and two-sided p-values."""
    terms = tuple(terms) if terms is not None else fit.column_names
    return ratio_table(fit.coefficients, fit.standard_errors, terms, level, fit.converged, ratio_label="hr")
