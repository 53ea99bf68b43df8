"""Logistic regression for death by the end of follow-up, fitted by IRLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coxph import FitOptions, design_arrays
from .errors import DegenerateOutcomeError, NonIdentifiableError, SeparationError
from .optim import newton_ascent
from .statfn import NotPositiveDefiniteError, inverse_spd
from .tables import ModelTable, ratio_table

LOGIT_OPTIONS = FitOptions(tol_loglik=1e-10, tol_grad=1e-8)


@dataclass(frozen=True)
class LogitFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    log_likelihood_trace: tuple[float, ...]
    converged: bool
    iterations: int
    column_names: tuple[str, ...]
    gradient_norm: float

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])


def expit(eta):
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bernoulli_loglik(beta, X, y) -> float:
    """Log-likelihood of a logit model; ``X`` already carries the intercept."""
    eta = X @ np.asarray(beta, dtype=float)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def with_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.ones(X.shape[0]), X])


def logit_fit(design, outcomes, options: FitOptions | None = None) -> LogitFit:
    """Maximum-likelihood logistic regression with an automatic intercept.

    Separation shows up as a coefficient escaping ``divergence_bound`` and is
    reported as :class:`SeparationError` naming the column; no penalty is
    applied.
    """
    options = options or LOGIT_OPTIONS
    X0, names = design_arrays(design)
    y = np.asarray(outcomes, dtype=float)
    if y.shape != (X0.shape[0],):
        raise ValueError(f"dimension mismatch: design has {X0.shape[0]} rows, outcomes has {y.size}")
    if y.min() == y.max():
        raise DegenerateOutcomeError("all outcomes are equal; the odds are not estimable")
    for j, name in enumerate(names):
        if np.ptp(X0[:, j]) == 0.0:
            raise ValueError(f"column {name!r} is constant and cannot be estimated")

    X = with_intercept(X0)
    names = ("intercept",) + names

    def derivatives(b):
        mu = expit(X @ b)
        grad = X.T @ (y - mu)
        info = (X * (mu * (1.0 - mu))[:, None]).T @ X
        return bernoulli_loglik(b, X, y), grad, info

    def check(b):
        # Only slopes signal separation; a far-off intercept just reflects
        # the location of the covariates.
        if np.any(np.abs(b[1:]) > options.divergence_bound):
            j = int(np.argmax(np.abs(b[1:]))) + 1
            raise SeparationError(
                f"separation detected in column {names[j]!r} (|beta| > {options.divergence_bound:g}); "
                "the outcome is (quasi-)perfectly predicted",
                column=names[j],
            )

    res = newton_ascent(lambda b: bernoulli_loglik(b, X, y), derivatives, np.zeros(X.shape[1]), options, check)
    beta, loglik, grad, info = res.beta, res.loglik, res.grad, res.info
    trace, converged, iterations = res.trace, res.converged, res.iterations

    try:
        covariance = inverse_spd(info)
    except NotPositiveDefiniteError as exc:
        raise NonIdentifiableError(f"Fisher information is singular at the estimate: {exc}") from None
    return LogitFit(
        coefficients=beta,
        covariance=covariance,
        log_likelihood=loglik,
        log_likelihood_trace=tuple(trace),
        converged=converged,
        iterations=iterations,
        column_names=names,
        gradient_norm=float(np.max(np.abs(grad))),
    )


def odds_table(fit: LogitFit, terms=None, level: float = 0.95) -> ModelTable:
    """Odds ratios for every non-intercept term."""
    terms = tuple(terms) if terms is not None else fit.column_names[1:]
    return ratio_table(fit.coefficients[1:], fit.standard_errors[1:], terms, level, fit.converged, ratio_label="or")
