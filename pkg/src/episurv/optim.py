"""Damped Newton ascent shared by the Cox and logistic fitters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonIdentifiableError
from .statfn import NotPositiveDefiniteError, solve_spd

_EPS = np.finfo(float).eps


@dataclass
class NewtonResult:
    beta: np.ndarray
    loglik: float
    grad: np.ndarray
    info: np.ndarray
    trace: list
    converged: bool
    iterations: int


def newton_ascent(
    value: Callable[[np.ndarray], float],
    derivatives: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    beta0: np.ndarray,
    options,
    after_step: Callable[[np.ndarray], None] | None = None,
) -> NewtonResult:
    """Maximize ``value`` by Newton steps with step halving.

    ``derivatives(beta)`` returns ``(value, gradient, information)`` where the
    information is the negated Hessian. Convergence needs both a log-likelihood
    change within ``options.tol_loglik`` and a gradient max-norm within
    ``options.tol_grad``.

    Once the predicted gain drops below the rounding level of the objective,
    a step that leaves the value unchanged to within rounding is accepted if
    it shrinks the gradient; the trace then repeats the previous value.
    """
    beta = np.asarray(beta0, dtype=float).copy()
    loglik, grad, info = derivatives(beta)
    trace = [loglik]
    converged = False
    iterations = 0
    while iterations < options.max_iter:
        iterations += 1
        try:
            step = solve_spd(info, grad)
        except NotPositiveDefiniteError as exc:
            raise NonIdentifiableError(f"information matrix is singular: {exc}") from None
        noise = 64 * _EPS * (1.0 + abs(loglik))
        gnorm = float(np.max(np.abs(grad)))

        accepted = None
        for halving in range(options.max_halvings + 1):
            trial = beta + step * 0.5**halving
            trial_ll = value(trial)
            if trial_ll >= loglik:
                accepted = (trial, trial_ll)
                break
            if halving == 0 and abs(trial_ll - loglik) <= noise:
                t_ll, t_grad, t_info = derivatives(trial)
                if float(np.max(np.abs(t_grad))) < gnorm:
                    accepted = (trial, loglik)
                    break
        if accepted is None:
            converged = gnorm <= options.tol_grad
            break

        beta, new_ll = accepted
        change = new_ll - loglik
        if after_step is not None:
            after_step(beta)
        _, grad, info = derivatives(beta)
        loglik = max(new_ll, loglik)
        trace.append(loglik)
        if abs(change) <= options.tol_loglik and float(np.max(np.abs(grad))) <= options.tol_grad:
            converged = True
            break
    return NewtonResult(beta, loglik, grad, info, trace, converged, iterations)
