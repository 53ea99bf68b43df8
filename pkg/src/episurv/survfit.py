"""Kaplan-Meier estimation with delayed entry, and the log-rank test.

A subject with entry ``a`` and exit ``b`` is at risk at every time ``t`` with
``a <= t <= b``. Deaths are counted at the exit time; censorings at the same
time stay in the risk set for those deaths.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .statfn import NotPositiveDefiniteError, chi_square_sf, critical_value, solve_spd


def _as_arrays(entries, exits, events):
    entries = np.asarray(entries, dtype=float)
    exits = np.asarray(exits, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not (entries.shape == exits.shape == events.shape) or entries.ndim != 1:
        raise ValueError("entries, exits and events must be 1-d and of equal length")
    if entries.size == 0:
        raise ValueError("no observations")
    if np.any(exits < entries):
        bad = int(np.argmax(exits < entries))
        raise ValueError(f"observation {bad}: exit precedes entry")
    return entries, exits, events


@dataclass(frozen=True)
class KmCurve:
    times: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray
    n_censor: np.ndarray
    survival: np.ndarray
    greenwood_var: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    conf_level: float = 0.95

    def __len__(self):
        return self.times.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "n_risk", "n_event", "n_censor", "survival", "var", "ci_lower", "ci_upper"])
        for i in range(self.times.size):
            w.writerow(
                [
                    _num(self.times[i]),
                    int(self.n_risk[i]),
                    int(self.n_event[i]),
                    int(self.n_censor[i]),
                    repr(float(self.survival[i])),
                    repr(float(self.greenwood_var[i])),
                    "" if math.isnan(self.ci_lower[i]) else repr(float(self.ci_lower[i])),
                    "" if math.isnan(self.ci_upper[i]) else repr(float(self.ci_upper[i])),
                ]
            )
        return buf.getvalue()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def km_fit(entries, exits, events, conf_level: float = 0.95) -> KmCurve:
    """Product-limit survival estimate with Greenwood variance.

    Confidence limits use the log-log transform and are NaN where the
    estimate is 0 or 1. Once the estimate reaches zero its variance is
    reported as zero.
    """
    entries, exits, events = _as_arrays(entries, exits, events)
    z = critical_value(conf_level)
    times = np.unique(exits[events])
    k = times.size
    n_risk = np.empty(k, dtype=int)
    n_event = np.empty(k, dtype=int)
    n_censor = np.empty(k, dtype=int)
    surv = np.empty(k)
    var = np.empty(k)
    lo = np.full(k, np.nan)
    hi = np.full(k, np.nan)

    # Exact rational product, rounded once per step, so that without
    # censoring the curve equals (n - deaths) / n to the last bit.
    exact, gw = Fraction(1), 0.0
    for i, t in enumerate(times):
        at_exit = exits == t
        r = int(np.sum((entries <= t) & (exits >= t)))
        d = int(np.sum(at_exit & events))
        n_risk[i], n_event[i] = r, d
        n_censor[i] = int(np.sum(at_exit & ~events))
        exact *= Fraction(r - d, r)
        s = float(exact)
        if r > d:
            gw += d / (r * (r - d))
        surv[i] = s
        var[i] = s * s * gw if s > 0 else 0.0
        if 0.0 < s < 1.0 and gw > 0:
            log_s = math.log(s)
            se = math.sqrt(gw) / abs(log_s)
            u = math.log(-log_s)
            lo[i] = math.exp(-math.exp(u + z * se))
            hi[i] = math.exp(-math.exp(u - z * se))
    return KmCurve(times, n_risk, n_event, n_censor, surv, var, lo, hi, conf_level)


def km_eval(curve: KmCurve, t: float) -> float:
    """Right-continuous lookup of the survival step function."""
    if t < 0:
        raise ValueError("t must be non-negative")
    idx = int(np.searchsorted(curve.times, t, side="right"))
    return 1.0 if idx == 0 else float(curve.survival[idx - 1])


@dataclass(frozen=True)
class LogRankResult:
    chi_square: float
    degrees_of_freedom: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray
    labels: tuple = ()


def log_rank(groups, labels=None) -> LogRankResult:
    """Multi-group log-rank test over pooled event times.

    ``groups`` is a sequence of ``(entries, exits, events)`` triples. The
    statistic uses the first ``k - 1`` groups and the hypergeometric
    covariance of their observed-minus-expected counts.
    """
    groups = [_as_arrays(*g) for g in groups]
    if len(groups) < 2:
        raise ValueError("log-rank test needs at least two groups")
    k = len(groups)
    all_event_times = np.unique(np.concatenate([ex[ev] for _, ex, ev in groups]))
    if all_event_times.size == 0:
        raise ValueError("log-rank test needs at least one event")

    observed = np.zeros(k)
    expected = np.zeros(k)
    cov = np.zeros((k, k))
    for t in all_event_times:
        r = np.array([np.sum((en <= t) & (ex >= t)) for en, ex, _ in groups], dtype=float)
        d = np.array([np.sum((ex == t) & ev) for _, ex, ev in groups], dtype=float)
        r_tot, d_tot = r.sum(), d.sum()
        frac = r / r_tot
        observed += d
        expected += d_tot * frac
        if r_tot > 1:
            scale = d_tot * (r_tot - d_tot) / (r_tot - 1)
            cov += scale * (np.diag(frac) - np.outer(frac, frac))

    diff = (observed - expected)[:-1]
    v = cov[:-1, :-1]
    if np.allclose(diff, 0.0, atol=1e-12):
        chi = 0.0
    else:
        try:
            chi = float(diff @ solve_spd(v, diff))
        except NotPositiveDefiniteError as exc:
            raise ValueError(f"log-rank covariance is singular: {exc}") from None
    chi = max(chi, 0.0)
    return LogRankResult(
        chi_square=chi,
        degrees_of_freedom=k - 1,
        p_value=chi_square_sf(chi, k - 1),
        observed=observed,
        expected=expected,
        labels=tuple(labels) if labels is not None else tuple(range(k)),
    )
