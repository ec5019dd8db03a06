"""Censored-data metrics: Kaplan-Meier, Harrell's C-index and IPCW Brier scores."""
from dataclasses import dataclass

import numpy as np

from .errors import LatentSurvError


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous survival step function with S = 1 before ``times[0]``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)] if self.values.size else 1.0, 1.0)
        return out if out.ndim else float(out)

    def left_limit(self, t):
        """S(t-), the value just before ``t``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="left") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)] if self.values.size else 1.0, 1.0)
        return out if out.ndim else float(out)


def kaplan_meier(times, events, for_censoring=False):
    """Product-limit estimator.

    With ``for_censoring`` the event indicators are flipped, giving the
    censoring survival G(t) used for inverse-probability weights.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise LatentSurvError("kaplan_meier needs at least one observation")
    if times.shape != events.shape:
        raise ValueError("times and events must have equal length")
    if for_censoring:
        events = ~events
    uniq, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=events, minlength=uniq.size)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = times.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    keep = deaths > 0
    values = np.cumprod(1.0 - deaths[keep] / at_risk[keep])
    return StepSurvival(uniq[keep], values)


class _Fenwick:
    def __init__(self, n):
        self.tree = [0] * (n + 1)

    def add(self, i):
        i += 1
        while i < len(self.tree):
            self.tree[i] += 1
            i += i & -i

    def prefix(self, i):
        """Count of inserted ranks < i."""
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s


def concordance_counts(times, events, risks):
    """``(concordant, tied_risk, comparable)`` pair counts, O(n log n)."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    risks = np.asarray(risks, dtype=np.float64)
    if not times.shape == events.shape == risks.shape:
        raise ValueError("times, events and risks must have equal length")
    uniq_r, rank = np.unique(risks, return_inverse=True)
    order = np.argsort(-times, kind="stable")
    tree = _Fenwick(uniq_r.size)
    conc = ties = pairs = inserted = 0
    i, n = 0, times.size
    while i < n:
        j = i
        while j < n and times[order[j]] == times[order[i]]:
            j += 1
        group = order[i:j]
        for k in group:
            if events[k]:
                r = int(rank[k])
                below = tree.prefix(r)
                conc += below
                ties += tree.prefix(r + 1) - below
                pairs += inserted
        for k in group:
            tree.add(int(rank[k]))
        inserted += j - i
        i = j
    return conc, ties, pairs


def concordance_index(times, events, risks):
    """Harrell's C-index: higher risk should mean earlier event.

    Comparable pairs have ``t_i < t_j`` with an event at ``t_i``; equal-time
    pairs are excluded and tied risks earn half credit.
    """
    conc, ties, pairs = concordance_counts(times, events, risks)
    if pairs == 0:
        raise LatentSurvError("no comparable pairs")
    return (2 * conc + ties) / (2 * pairs)


def _ipcw_terms(surv, times, events, t, censor_dist):
    died = (times <= t) & events
    alive = times > t
    g_t = censor_dist(t)
    g_before = censor_dist.left_limit(times)
    if (alive.any() and g_t <= 0) or np.any(g_before[died] <= 0):
        raise LatentSurvError(f"zero IPCW weight at horizon t={t!r}")
    w_died = np.divide(1.0, g_before, out=np.zeros_like(g_before), where=died)
    w_alive = 1.0 / g_t if alive.any() else 0.0
    return surv**2 * w_died + (1.0 - surv) ** 2 * alive * w_alive


def brier_score(survival_predictor, cohort, t, censor_dist):
    """IPCW Brier score at horizon ``t``.

    ``survival_predictor(features, t)`` returns predicted S(t | f) for every
    row of ``features``; ``censor_dist`` is ``kaplan_meier(..., for_censoring=True)``.
    """
    surv = np.asarray(survival_predictor(cohort.features, t), dtype=np.float64)
    terms = _ipcw_terms(surv, cohort.times, cohort.events, float(t), censor_dist)
    return float(terms.mean())


def brier_curve(survival_predictor, cohort, grid, censor_dist):
    return np.array([brier_score(survival_predictor, cohort, t, censor_dist) for t in grid])


def default_brier_grid(times, events, n_points=100):
    """Equally spaced quantiles (5th to 95th percentile) of observed event times."""
    ev_times = np.asarray(times)[np.asarray(events, dtype=bool)]
    if ev_times.size == 0:
        raise LatentSurvError("no event times to build a Brier grid")
    return np.quantile(ev_times, np.linspace(0.05, 0.95, n_points))


def integrated_brier(survival_predictor, cohort, censor_dist, grid):
    """Trapezoidal integral of the Brier curve over ``grid``, divided by its span."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) < 0):
        raise LatentSurvError("Brier grid needs at least 2 non-decreasing points")
    span = grid[-1] - grid[0]
    if span <= 0:
        raise LatentSurvError("degenerate Brier grid with zero span")
    lo, hi = cohort.times.min(), cohort.times.max()
    if np.count_nonzero((grid >= lo) & (grid <= hi)) < 2:
        raise LatentSurvError("fewer than 2 grid points inside the observed time range")
    curve = brier_curve(survival_predictor, cohort, grid, censor_dist)
    return float(np.trapezoid(curve, grid) / span)
