"""Cox proportional-hazards model.

Negative log partial likelihood with Breslow handling of tied event times,
full-batch Adam fitting, the Breslow baseline cumulative hazard, and risk and
survival prediction.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, NoEventsError
from .numerics.adam import NETWORK_LR, AdamState, adam_step

log = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-4
DEFAULT_MAX_ITERS = 20_000
DEFAULT_TOLERANCE = 1e-9


class RiskSets:
    """Precomputed ordering for partial-likelihood evaluations on fixed data.

    Subjects are sorted by descending time, so the risk set of the subject at
    sorted position ``p`` is the prefix ``0 .. end[p]`` (ties included).
    """

    def __init__(self, times, events):
        times = np.asarray(times, dtype=np.float64)
        events = np.asarray(events, dtype=bool)
        if times.shape != events.shape or times.ndim != 1:
            raise ValueError("times and events must be 1-D of equal length")
        self.n = times.size
        self.n_events = int(events.sum())
        self.order = np.argsort(-times, kind="stable")
        neg_t = -times[self.order]
        self.end = np.searchsorted(neg_t, neg_t, side="right") - 1
        self.start = np.searchsorted(neg_t, neg_t, side="left")
        self.events_desc = events[self.order]

    def log_risk_sums(self, h_desc):
        """log sum_{j in R(t_p)} exp(h_j) for every sorted position p."""
        return np.logaddexp.accumulate(h_desc)[self.end]


def partial_likelihood(h, risk_sets):
    """Summed negative log partial likelihood and its gradient in ``h``.

    ``-sum_events [h_i - log sum_{j: t_j >= t_i} exp(h_j)]``, evaluated in the
    log domain.
    """
    rs = risk_sets
    if rs.n_events == 0:
        raise NoEventsError("partial likelihood undefined: no events")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    h_desc = h[rs.order]
    lse = rs.log_risk_sums(h_desc)
    ev = rs.events_desc
    loss = -float(np.sum(h_desc[ev] - lse[ev]))
    # sum over events i with t_i <= t_j of exp(-lse_i), as a suffix in sorted order
    a = np.where(ev, -lse, -np.inf)
    suffix = np.logaddexp.accumulate(a[::-1])[::-1]
    g_desc = np.exp(h_desc + suffix[rs.start]) - ev
    grad = np.empty_like(g_desc)
    grad[rs.order] = g_desc
    return loss, grad


@dataclass(frozen=True)
class BaselineHazard:
    """Right-continuous step cumulative hazard; zero before the first event."""

    event_times: np.ndarray
    cumulative_hazard: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        out = np.where(idx >= 0, self.cumulative_hazard[np.maximum(idx, 0)], 0.0)
        return out if out.ndim else float(out)


@dataclass
class CoxModel:
    coefficients: np.ndarray
    ridge_lambda: float = DEFAULT_RIDGE
    feature_names: tuple = ()
    final_loss: float = float("nan")
    iterations: int = 0
    converged: bool = False
    message: str = ""
    baseline: BaselineHazard = field(default=None, repr=False)

    @property
    def feature_dim(self):
        return self.coefficients.size


def cox_nll(w, cohort, ridge_lambda=0.0, risk_sets=None):
    """Ridge-penalised negative log partial likelihood of a linear model.

    Returns ``(loss, gradient)`` with ``loss = NLL(X w) + ridge_lambda * |w|^2``.
    """
    w = np.asarray(w, dtype=np.float64)
    X = cohort.features
    if w.shape != (X.shape[1],):
        raise ValueError(f"coefficient length {w.size} != feature_dim {X.shape[1]}")
    if risk_sets is None:
        if len(cohort) == 0:
            raise NoEventsError("partial likelihood undefined: empty cohort")
        risk_sets = RiskSets(cohort.times, cohort.events)
    loss, g = partial_likelihood(X @ w, risk_sets)
    return loss + ridge_lambda * float(w @ w), X.T @ g + 2.0 * ridge_lambda * w


def fit_coxph(cohort, ridge_lambda=DEFAULT_RIDGE, max_iters=DEFAULT_MAX_ITERS,
              tolerance=DEFAULT_TOLERANCE, learning_rate=NETWORK_LR, init=None):
    """Fit coefficients by full-batch Adam on the penalised partial likelihood.

    Features are centred internally; the partial likelihood and its gradient
    are unchanged by centring, which only removes rounding noise along
    constant columns. Stops when the relative loss change drops below
    ``tolerance`` or after ``max_iters`` steps.
    """
    if len(cohort) == 0 or cohort.n_events == 0:
        raise NoEventsError("partial likelihood undefined: no events")
    X = cohort.features - cohort.features.mean(axis=0)
    rs = RiskSets(cohort.times, cohort.events)
    w = np.zeros(cohort.feature_dim) if init is None else np.array(init, dtype=np.float64)
    state = AdamState.zeros(w.size, learning_rate=learning_rate)

    def objective(w):
        loss, g = partial_likelihood(X @ w, rs)
        return loss + ridge_lambda * float(w @ w), X.T @ g + 2.0 * ridge_lambda * w

    loss, grad = objective(w)
    converged, it = False, 0
    for it in range(1, max_iters + 1):
        state, w_new = adam_step(state, w, grad)
        new_loss, new_grad = objective(w_new)
        if not np.isfinite(new_loss):
            raise ConvergenceError(f"Cox fit diverged at iteration {it}")
        change = abs(loss - new_loss) / max(abs(loss), 1e-300)
        w, loss, grad = w_new, new_loss, new_grad
        if change < tolerance:
            converged = True
            break
    msg = "relative loss change below tolerance" if converged else (
        f"stopped at max_iters={max_iters} before reaching tolerance {tolerance:g}")
    log.debug("cox fit: %s after %d iterations, loss %.6f", msg, it, loss)
    model = CoxModel(w, ridge_lambda, tuple(cohort.feature_names), loss, it, converged, msg)
    model.baseline = breslow_baseline(model, cohort)
    return model


def breslow_from_log_risk(h, times, events):
    """Breslow cumulative hazard given per-subject log-risks."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if not events.any():
        raise NoEventsError("baseline hazard undefined: no events")
    rs = RiskSets(times, events)
    h_desc = np.asarray(h, dtype=np.float64)[rs.order]
    lse = rs.log_risk_sums(h_desc)
    t_desc = times[rs.order]
    ev = rs.events_desc
    uniq, counts = np.unique(t_desc[ev], return_counts=True)
    # every event at a tied time shares the same risk-set sum
    pos = np.searchsorted(-t_desc, -uniq, side="left")
    increments = counts * np.exp(-lse[pos])
    return BaselineHazard(uniq, np.cumsum(increments))


def breslow_baseline(model, cohort):
    if cohort.feature_dim != model.feature_dim:
        raise ValueError("cohort feature schema does not match the model")
    return breslow_from_log_risk(cohort.features @ model.coefficients, cohort.times, cohort.events)


def predict_risk(model, features):
    """Linear log-risk ``w . f`` for one vector or a matrix of rows."""
    w = model.coefficients if isinstance(model, CoxModel) else np.asarray(model, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != w.size:
        raise ValueError(f"feature length {f.shape[-1]} != coefficient length {w.size}")
    out = f @ w
    return float(out) if out.ndim == 0 else out


def survival_from_log_risk(baseline, h, t):
    """``exp(-Lambda0(t) * exp(h))``."""
    return np.exp(-baseline(t) * np.exp(h))


def predict_survival(model, baseline, features, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return survival_from_log_risk(baseline, predict_risk(model, features), t)
