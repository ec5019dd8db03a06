"""Censored survival data: records, CSV I/O, simulation, fusion and splitting."""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CohortError, ConvergenceError, NonFiniteError
from .numerics.rng import Rng

NONLINEAR_FORMULA = "h(f) = f[0] * f[1] + sin(f[2])"
PILOT_SIZE = 10_000
TIE_JITTER = 1e-6


@dataclass(frozen=True)
class SurvivalRecord:
    id: str
    time: float
    event: bool
    features: tuple


def _readonly(a):
    a.setflags(write=False)
    return a


class Cohort:
    """Immutable columnar collection of survival records.

    Stores ``ids``, ``times``, ``events`` and an ``n x d`` ``features`` matrix;
    ``records`` gives the row view.
    """

    def __init__(self, ids, times, events, features, feature_names=None):
        ids = [str(i) for i in ids]
        times = np.array(times, dtype=np.float64).reshape(-1)
        events = np.array(events, dtype=bool).reshape(-1)
        features = np.array(features, dtype=np.float64)
        n = len(ids)
        if features.size == 0:
            d = len(feature_names) if feature_names is not None else 0
            features = features.reshape(n, d)
        if features.ndim != 2 or features.shape[0] != n or times.size != n or events.size != n:
            raise CohortError("ids, times, events and features must have matching lengths")
        if feature_names is None:
            feature_names = [f"f{j}" for j in range(features.shape[1])]
        feature_names = [str(s) for s in feature_names]
        if len(feature_names) != features.shape[1]:
            raise CohortError(
                f"{len(feature_names)} feature names for {features.shape[1]} features"
            )
        if len(set(ids)) != n:
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise CohortError(f"duplicate id {dup!r}")
        if n and not (np.all(np.isfinite(times)) and np.all(times > 0)):
            raise CohortError("times must be finite and positive")
        if not np.all(np.isfinite(features)):
            raise CohortError("features must be finite")
        self.ids = tuple(ids)
        self.times = _readonly(times)
        self.events = _readonly(events)
        self.features = _readonly(features)
        self.feature_names = tuple(feature_names)

    @classmethod
    def from_records(cls, records, feature_names=None):
        records = list(records)
        d = len(records[0].features) if records else len(feature_names or ())
        feats = np.array([r.features for r in records], dtype=np.float64).reshape(len(records), d)
        return cls([r.id for r in records], [r.time for r in records],
                   [r.event for r in records], feats, feature_names)

    def __len__(self):
        return len(self.ids)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def n_events(self):
        return int(self.events.sum())

    @property
    def records(self):
        return [
            SurvivalRecord(i, float(t), bool(e), tuple(float(v) for v in f))
            for i, t, e, f in zip(self.ids, self.times, self.events, self.features)
        ]

    def subset(self, index):
        index = np.asarray(index, dtype=np.intp)
        return Cohort([self.ids[i] for i in index], self.times[index], self.events[index],
                      self.features[index], self.feature_names)

    def with_features(self, features, feature_names):
        return Cohort(self.ids, self.times, self.events, features, feature_names)

    def __eq__(self, other):
        return (
            isinstance(other, Cohort)
            and self.ids == other.ids
            and self.feature_names == other.feature_names
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.features, other.features)
        )

    def __repr__(self):
        return f"Cohort(n={len(self)}, d={self.feature_dim}, events={self.n_events})"


# ---------------------------------------------------------------------------
# CSV


def load_cohort(path, feature_dim=None):
    """Read ``id,time,event,<features...>`` CSV. Errors name the 1-based file row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CohortError(f"{path}: empty file, no records")
        if [h.strip() for h in header[:3]] != ["id", "time", "event"]:
            raise CohortError(f"{path}: header must start with id,time,event")
        names = [h.strip() for h in header[3:]]
        if feature_dim is not None and len(names) != feature_dim:
            raise CohortError(f"{path}: expected {feature_dim} features, header has {len(names)}")
        ids, times, events, feats, seen = [], [], [], [], set()
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + len(names):
                raise CohortError(
                    f"{path}: row {rowno}: expected {3 + len(names)} fields, got {len(row)}"
                )
            rid = row[0].strip()
            if not rid:
                raise CohortError(f"{path}: row {rowno}: missing id")
            if rid in seen:
                raise CohortError(f"{path}: row {rowno}: duplicate id {rid!r}")
            seen.add(rid)
            try:
                t = float(row[1])
            except ValueError:
                raise CohortError(f"{path}: row {rowno}: time {row[1]!r} is not a number") from None
            if not math.isfinite(t) or t <= 0:
                raise CohortError(f"{path}: row {rowno}: time must be finite and positive, got {row[1]}")
            ev = row[2].strip()
            if ev not in ("0", "1"):
                raise CohortError(f"{path}: row {rowno}: event must be 0 or 1, got {row[2]!r}")
            try:
                f = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise CohortError(f"{path}: row {rowno}: {exc}") from None
            if not all(math.isfinite(v) for v in f):
                raise CohortError(f"{path}: row {rowno}: non-finite feature")
            ids.append(rid)
            times.append(t)
            events.append(ev == "1")
            feats.append(f)
    if not ids:
        raise CohortError(f"{path}: no records")
    return Cohort(ids, times, events, np.array(feats).reshape(len(ids), len(names)), names)


def cohort_to_csv(cohort):
    lines = [",".join(["id", "time", "event", *cohort.feature_names])]
    for i, t, e, f in zip(cohort.ids, cohort.times, cohort.events, cohort.features):
        lines.append(",".join([i, repr(float(t)), "1" if e else "0", *(repr(float(v)) for v in f)]))
    return "\n".join(lines) + "\n"


def truth_to_csv(cohort, truth):
    lines = ["id,true_log_risk"]
    lines += [f"{i},{float(h)!r}" for i, h in zip(cohort.ids, truth.log_risk)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Simulation


@dataclass(frozen=True)
class SimConfig:
    """Synthetic proportional-hazards cohort with a Weibull baseline.

    Defaults follow a cohort observed between 2 and 4,923 days with 53.3%
    right censoring.
    """

    n: int = 1000
    feature_dim: int = 10
    true_coefficients: tuple = None
    log_risk_form: str = "linear"
    weibull_shape: float = 1.2
    weibull_scale: float = 1500.0
    target_censor_fraction: float = 0.533
    time_range: tuple = (2.0, 4923.0)
    seed: int = 0
    allow_ties: bool = False

    def __post_init__(self):
        if self.n < 0 or self.feature_dim < 1:
            raise ValueError("n must be >= 0 and feature_dim >= 1")
        if self.true_coefficients is None:
            object.__setattr__(self, "true_coefficients", default_coefficients(self.feature_dim))
        object.__setattr__(self, "true_coefficients",
                           tuple(float(c) for c in self.true_coefficients))
        if len(self.true_coefficients) != self.feature_dim:
            raise ValueError("true_coefficients length must equal feature_dim")
        if self.log_risk_form not in ("linear", "nonlinear"):
            raise ValueError(f"unknown log_risk_form {self.log_risk_form!r}")
        if self.log_risk_form == "nonlinear" and self.feature_dim < 3:
            raise ValueError(f"nonlinear form {NONLINEAR_FORMULA} needs feature_dim >= 3")
        if self.weibull_shape <= 0 or self.weibull_scale <= 0:
            raise ValueError("Weibull shape and scale must be positive")
        if not 0.0 <= self.target_censor_fraction < 1.0:
            raise ValueError("target_censor_fraction must be in [0, 1)")
        lo, hi = self.time_range
        if not 0 < lo < hi:
            raise ValueError("time_range must satisfy 0 < min < max")


def default_coefficients(d):
    """(1, -1, 0, 0, ...) truncated to ``d``."""
    w = np.zeros(d)
    w[:2] = [1.0, -1.0][:d]
    return tuple(w)


@dataclass(frozen=True)
class GroundTruth:
    log_risk: np.ndarray
    true_coefficients: tuple
    censor_rate: float = field(default=0.0)


def true_log_risk(features, config):
    if config.log_risk_form == "nonlinear":
        return features[:, 0] * features[:, 1] + np.sin(features[:, 2])
    return features @ np.asarray(config.true_coefficients)


def _event_times(log_risk, u, shape, scale):
    # inverse of S(t) = exp(-(t/scale)^shape * exp(h))
    return scale * (-np.log(u) * np.exp(-log_risk)) ** (1.0 / shape)


def _observe(event_t, censor_t, time_range):
    lo, hi = time_range
    t = np.minimum(np.minimum(event_t, censor_t), hi)
    event = (event_t <= censor_t) & (event_t <= hi)
    return np.maximum(t, lo), event


def _calibrate_censor_rate(config, rng):
    """Exponential censoring rate hitting the target censored fraction on a pilot."""
    feats = rng.normal((PILOT_SIZE, config.feature_dim))
    t_event = _event_times(true_log_risk(feats, config), 1.0 - rng.uniform(PILOT_SIZE),
                           config.weibull_shape, config.weibull_scale)
    e = rng.exponential(PILOT_SIZE)
    target = config.target_censor_fraction

    def censored(rate):
        c = e / rate if rate > 0 else np.full(PILOT_SIZE, np.inf)
        return 1.0 - _observe(t_event, c, config.time_range)[1].mean()

    base = censored(0.0)
    if base > target + 1e-12:
        raise ConvergenceError(
            f"infeasible censoring calibration: administrative censoring alone gives "
            f"{base:.3f} > target {target:.3f}"
        )
    if target <= base:
        return 0.0
    lo, hi = -30.0, 10.0  # log rate bracket
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if censored(math.exp(mid)) < target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def _break_ties(times):
    """Add TIE_JITTER * rank within each group of equal times (rank 0 unchanged)."""
    order = np.argsort(times, kind="stable")
    st = times[order]
    start = np.searchsorted(st, st, side="left")
    rank = np.arange(st.size) - start
    out = times.copy()
    out[order] = st + TIE_JITTER * rank
    return out


def simulate_cohort(config):
    """Simulate ``(Cohort, GroundTruth)`` from a proportional-hazards model.

    Features are standard normal; event times follow a Weibull baseline
    scaled by ``exp(h)``; independent exponential censoring is calibrated by
    bisection on a 10,000-sample pilot. Observed times are clamped to
    ``time_range`` (times beyond the upper end are administratively
    censored) and rounded to whole days.
    """
    rng = Rng(config.seed)
    rate = _calibrate_censor_rate(config, rng.child(0))
    main = rng.child(1)
    n, d = config.n, config.feature_dim
    feats = main.normal((n, d))
    h = true_log_risk(feats, config)
    t_event = _event_times(h, 1.0 - main.uniform(n), config.weibull_shape, config.weibull_scale)
    e = main.exponential(n)
    t_cens = e / rate if rate > 0 else np.full(n, np.inf)
    times, events = _observe(t_event, t_cens, config.time_range)
    times = np.clip(np.round(times), *config.time_range)
    if not config.allow_ties and n:
        times = _break_ties(times)
    width = max(1, len(str(max(n - 1, 0))))
    ids = [f"s{i:0{width}d}" for i in range(n)]
    cohort = Cohort(ids, times, events, feats, [f"f{j}" for j in range(d)])
    return cohort, GroundTruth(_readonly(h), config.true_coefficients, rate)


# ---------------------------------------------------------------------------
# Fusion and splitting


def fuse_features(clinical, embedding):
    """Early fusion: clinical features followed by the embedding."""
    a = np.asarray(clinical, dtype=np.float64)
    b = np.asarray(embedding, dtype=np.float64)
    for name, v in (("clinical", a), ("embedding", b)):
        bad = np.flatnonzero(~np.isfinite(v.reshape(-1)))
        if bad.size:
            raise NonFiniteError(f"non-finite {name} feature at index {bad[0]}", index=int(bad[0]))
    return np.concatenate([a, b], axis=-1)


def fuse_cohorts(clinical, embedding):
    """Fuse two cohorts sharing ids; survival data is taken from ``clinical``."""
    pos = {i: k for k, i in enumerate(embedding.ids)}
    missing = [i for i in clinical.ids if i not in pos]
    if missing:
        raise CohortError(f"id {missing[0]!r} has no embedding")
    emb = embedding.features[[pos[i] for i in clinical.ids]]
    return clinical.with_features(
        fuse_features(clinical.features, emb),
        list(clinical.feature_names) + list(embedding.feature_names),
    )


def split_cohort(cohort, train_fraction, seed):
    """Shuffle and partition into ``(train, test)``; train gets round(n * fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise CohortError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(cohort)
    if n == 0:
        raise CohortError("cannot split an empty cohort")
    perm = Rng(seed).permutation(n)
    n_train = int(math.floor(n * train_fraction + 0.5))
    return cohort.subset(np.sort(perm[:n_train])), cohort.subset(np.sort(perm[n_train:]))
