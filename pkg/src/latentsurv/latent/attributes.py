"""Latent attribute directions and latent manipulation."""
from dataclasses import dataclass, field

import numpy as np

from ..cohort import Cohort
from ..coxph import DEFAULT_RIDGE, fit_coxph
from ..errors import LatentSurvError

AGE_RIDGE = 1e-3


@dataclass(frozen=True)
class Attribute:
    name: str  # "health", "age" or "single_dim(k)"
    direction: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.direction, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise LatentSurvError("attribute direction must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    @property
    def latent_dim(self):
        return self.direction.size


def _normalized(w):
    norm = np.linalg.norm(w)
    return w / norm if norm > 0 else w


def health_attribute(latents, cohort=None, ridge_lambda=DEFAULT_RIDGE, normalize=False, **fit_kw):
    """Direction given by the Cox coefficients of survival on latent vectors.

    ``latents`` is either a Cohort whose features are the latents, or an
    ``n x latent_dim`` array paired with a survival ``cohort`` in the same
    row order.
    """
    if isinstance(latents, Cohort):
        surv = latents
    else:
        z = np.asarray(latents, dtype=np.float64)
        if cohort is None or z.shape[0] != len(cohort):
            raise LatentSurvError("latents need a survival cohort with one row per latent")
        surv = cohort.with_features(z, [f"z{j}" for j in range(z.shape[1])])
    model = fit_coxph(surv, ridge_lambda=ridge_lambda, **fit_kw)
    w = model.coefficients
    meta = {
        "model": "coxph",
        "ridge_lambda": ridge_lambda,
        "fit_loss": model.final_loss,
        "iterations": model.iterations,
        "converged": model.converged,
        "normalized": bool(normalize),
        "n": len(surv),
        "events": surv.n_events,
    }
    return Attribute("health", _normalized(w) if normalize else w.copy(), meta)


def age_attribute(latents, ages, ridge_lambda=AGE_RIDGE, normalize=False):
    """Slope of a ridge regression (with free intercept) of age on latents."""
    z = np.asarray(latents, dtype=np.float64)
    y = np.asarray(ages, dtype=np.float64).reshape(-1)
    if z.ndim != 2 or z.shape[0] != y.size:
        raise LatentSurvError("latents and ages must have equal counts")
    if y.size < 2:
        raise LatentSurvError("age regression needs at least 2 records")
    if not np.all(np.isfinite(y)):
        raise LatentSurvError("ages must be finite")
    zc = z - z.mean(axis=0)
    yc = y - y.mean()
    w = np.linalg.solve(zc.T @ zc + ridge_lambda * np.eye(z.shape[1]), zc.T @ yc)
    intercept = float(y.mean() - z.mean(axis=0) @ w)
    resid = yc - zc @ w
    meta = {
        "model": "ridge",
        "ridge_lambda": ridge_lambda,
        "intercept": intercept,
        "fit_loss": float(resid @ resid + ridge_lambda * w @ w),
        "normalized": bool(normalize),
        "n": int(y.size),
    }
    return Attribute("age", _normalized(w) if normalize else w, meta)


def single_dim_attribute(dim, latent_dim=512):
    """Unit basis direction along one latent coordinate (a control edit)."""
    if not 0 <= dim < latent_dim:
        raise LatentSurvError(f"dimension {dim} out of range for latent_dim {latent_dim}")
    w = np.zeros(latent_dim)
    w[dim] = 1.0
    return Attribute(f"single_dim({dim})", w, {"model": "basis", "dim": int(dim)})


def manipulate(z, attr, beta):
    """``z + beta * w``."""
    z = np.asarray(z, dtype=np.float64)
    w = attr.direction if isinstance(attr, Attribute) else np.asarray(attr, dtype=np.float64)
    if z.shape != w.shape:
        raise LatentSurvError(f"latent length {z.size} != attribute length {w.size}")
    return z + beta * w


def manipulation_sweep(z, attr, betas, generator):
    """``[(beta, G(z + beta * w)) for beta in betas]``."""
    betas = [float(b) for b in betas]
    if not all(np.isfinite(betas)):
        raise LatentSurvError("betas must be finite")
    return [(b, generator.forward(manipulate(z, attr, b))) for b in betas]
