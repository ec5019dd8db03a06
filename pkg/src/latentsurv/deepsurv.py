"""Deep survival model: an MLP log-risk trained on the Cox partial likelihood."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .coxph import RiskSets, breslow_from_log_risk, partial_likelihood, survival_from_log_risk
from .errors import NoEventsError, NonFiniteError
from .evaluation import concordance_index
from .numerics.adam import NETWORK_LR, AdamState, adam_step
from .numerics.mlp import build_mlp, mlp_backward, mlp_forward
from .numerics.rng import Rng

log = logging.getLogger(__name__)

HIDDEN_WIDTHS = (256, 128, 64, 32, 16)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = NETWORK_LR
    dropout: float = 0.4
    epochs: int = 200
    patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0
    hidden_widths: tuple = HIDDEN_WIDTHS

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.epochs < 0 or self.patience < 1:
            raise ValueError("epochs must be >= 0 and patience >= 1")


@dataclass
class DeepSurvModel:
    network: object
    feature_names: tuple
    train_loss: list = field(default_factory=list)
    val_c_index: list = field(default_factory=list)
    best_epoch: int = 0
    baseline: object = None

    @property
    def feature_dim(self):
        return self.network.input_dim


def deepsurv_loss(log_risks, times, events):
    """Cox partial likelihood within one batch, averaged over its events.

    Returns ``(loss, dLoss/dLogRisk)`` shaped like ``log_risks``.
    """
    h = np.asarray(log_risks, dtype=np.float64)
    shape = h.shape
    h = h.reshape(-1)
    if h.size < 2:
        raise ValueError("deepsurv_loss needs at least 2 subjects")
    events = np.asarray(events, dtype=bool)
    k = int(events.sum())
    if k == 0:
        raise NoEventsError("batch has no events")
    loss, grad = partial_likelihood(h, RiskSets(times, events))
    return loss / k, (grad / k).reshape(shape)


def _batches(perm, events, batch_size):
    """Split a permutation into batches; event-free or singleton batches are merged forward."""
    out, pending = [], np.empty(0, dtype=perm.dtype)
    for s in range(0, perm.size, batch_size):
        chunk = np.concatenate([pending, perm[s:s + batch_size]])
        if events[chunk].any() and chunk.size >= 2:
            out.append(chunk)
            pending = np.empty(0, dtype=perm.dtype)
        else:
            pending = chunk
    if pending.size:
        if out:
            out[-1] = np.concatenate([out[-1], pending])
        elif events[pending].any() and pending.size >= 2:
            out.append(pending)
    return out


def predict_log_risk(model, features):
    """Eval-mode log-risk for one feature vector or a matrix of rows."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != model.feature_dim:
        raise ValueError(f"expected {model.feature_dim} features, got {f.shape[-1]}")
    net = model.network
    mode = net.mode
    net.eval()
    try:
        out, _ = mlp_forward(net, f.reshape(-1, f.shape[-1]))
    finally:
        net.mode = mode
    out = out[:, 0]
    return float(out[0]) if f.ndim == 1 else out


def predict_survival(model, features, t):
    return survival_from_log_risk(model.baseline, predict_log_risk(model, features), t)


def train_deepsurv(cohort, config=TrainConfig()):
    """Mini-batch Adam training with early stopping on validation C-index.

    A ``validation_fraction`` share of ``cohort`` is held out. Each epoch
    reshuffles the rest, and the weights from the best validation epoch
    (epoch 0 being the untrained network) are returned, with a Breslow
    baseline fitted on the whole ``cohort``.
    """
    rng = Rng(config.seed)
    n = len(cohort)
    if n < 2 * config.batch_size:
        log.warning("cohort of %d is smaller than two batches of %d", n, config.batch_size)
    perm = rng.child(0).permutation(n)
    n_val = max(2, int(round(n * config.validation_fraction)))
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    X, times, events = cohort.features, cohort.times, cohort.events
    Xtr, ttr, etr = X[tr_idx], times[tr_idx], events[tr_idx]
    Xval, tval, eval_ = X[val_idx], times[val_idx], events[val_idx]
    if not etr.any():
        raise NoEventsError("training split has no events")

    net = build_mlp((cohort.feature_dim, *config.hidden_widths, 1), rng.child(1),
                    dropout_rate=config.dropout)
    shuffle_rng, dropout_rng = rng.child(2), rng.child(3)
    state = AdamState.zeros(net.get_flat().size, learning_rate=config.learning_rate)

    def val_cindex():
        net.eval()
        h, _ = mlp_forward(net, Xval)
        net.train()
        return concordance_index(tval, eval_, h[:, 0])

    model = DeepSurvModel(net, tuple(cohort.feature_names))
    best_c, best_params, best_epoch = val_cindex(), net.get_flat(), 0
    best_stats = [(l.running_mean, l.running_var) for l in net.layers]
    model.val_c_index.append(best_c)
    model.train_loss.append(None)  # no training before epoch 1
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        net.train()
        losses = []
        for b, batch in enumerate(_batches(shuffle_rng.permutation(tr_idx.size), etr,
                                            config.batch_size)):
            out, cache = mlp_forward(net, Xtr[batch], dropout_rng)
            loss, d_out = deepsurv_loss(out, ttr[batch], etr[batch])
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = mlp_backward(net, cache, d_out)
            state, params = adam_step(state, net.get_flat(), grads.flat(net))
            net.set_flat(params)
            losses.append(loss)
        c = val_cindex()
        model.train_loss.append(float(np.mean(losses)))
        model.val_c_index.append(c)
        log.debug("epoch %d loss %.4f val c-index %.4f", epoch, model.train_loss[-1], c)
        if c > best_c:
            # running statistics belong to the snapshot too
            best_c, best_params, best_epoch, since_best = c, net.get_flat(), epoch, 0
            best_stats = [(l.running_mean, l.running_var) for l in net.layers]
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    net.set_flat(best_params)
    for layer, (rm, rv) in zip(net.layers, best_stats):
        layer.running_mean, layer.running_var = rm, rv
    net.eval()
    model.best_epoch = best_epoch
    model.baseline = breslow_from_log_risk(predict_log_risk(model, X), times, events)
    return model
