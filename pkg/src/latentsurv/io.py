"""File formats: JSON models and attributes, JSON-lines latents, plain PGM images.

Floats are written with ``repr``, the shortest string that round-trips to
the same double, so save -> load is exact. Every writer is atomic
(temporary file + rename).
"""
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .coxph import BaselineHazard, CoxModel
from .deepsurv import DeepSurvModel
from .errors import LatentSurvError
from .latent.attributes import Attribute
from .numerics.mlp import DenseLayer, MlpNetwork


def atomic_write(path, data):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _floats(a):
    return [float(v) for v in np.asarray(a).reshape(-1)]


def _matrix(a):
    return [_floats(row) for row in np.asarray(a)]


# ---------------------------------------------------------------------------
# models


def _baseline_to_dict(b):
    if b is None:
        return None
    return {"event_times": _floats(b.event_times), "cumulative_hazard": _floats(b.cumulative_hazard)}


def _baseline_from_dict(d):
    if d is None:
        return None
    return BaselineHazard(np.array(d["event_times"], dtype=np.float64),
                          np.array(d["cumulative_hazard"], dtype=np.float64))


def cox_to_dict(model):
    return {
        "kind": "coxph",
        "coefficients": _floats(model.coefficients),
        "feature_names": list(model.feature_names),
        "ridge_lambda": model.ridge_lambda,
        "baseline": _baseline_to_dict(model.baseline),
        "diagnostics": {
            "final_loss": model.final_loss,
            "iterations": model.iterations,
            "converged": model.converged,
            "message": model.message,
        },
    }


def cox_from_dict(d):
    diag = d.get("diagnostics", {})
    return CoxModel(
        np.array(d["coefficients"], dtype=np.float64),
        d["ridge_lambda"],
        tuple(d["feature_names"]),
        diag.get("final_loss", float("nan")),
        diag.get("iterations", 0),
        diag.get("converged", False),
        diag.get("message", ""),
        _baseline_from_dict(d.get("baseline")),
    )


def network_to_dict(net):
    layers = []
    for layer in net.layers:
        entry = {
            "weight": _matrix(layer.weight),
            "bias": _floats(layer.bias),
            "activation": layer.activation,
            "batch_norm": None,
        }
        if layer.batch_norm:
            entry["batch_norm"] = {
                "gamma": _floats(layer.gamma),
                "beta": _floats(layer.beta),
                "running_mean": _floats(layer.running_mean),
                "running_var": _floats(layer.running_var),
            }
        layers.append(entry)
    return {
        "layer_dims": [net.input_dim] + [layer.fan_out for layer in net.layers],
        "layers": layers,
        "dropout_rate": net.dropout_rate,
        "bn_momentum": net.bn_momentum,
        "bn_eps": net.bn_eps,
    }


def network_from_dict(d):
    layers = []
    for entry in d["layers"]:
        w = np.array(entry["weight"], dtype=np.float64).reshape(-1, len(entry["bias"]))
        layer = DenseLayer(w, np.array(entry["bias"], dtype=np.float64), entry["activation"])
        bn = entry.get("batch_norm")
        if bn:
            for k in ("gamma", "beta", "running_mean", "running_var"):
                setattr(layer, k, np.array(bn[k], dtype=np.float64))
        layers.append(layer)
    return MlpNetwork(layers, d["dropout_rate"], "eval", d.get("bn_momentum", 0.9),
                      d.get("bn_eps", 1e-5))


def deepsurv_to_dict(model):
    return {
        "kind": "deepsurv",
        "network": network_to_dict(model.network),
        "feature_names": list(model.feature_names),
        "baseline": _baseline_to_dict(model.baseline),
        "diagnostics": {
            "train_loss": list(model.train_loss),
            "val_c_index": list(model.val_c_index),
            "best_epoch": model.best_epoch,
        },
    }


def deepsurv_from_dict(d):
    diag = d.get("diagnostics", {})
    return DeepSurvModel(
        network_from_dict(d["network"]),
        tuple(d["feature_names"]),
        list(diag.get("train_loss", [])),
        list(diag.get("val_c_index", [])),
        diag.get("best_epoch", 0),
        _baseline_from_dict(d.get("baseline")),
    )


def save_model(model, path):
    if isinstance(model, CoxModel):
        atomic_write(path, dumps(cox_to_dict(model)))
    elif isinstance(model, DeepSurvModel):
        atomic_write(path, dumps(deepsurv_to_dict(model)))
    else:
        raise TypeError(f"cannot save {type(model).__name__}")


def load_model(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = d.get("kind")
    if kind == "coxph":
        return cox_from_dict(d)
    if kind == "deepsurv":
        return deepsurv_from_dict(d)
    raise LatentSurvError(f"{path}: unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# latents and attributes


def latents_to_jsonl(ids, latents):
    lines = [json.dumps({"id": str(i), "z": _floats(z)}, allow_nan=False)
             for i, z in zip(ids, latents)]
    return "\n".join(lines) + "\n" if lines else ""


def save_latents(path, ids, latents):
    atomic_write(path, latents_to_jsonl(ids, latents))


def load_latents(path):
    """Return ``(ids, latents)`` from a JSON-lines file of ``{"id", "z"}`` records."""
    ids, zs = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if "id" not in rec or "z" not in rec:
            raise LatentSurvError(f"{path}: line {lineno}: expected keys 'id' and 'z'")
        if zs and len(rec["z"]) != len(zs[0]):
            raise LatentSurvError(f"{path}: line {lineno}: latent length differs from line 1")
        ids.append(str(rec["id"]))
        zs.append(rec["z"])
    if not ids:
        raise LatentSurvError(f"{path}: no latent records")
    return ids, np.array(zs, dtype=np.float64)


def attribute_to_dict(attr):
    return {"name": attr.name, "direction": _floats(attr.direction), "metadata": attr.metadata}


def save_attribute(path, attr):
    atomic_write(path, dumps(attribute_to_dict(attr)))


def load_attribute(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return Attribute(d["name"], np.array(d["direction"], dtype=np.float64), d.get("metadata", {}))


# ---------------------------------------------------------------------------
# images


def to_pgm(x, maxval=255):
    """Plain (P2) PGM of a flat vector reshaped row-major to a square.

    Values are min-max scaled per image; a constant image maps to 0.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    side = int(round(np.sqrt(x.size)))
    if side * side != x.size:
        raise LatentSurvError(f"cannot reshape {x.size} values to a square image")
    lo, hi = x.min(), x.max()
    scaled = np.zeros_like(x) if hi == lo else (x - lo) / (hi - lo)
    pix = np.rint(scaled * maxval).astype(int).reshape(side, side)
    rows = [" ".join(str(v) for v in row) for row in pix]
    return f"P2\n{side} {side}\n{maxval}\n" + "\n".join(rows) + "\n"


def read_pgm(path):
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise LatentSurvError(f"{path}: not a plain PGM")
    w, h, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)
