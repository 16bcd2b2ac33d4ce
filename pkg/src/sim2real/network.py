"""Two-headed tanh MLP with a gradient reversal layer in front of the domain head.

Layout::

    X --W1,b1--> tanh --+--Wc,bc--> softmax   (class head)
                        |
                        +--GRL(lambda)--Wd,bd--> softmax   (domain head)

The GRL is the identity going forward. Going backward it multiplies the
gradient by ``-lambda``, so the shared layer descends the class loss while
ascending the domain loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from sim2real.dataset import Schema, Standardizer
from sim2real.errors import ContractError, ShapeError, ValidationError
from sim2real.linalg import Rng, add_row, matmul, rand_uniform

PROB_CLAMP = 1e-12
PARAM_NAMES = ("W1", "b1", "Wc", "bc", "Wd", "bd")
CHECKPOINT_FORMAT = "sim2real-checkpoint/1"


@dataclass
class NetParams:
    W1: np.ndarray
    b1: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray
    Wd: np.ndarray
    bd: np.ndarray

    def __post_init__(self):
        d, h = self.W1.shape
        expected = {"b1": (h,), "Wc": (h, 2), "bc": (2,), "Wd": (h, 2), "bd": (2,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def h(self) -> int:
        return self.W1.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "NetParams":
        return NetParams(**{k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros_like(cls, other: "NetParams") -> "NetParams":
        return cls(**{k: np.zeros_like(v) for k, v in other.arrays().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


# gradients share the parameter layout
Grads = NetParams


class ForwardTrace(NamedTuple):
    hidden: np.ndarray
    class_probs: np.ndarray
    domain_probs: np.ndarray


class Losses(NamedTuple):
    class_loss: Optional[float]
    domain_loss: Optional[float]


def init(d: int, h: int, rng: Rng, scale_rule: str = "glorot_uniform") -> NetParams:
    """Glorot-uniform weights, zero biases. Draw order: W1, Wc, Wd."""
    if d < 1 or h < 1:
        raise ShapeError(f"need d, h >= 1, got d={d}, h={h}")
    if scale_rule != "glorot_uniform":
        raise ValueError(f"unknown scale rule {scale_rule!r}")

    def glorot(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rand_uniform(rng, fan_in, fan_out, -limit, limit)

    return NetParams(
        W1=glorot(d, h),
        b1=np.zeros(h),
        Wc=glorot(h, 2),
        bc=np.zeros(2),
        Wd=glorot(h, 2),
        bd=np.zeros(2),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def hidden_layer(p: NetParams, X: np.ndarray) -> np.ndarray:
    if X.ndim != 2 or X.shape[1] != p.d:
        raise ShapeError(f"network expects {p.d} features, got input of shape {X.shape}")
    return np.tanh(add_row(matmul(X, p.W1), p.b1))


def forward(p: NetParams, X: np.ndarray) -> ForwardTrace:
    hidden = hidden_layer(p, X)
    return ForwardTrace(
        hidden=hidden,
        class_probs=softmax(add_row(matmul(hidden, p.Wc), p.bc)),
        domain_probs=softmax(add_row(matmul(hidden, p.Wd), p.bd)),
    )


def _normalized_weights(weights: Optional[np.ndarray], n: int) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeError(f"weights shape {w.shape} does not match {n} rows")
    total = w.sum()
    if not total > 0:
        raise ValidationError("weights must have a positive total")
    return w / total


def cross_entropy(probs: np.ndarray, labels: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Normalized weighted mean of -log p(true class), p clamped away from 0 and 1."""
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows")
    w = _normalized_weights(weights, n)
    p_true = np.clip(probs[np.arange(n), labels], PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(w * np.log(p_true)).sum())


def class_loss(trace: ForwardTrace, labels, weights=None) -> float:
    return cross_entropy(trace.class_probs, labels, weights)


def domain_loss(trace: ForwardTrace, labels, weights=None) -> float:
    return cross_entropy(trace.domain_probs, labels, weights)


def grl(upstream_grad: np.ndarray, lam: float) -> np.ndarray:
    """Backward rule of the gradient reversal layer."""
    return -lam * upstream_grad


def grl_forward(x: np.ndarray) -> np.ndarray:
    return x


def _head_backward(hidden, probs, labels, weights, W):
    """Gradients of a softmax cross-entropy head w.r.t. its weights, bias and input."""
    n = probs.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows")
    w = _normalized_weights(weights, n)
    p_true = probs[np.arange(n), labels]
    # the clamp is flat outside [eps, 1-eps], so rows pinned there carry no gradient
    active = ((p_true > PROB_CLAMP) & (p_true < 1.0 - PROB_CLAMP)).astype(np.float64)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    dlogits = (probs - onehot) * (w * active)[:, np.newaxis]
    dW = matmul(hidden.T, dlogits)
    db = dlogits.sum(axis=0)
    dhidden = matmul(dlogits, W.T)
    return dW, db, dhidden


def backward(
    p: NetParams,
    X: np.ndarray,
    class_labels=None,
    class_weights=None,
    domain_labels=None,
    domain_weights=None,
    lam: float = 1.0,
    X_domain: Optional[np.ndarray] = None,
) -> tuple[Grads, Losses]:
    """Exact gradients of class_loss(X) + domain_loss(X_domain).

    The domain head's gradient reaches W1/b1 only through ``grl``, i.e.
    scaled by ``-lam``. ``X_domain`` defaults to ``X``; the class and domain
    batches may be different rows. Heads without labels get zero gradients.
    """
    if class_labels is None and domain_labels is None:
        raise ContractError("backward needs class labels, domain labels, or both")
    grads = Grads.zeros_like(p)
    c_loss = d_loss = None

    if class_labels is not None:
        hidden = hidden_layer(p, X)
        probs = softmax(add_row(matmul(hidden, p.Wc), p.bc))
        c_loss = cross_entropy(probs, class_labels, class_weights)
        grads.Wc, grads.bc, dh = _head_backward(hidden, probs, class_labels, class_weights, p.Wc)
        dz = dh * (1.0 - hidden**2)
        grads.W1 = matmul(X.T, dz)
        grads.b1 = dz.sum(axis=0)

    if domain_labels is not None:
        Xd = X if X_domain is None else X_domain
        hidden_d = hidden_layer(p, Xd)
        probs_d = softmax(add_row(matmul(hidden_d, p.Wd), p.bd))
        d_loss = cross_entropy(probs_d, domain_labels, domain_weights)
        grads.Wd, grads.bd, dh_d = _head_backward(hidden_d, probs_d, domain_labels, domain_weights, p.Wd)
        dz_d = grl(dh_d, lam) * (1.0 - hidden_d**2)
        grads.W1 = grads.W1 + matmul(Xd.T, dz_d)
        grads.b1 = grads.b1 + dz_d.sum(axis=0)

    return grads, Losses(c_loss, d_loss)


def save_checkpoint(
    path: str | Path,
    params: NetParams,
    standardizer: Standardizer,
    schema: Schema,
    extra: Optional[dict] = None,
) -> None:
    """JSON checkpoint; floats are written with shortest round-trip repr (bit-exact)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "hidden": params.h,
        "input_dim": params.d,
        "shapes": {k: list(v.shape) for k, v in params.arrays().items()},
        "params": {k: [float(x) for x in v.ravel(order="C")] for k, v in params.arrays().items()},
        "standardizer": standardizer.to_dict(),
        "schema": {
            "features": list(schema.feature_columns),
            "label": schema.label_column,
            "weight": schema.weight_column,
            "id": schema.id_column,
        },
        "schema_fingerprint": schema.fingerprint,
    }
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


class Checkpoint(NamedTuple):
    params: NetParams
    standardizer: Standardizer
    schema: Schema
    fingerprint: str
    meta: dict


def load_checkpoint(path: str | Path) -> Checkpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    arrays = {
        k: np.array(doc["params"][k], dtype=np.float64).reshape(doc["shapes"][k]) for k in PARAM_NAMES
    }
    s = doc["schema"]
    schema = Schema(tuple(s["features"]), s.get("label"), s.get("weight"), s.get("id"))
    if schema.fingerprint != doc["schema_fingerprint"]:
        raise ValidationError(f"{path}: schema fingerprint does not match its feature list")
    return Checkpoint(
        params=NetParams(**arrays),
        standardizer=Standardizer.from_dict(doc["standardizer"]),
        schema=schema,
        fingerprint=doc["schema_fingerprint"],
        meta=doc.get("meta", {}),
    )
