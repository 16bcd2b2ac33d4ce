"""Adam and plain SGD over parameter containers.

Both work on a ``NetParams`` or on a plain ``dict`` of arrays; the update is
applied per named array and a container of the same kind is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from sim2real.errors import ConfigError, NumericError, ShapeError
from sim2real.network import NetParams

Params = Union[NetParams, dict]


def _items(params: Params) -> dict[str, np.ndarray]:
    return params.arrays() if isinstance(params, NetParams) else dict(params)


def _rebuild(like: Params, arrays: dict[str, np.ndarray]) -> Params:
    return NetParams(**arrays) if isinstance(like, NetParams) else arrays


def _check(params: dict, grads: dict) -> None:
    if params.keys() != grads.keys():
        raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    for k, g in grads.items():
        if np.shape(g) != np.shape(params[k]):
            raise ShapeError(f"gradient {k} has shape {np.shape(g)}, parameter has {np.shape(params[k])}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {k}; step refused")


@dataclass(frozen=True)
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.t < 0:
            raise ConfigError("step counter must be >= 0")


def adam_init(params: Params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    arrays = _items(params)
    zeros = {k: np.zeros(np.shape(v)) for k, v in arrays.items()}
    return AdamState(
        m=zeros,
        v={k: z.copy() for k, z in zeros.items()},
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(state: AdamState, params: Params, grads: Params) -> tuple[AdamState, Params]:
    """One bias-corrected Adam update with epsilon outside the square root."""
    p, g = _items(params), _items(grads)
    _check(p, g)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    m, v, new = {}, {}, {}
    for k in p:
        m[k] = b1 * state.m[k] + (1.0 - b1) * g[k]
        v[k] = b2 * state.v[k] + (1.0 - b2) * g[k] * g[k]
        m_hat = m[k] / corr1
        v_hat = v[k] / corr2
        new[k] = p[k] - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    next_state = AdamState(m, v, t, state.lr, b1, b2, state.epsilon)
    return next_state, _rebuild(params, new)


def sgd_step(params: Params, grads: Params, lr: float) -> Params:
    if not lr > 0:
        raise ConfigError(f"lr must be > 0, got {lr}")
    p, g = _items(params), _items(grads)
    _check(p, g)
    return _rebuild(params, {k: p[k] - lr * g[k] for k in p})
