"""Adam with bias correction, as a pure function over model snapshots."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .network import PARAM_NAMES, DanModel


@dataclass(frozen=True)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: DanModel, **hyper) -> "AdamState":
        zeros = {n: np.zeros_like(getattr(model, n)) for n in PARAM_NAMES}
        return cls(m=zeros, v={n: z.copy() for n, z in zeros.items()}, **hyper)


def adam_step(model: DanModel, state: AdamState, grads: dict, lr: float):
    """One Adam update; returns ``(new_model, new_state)`` without touching the inputs."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = {}, {}, {}
    for name in PARAM_NAMES:
        p = getattr(model, name)
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        new_params[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    new_state = AdamState(m=new_m, v=new_v, t=t, beta1=b1, beta2=b2, eps=state.eps)
    return model.with_arrays(**new_params), new_state
