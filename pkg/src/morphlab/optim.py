"""Adam with bias correction over lists of numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params, grads, state: AdamState):
    """Apply one Adam update. Returns ``(new_params, state)``.

    Moment buffers are allocated lazily on the first call; ``state`` is
    updated in place.
    """
    params = [np.asarray(p) for p in params]
    grads = [np.asarray(g) for g in grads]
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeError(f"adam_step: state tracks {len(state.m)} params, got {len(params)}")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_step: shape mismatch {p.shape}, {g.shape}, {m.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1 ** t)
        v_hat = state.v[i] / (1 - b2 ** t)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out, state
