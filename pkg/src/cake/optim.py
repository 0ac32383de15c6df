"""Adam with bias correction, operating in place on parameter tensor lists.

No weight decay, no gradient clipping, no learning-rate schedule: the update
is exactly

    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def adam_init(
    tensors: list[np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    if not lr > 0:
        raise ValueError(f"adam: lr must be > 0, got {lr}")
    if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
        raise ValueError(f"adam: betas must be in [0,1), got {beta1}, {beta2}")
    if not eps > 0:
        raise ValueError(f"adam: eps must be > 0, got {eps}")
    return AdamState(
        m=[np.zeros_like(t) for t in tensors],
        v=[np.zeros_like(t) for t in tensors],
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state: AdamState, tensors: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One update, in place on the parameter tensors."""
    if len(tensors) != len(state.m) or len(grads) != len(state.m):
        raise ValueError(
            f"adam: got {len(tensors)} tensors / {len(grads)} grads, "
            f"state holds {len(state.m)}"
        )
    for i, g in enumerate(grads):
        if g.shape != state.m[i].shape:
            raise ValueError(
                f"adam: grad {i} shape {g.shape} != state shape {state.m[i].shape}"
            )
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam: non-finite gradient in tensor {i}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for theta, g, m, v in zip(tensors, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        theta -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
