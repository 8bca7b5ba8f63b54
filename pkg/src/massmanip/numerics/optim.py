"""Adam optimizer over lists or dicts of parameter arrays.

`adam_step` is functional: it returns fresh parameter arrays and a fresh
state, leaving its inputs untouched, so callers can treat every training
step as an immutable snapshot transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeError


def _leaves(tree):
    if isinstance(tree, dict):
        return [tree[k] for k in sorted(tree)]
    return list(tree)


def _rebuild(tree, leaves):
    if isinstance(tree, dict):
        return {k: v for k, v in zip(sorted(tree), leaves)}
    return type(tree)(leaves) if isinstance(tree, (list, tuple)) else leaves


@dataclass
class OptimState:
    """Per-parameter Adam moments plus hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @staticmethod
    def for_params(params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "OptimState":
        leaves = _leaves(params)
        return OptimState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                          m=[np.zeros_like(p) for p in leaves],
                          v=[np.zeros_like(p) for p in leaves])


def adam_step(params, grads, state: OptimState):
    """One bias-corrected Adam update. Returns (params', state')."""
    p_leaves = _leaves(params)
    g_leaves = _leaves(grads)
    if len(p_leaves) != len(g_leaves):
        raise ShapeError(f"adam_step: {len(p_leaves)} params vs {len(g_leaves)} grads")
    for p, g in zip(p_leaves, g_leaves):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param shape {p.shape} vs grad shape {g.shape}")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_leaves, g_leaves, state.m, state.v):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * (g * g)
        update = (state.lr / bc1) * m2 / (np.sqrt(v2 / bc2) + state.eps)
        new_p.append((p - update).astype(p.dtype, copy=False))
        new_m.append(m2.astype(p.dtype, copy=False))
        new_v.append(v2.astype(p.dtype, copy=False))
    state2 = replace(state, step=t, m=new_m, v=new_v)
    return _rebuild(params, new_p), state2
