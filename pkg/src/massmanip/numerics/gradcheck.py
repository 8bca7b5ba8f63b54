"""Backprop driver and central-difference gradient verification."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from . import rng
from .layers import NetworkSpec, evaluate_network
from .tensor import Tensor


def _wrap_params(params, dtype=None):
    """Mirror a (possibly nested) param structure as requires_grad Tensors."""
    if isinstance(params, np.ndarray):
        return Tensor(params if dtype is None else params.astype(dtype), requires_grad=True)
    if isinstance(params, dict):
        return {k: _wrap_params(v, dtype) for k, v in params.items()}
    return [_wrap_params(p, dtype) for p in params]


def _grad_leaves(wrapped):
    if isinstance(wrapped, Tensor):
        g = wrapped.grad
        return [np.zeros_like(wrapped.data) if g is None else g]
    if isinstance(wrapped, dict):
        return [g for k in wrapped for g in _grad_leaves(wrapped[k])]
    return [g for w in wrapped for g in _grad_leaves(w)]


def _array_leaves(params):
    if isinstance(params, np.ndarray):
        return [params]
    if isinstance(params, dict):
        return [a for k in params for a in _array_leaves(params[k])]
    return [a for p in params for a in _array_leaves(p)]


def _rebuild_like(params, leaves, it=None):
    if it is None:
        it = iter(leaves)
        return _rebuild_like(params, leaves, it)
    if isinstance(params, np.ndarray):
        return next(it)
    if isinstance(params, dict):
        return {k: _rebuild_like(v, leaves, it) for k, v in params.items()}
    return [_rebuild_like(p, leaves, it) for p in params]


def backprop_gradients(spec: NetworkSpec, params, loss_fn, batch):
    """Gradients of a scalar loss w.r.t. every parameter of a sequential net.

    loss_fn(output: Tensor, batch) must return a scalar Tensor built from
    autodiff primitives. Gradients come back in the same nesting as params.
    """
    wrapped = _wrap_params(params)
    x = batch[0] if isinstance(batch, tuple) else batch
    out = evaluate_network(spec, wrapped, x)
    loss = loss_fn(out, batch)
    val = float(loss.data)
    if not np.isfinite(val):
        raise NumericError(f"non-finite loss {val!r} in backprop_gradients")
    loss.backward()
    leaves = _grad_leaves(wrapped)
    return _rebuild_like(params, leaves)


def gradients(loss: Tensor, wrapped_params):
    """Backward pass over an already-built graph; returns grads per leaf."""
    val = float(loss.data)
    if not np.isfinite(val):
        raise NumericError(f"non-finite loss {val!r}")
    loss.backward()
    return _grad_leaves(wrapped_params)


def finite_difference_check(loss_of_params, params, tolerance: float = 1e-3,
                            h: float = 1e-4, min_sample: int = 100, seed: int = 0):
    """Compare analytic gradients against central differences.

    loss_of_params(wrapped) -> scalar Tensor, where `wrapped` mirrors
    `params` as Tensors. Runs in float64: with h=1e-4 the float32 forward
    noise would be the same order as the tolerance, which would test the
    arithmetic precision rather than the gradient math. Checks a random
    subsample of at least `min_sample` parameter entries (all if fewer).
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    wrapped = _wrap_params(params, dtype=np.float64)
    loss = loss_of_params(wrapped)
    analytic_leaves = gradients(loss, wrapped)

    tensor_leaves = _tensor_leaves(wrapped)
    sizes = [t.data.size for t in tensor_leaves]
    total = int(np.sum(sizes))
    n_check = total if total <= min_sample else min_sample
    g = rng.stream(seed, 424242)
    picks = g.choice(total, size=n_check, replace=False) if n_check < total else np.arange(total)

    bounds = np.cumsum([0] + sizes)
    max_rel = 0.0
    for flat_idx in np.sort(picks):
        leaf = int(np.searchsorted(bounds, flat_idx, side="right") - 1)
        local = int(flat_idx - bounds[leaf])
        t = tensor_leaves[leaf]
        orig = t.data.reshape(-1)[local]
        t.data.reshape(-1)[local] = orig + h
        lp = float(loss_of_params(_clone_structure(wrapped)).data)
        t.data.reshape(-1)[local] = orig - h
        lm = float(loss_of_params(_clone_structure(wrapped)).data)
        t.data.reshape(-1)[local] = orig
        fd = (lp - lm) / (2.0 * h)
        an = float(analytic_leaves[leaf].reshape(-1)[local])
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        max_rel = max(max_rel, rel)
    return {"max_rel_err": max_rel, "pass": bool(max_rel < tolerance), "checked": int(n_check)}


def _tensor_leaves(wrapped):
    if isinstance(wrapped, Tensor):
        return [wrapped]
    if isinstance(wrapped, dict):
        return [t for k in wrapped for t in _tensor_leaves(wrapped[k])]
    return [t for w in wrapped for t in _tensor_leaves(w)]


def _clone_structure(wrapped):
    """Fresh non-grad Tensors sharing data (FD re-evaluations skip the tape)."""
    if isinstance(wrapped, Tensor):
        return Tensor(wrapped.data)
    if isinstance(wrapped, dict):
        return {k: _clone_structure(v) for k, v in wrapped.items()}
    return [_clone_structure(w) for w in wrapped]


def finite_difference_check_network(spec: NetworkSpec, params, loss_fn, batch,
                                    tolerance: float = 1e-3, h: float = 1e-4, seed: int = 0):
    """finite_difference_check specialised to a sequential NetworkSpec."""
    x = batch[0] if isinstance(batch, tuple) else batch
    x64 = np.asarray(x, dtype=np.float64)
    batch64 = (x64,) + tuple(batch[1:]) if isinstance(batch, tuple) else x64

    def loss_of_params(wrapped):
        out = evaluate_network(spec, wrapped, Tensor(x64))
        return loss_fn(out, batch64)

    return finite_difference_check(loss_of_params, params, tolerance=tolerance, h=h, seed=seed)
