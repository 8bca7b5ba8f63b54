"""Network layer specs, initialization, and the sequential evaluator.

A NetworkSpec is an ordered stack of dense / conv1d / conv2d /
residual-block layers. The denoiser UNets compose these primitives with
long skip connections in their own modules; everything here is plain
sequential so that shapes and parameter counts are auditable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import rng
from .tensor import Tensor, as_tensor, conv1d, conv2d

KINDS = ("dense", "conv1d", "conv2d", "residual-block")
ACTIVATIONS = ("elu", "sigmoid", "none")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int              # output features (dense) or output channels (conv)
    kernel: int = 3
    activation: str = "none"
    stride: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """input_shape is per-sample: (F,) dense, (C, N) conv1d, (C, H, W) conv2d."""

    input_shape: tuple
    layers: tuple

    def layer_shapes(self) -> list:
        """Per-sample output shape after every layer; raises if shapes do not compose."""
        shapes = []
        cur = tuple(self.input_shape)
        for i, l in enumerate(self.layers):
            kind = _effective_kind(l, cur)
            if kind == "dense":
                if len(cur) != 1:
                    raise ShapeError(f"layer {i}: dense needs rank-1 input, got {cur}")
                cur = (l.width,)
            elif kind == "conv1d":
                if len(cur) != 2:
                    raise ShapeError(f"layer {i}: conv1d needs (C, N) input, got {cur}")
                cur = (l.width, _conv_len(cur[1], l.kernel, l.stride))
            elif kind == "conv2d":
                if len(cur) != 3:
                    raise ShapeError(f"layer {i}: conv2d needs (C, H, W) input, got {cur}")
                cur = (l.width, _conv_len(cur[1], l.kernel, l.stride), _conv_len(cur[2], l.kernel, l.stride))
            shapes.append(cur)
        return shapes

    def param_shapes(self) -> list:
        """Per-layer list of parameter array shapes."""
        out = []
        cur = tuple(self.input_shape)
        for l, nxt in zip(self.layers, self.layer_shapes()):
            out.append(_layer_param_shapes(l, cur))
            cur = nxt
        return out

    def param_count(self) -> int:
        return int(sum(np.prod(s) for layer in self.param_shapes() for s in layer))

    def to_json(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [{"kind": l.kind, "width": l.width, "kernel": l.kernel,
                        "activation": l.activation, "stride": l.stride} for l in self.layers],
        }

    @staticmethod
    def from_json(d: dict) -> "NetworkSpec":
        return NetworkSpec(tuple(d["input_shape"]), tuple(LayerSpec(**l) for l in d["layers"]))


def _conv_len(n: int, k: int, stride: int) -> int:
    p = (k - 1) // 2
    return (n + 2 * p - k) // stride + 1


def _effective_kind(l: LayerSpec, in_shape: tuple) -> str:
    if l.kind != "residual-block":
        return l.kind
    # residual blocks adapt to the input rank
    return {1: "dense", 2: "conv1d", 3: "conv2d"}[len(in_shape)]


def _layer_param_shapes(l: LayerSpec, in_shape: tuple) -> list:
    kind = _effective_kind(l, in_shape)
    cin = in_shape[0]
    if l.kind == "residual-block":
        # a strided block cannot use an identity skip even at equal widths
        project = cin != l.width or (kind != "dense" and l.stride != 1)
        if kind == "dense":
            shapes = [(cin, l.width), (l.width,), (l.width, l.width), (l.width,)]
            if project:
                shapes += [(cin, l.width), (l.width,)]
        elif kind == "conv1d":
            shapes = [(l.width, cin, l.kernel), (l.width,), (l.width, l.width, l.kernel), (l.width,)]
            if project:
                shapes += [(l.width, cin, 1), (l.width,)]
        else:
            shapes = [(l.width, cin, l.kernel, l.kernel), (l.width,),
                      (l.width, l.width, l.kernel, l.kernel), (l.width,)]
            if project:
                shapes += [(l.width, cin, 1, 1), (l.width,)]
        return shapes
    if kind == "dense":
        return [(cin, l.width), (l.width,)]
    if kind == "conv1d":
        return [(l.width, cin, l.kernel), (l.width,)]
    return [(l.width, cin, l.kernel, l.kernel), (l.width,)]


def init_params(spec: NetworkSpec, seed: int = 0) -> list:
    """He-style init per layer, deterministic in (seed, layer index)."""
    params = []
    for i, shapes in enumerate(spec.param_shapes()):
        g = rng.stream(seed, 7001, i)
        layer_params = []
        for s in shapes:
            if len(s) == 1:
                layer_params.append(np.zeros(s, dtype=np.float32))
            else:
                fan_in = int(np.prod(s[1:])) if len(s) > 2 else s[0]
                std = np.sqrt(2.0 / fan_in)
                layer_params.append((g.standard_normal(s) * std).astype(np.float32))
        params.append(layer_params)
    total = sum(p.size for layer in params for p in layer)
    assert total == spec.param_count()
    return params


def _activate(x: Tensor, name: str) -> Tensor:
    if name == "elu":
        return x.elu()
    if name == "sigmoid":
        return x.sigmoid()
    return x


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return x @ w + b


def _apply_layer(l: LayerSpec, lp: list, x: Tensor, in_shape: tuple) -> Tensor:
    kind = _effective_kind(l, in_shape)
    if l.kind == "residual-block":
        w1, b1, w2, b2 = lp[0], lp[1], lp[2], lp[3]
        if kind == "dense":
            h = dense(x, w1, b1).elu()
            h = dense(h, w2, b2)
            skip = x if len(lp) == 4 else dense(x, lp[4], lp[5])
        elif kind == "conv1d":
            h = conv1d(x, w1, b1, stride=l.stride).elu()
            h = conv1d(h, w2, b2)
            skip = x if len(lp) == 4 else conv1d(x, lp[4], lp[5], stride=l.stride)
        else:
            h = conv2d(x, w1, b1, stride=l.stride).elu()
            h = conv2d(h, w2, b2)
            skip = x if len(lp) == 4 else conv2d(x, lp[4], lp[5], stride=l.stride)
        return _activate(h + skip, l.activation)
    if kind == "dense":
        return _activate(dense(x, lp[0], lp[1]), l.activation)
    if kind == "conv1d":
        return _activate(conv1d(x, lp[0], lp[1], stride=l.stride), l.activation)
    return _activate(conv2d(x, lp[0], lp[1], stride=l.stride), l.activation)


def evaluate_network(spec: NetworkSpec, params: list, x) -> Tensor:
    """Run the sequential stack on a batch x of shape (B, *input_shape)."""
    x = as_tensor(x)
    expected = tuple(spec.input_shape)
    if tuple(x.shape[1:]) != expected:
        raise ShapeError(f"network input shape {tuple(x.shape[1:])} does not match spec {expected}")
    if len(params) != len(spec.layers):
        raise ShapeError(f"{len(params)} param groups for {len(spec.layers)} layers")
    cur_shape = expected
    for l, lp, out_shape in zip(spec.layers, params, spec.layer_shapes()):
        tp = [p if isinstance(p, Tensor) else Tensor(p) for p in lp]
        x = _apply_layer(l, tp, x, cur_shape)
        cur_shape = out_shape
    return x
