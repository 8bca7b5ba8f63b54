"""Small UNet denoisers (1D and 2D) with timestep embedding.

Both nets take the noisy data with conditioning features concatenated along
channels, embed the diffusion step sinusoidally, and inject it as a
per-channel bias inside each residual block. Encoder/decoder use one
down/up level; widths are configurable (defaults 64/128).
"""

from __future__ import annotations

import numpy as np

from ..numerics import OptimState, adam_step, rng
from ..numerics.tensor import Tensor, concat, conv1d, conv2d, no_grad, upsample_nearest
from .schedule import DiffusionSchedule, make_schedule

T_EMBED_DIM = 32


def sinusoidal_embedding(t, dim: int = T_EMBED_DIM) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(np.float32)


def _conv_w(g, cout, cin, *k):
    fan = cin * int(np.prod(k)) if k else cin
    return (g.standard_normal((cout, cin) + k) * np.sqrt(2.0 / fan)).astype(np.float32)


def _dense_w(g, cin, cout):
    return (g.standard_normal((cin, cout)) * np.sqrt(2.0 / cin)).astype(np.float32)


class DenoiserBase:
    """Param dict + Adam state + schedule; subclasses define forward_t."""

    def __init__(self, sched: DiffusionSchedule, lr: float = 1e-4):
        self.sched = sched
        self.params: dict[str, np.ndarray] = {}
        self.opt: OptimState | None = None
        self.steps_trained = 0
        self._lr = lr

    def _finish_init(self):
        self.opt = OptimState.for_params(self.params, lr=self._lr)

    def wrap_params(self) -> dict:
        return {k: Tensor(v, requires_grad=True) for k, v in self.params.items()}

    def apply_grads(self, wrapped: dict):
        grads = {k: (w.grad if w.grad is not None else np.zeros_like(w.data))
                 for k, w in wrapped.items()}
        self.params, self.opt = adam_step(self.params, grads, self.opt)
        self.steps_trained += 1

    def predict_eps(self, x: np.ndarray, t, cond) -> np.ndarray:
        tb = np.full(x.shape[0], int(t)) if np.isscalar(t) else np.asarray(t)
        with no_grad():
            out = self.forward_t(x, tb, cond, None)
        return out.data

    def _p(self, wrapped, key) -> Tensor:
        if wrapped is None:
            return Tensor(self.params[key])
        return wrapped[key]

    # subclasses: forward_t(x, t, cond, wrapped) -> Tensor

    def state_meta(self) -> dict:
        return {"steps_trained": self.steps_trained}


def _res_params(g, params, name, cin, c, kernel, conv_nd, t_hidden):
    mk = (kernel,) if conv_nd == 1 else (kernel, kernel)
    params[f"{name}.w1"] = _conv_w(g, c, cin, *mk)
    params[f"{name}.b1"] = np.zeros(c, dtype=np.float32)
    params[f"{name}.wt"] = _dense_w(g, t_hidden, c)
    params[f"{name}.bt"] = np.zeros(c, dtype=np.float32)
    params[f"{name}.w2"] = _conv_w(g, c, c, *mk)
    params[f"{name}.b2"] = np.zeros(c, dtype=np.float32)
    if cin != c:
        params[f"{name}.wp"] = _conv_w(g, c, cin, *((1,) if conv_nd == 1 else (1, 1)))
        params[f"{name}.bp"] = np.zeros(c, dtype=np.float32)


class DenoiserUNet1D(DenoiserBase):
    """x (B, data_ch, N); cond (B, cond_ch, N) concatenated on channels."""

    def __init__(self, data_ch: int, cond_ch: int, widths=(64, 128), T: int = 300,
                 sched_kind: str = "linear", lr: float = 1e-4, seed: int = 0):
        super().__init__(make_schedule(T, sched_kind), lr)
        self.data_ch, self.cond_ch = data_ch, cond_ch
        self.widths = tuple(widths)
        c0, c1 = self.widths
        th = c1
        self.t_hidden = th
        g = rng.stream(seed, 0x10D)
        p = self.params
        p["in.w"] = _conv_w(g, c0, data_ch + cond_ch, 3)
        p["in.b"] = np.zeros(c0, dtype=np.float32)
        p["temb.w1"] = _dense_w(g, T_EMBED_DIM, th)
        p["temb.b1"] = np.zeros(th, dtype=np.float32)
        p["temb.w2"] = _dense_w(g, th, th)
        p["temb.b2"] = np.zeros(th, dtype=np.float32)
        _res_params(g, p, "enc1", c0, c0, 3, 1, th)
        p["down.w"] = _conv_w(g, c1, c0, 3)
        p["down.b"] = np.zeros(c1, dtype=np.float32)
        _res_params(g, p, "enc2", c1, c1, 3, 1, th)
        p["up.w"] = _conv_w(g, c0, c1, 3)
        p["up.b"] = np.zeros(c0, dtype=np.float32)
        _res_params(g, p, "dec1", 2 * c0, c0, 3, 1, th)
        p["out.w"] = (g.standard_normal((data_ch, c0, 3)) * 1e-3).astype(np.float32)
        p["out.b"] = np.zeros(data_ch, dtype=np.float32)
        self._finish_init()

    def _res(self, x, name, temb, w):
        h = conv1d(x, self._p(w, f"{name}.w1"), self._p(w, f"{name}.b1"))
        bias = temb @ self._p(w, f"{name}.wt") + self._p(w, f"{name}.bt")
        h = h + bias.reshape(bias.shape[0], bias.shape[1], 1)
        h = h.elu()
        h = conv1d(h, self._p(w, f"{name}.w2"), self._p(w, f"{name}.b2"))
        if f"{name}.wp" in self.params:
            x = conv1d(x, self._p(w, f"{name}.wp"), self._p(w, f"{name}.bp"), padding=0)
        return (h + x).elu()

    def forward_t(self, xt, t, cond_feat, wrapped) -> Tensor:
        w = wrapped
        x = np.concatenate([np.asarray(xt, dtype=np.float32),
                            np.asarray(cond_feat, dtype=np.float32)], axis=1)
        temb_in = sinusoidal_embedding(t)
        temb = (Tensor(temb_in) @ self._p(w, "temb.w1") + self._p(w, "temb.b1")).elu()
        temb = temb @ self._p(w, "temb.w2") + self._p(w, "temb.b2")

        h0 = conv1d(Tensor(x), self._p(w, "in.w"), self._p(w, "in.b"))
        e1 = self._res(h0, "enc1", temb, w)
        e2 = self._res(conv1d(e1, self._p(w, "down.w"), self._p(w, "down.b"), stride=2),
                       "enc2", temb, w)
        u = upsample_nearest(e2, 2, axes=2)
        u = conv1d(u, self._p(w, "up.w"), self._p(w, "up.b"))
        if u.shape[2] != e1.shape[2]:
            u = u[:, :, :e1.shape[2]]
        d1 = self._res(concat([u, e1], axis=1), "dec1", temb, w)
        return conv1d(d1, self._p(w, "out.w"), self._p(w, "out.b"))


class DenoiserUNet2D(DenoiserBase):
    """x (B, data_ch, H, W); cond (B, cond_ch, H, W)."""

    def __init__(self, data_ch: int, cond_ch: int, widths=(32, 64), T: int = 150,
                 sched_kind: str = "linear", lr: float = 1e-4, seed: int = 0):
        super().__init__(make_schedule(T, sched_kind), lr)
        self.data_ch, self.cond_ch = data_ch, cond_ch
        self.widths = tuple(widths)
        c0, c1 = self.widths
        th = c1
        self.t_hidden = th
        g = rng.stream(seed, 0x20D)
        p = self.params
        p["in.w"] = _conv_w(g, c0, data_ch + cond_ch, 3, 3)
        p["in.b"] = np.zeros(c0, dtype=np.float32)
        p["temb.w1"] = _dense_w(g, T_EMBED_DIM, th)
        p["temb.b1"] = np.zeros(th, dtype=np.float32)
        p["temb.w2"] = _dense_w(g, th, th)
        p["temb.b2"] = np.zeros(th, dtype=np.float32)
        _res_params(g, p, "enc1", c0, c0, 3, 2, th)
        p["down.w"] = _conv_w(g, c1, c0, 3, 3)
        p["down.b"] = np.zeros(c1, dtype=np.float32)
        _res_params(g, p, "enc2", c1, c1, 3, 2, th)
        p["up.w"] = _conv_w(g, c0, c1, 3, 3)
        p["up.b"] = np.zeros(c0, dtype=np.float32)
        _res_params(g, p, "dec1", 2 * c0, c0, 3, 2, th)
        _res_params(g, p, "dec2", c0, c0, 3, 2, th)
        p["out.w"] = (g.standard_normal((data_ch, c0, 3, 3)) * 1e-3).astype(np.float32)
        p["out.b"] = np.zeros(data_ch, dtype=np.float32)
        self._finish_init()

    def _res(self, x, name, temb, w):
        h = conv2d(x, self._p(w, f"{name}.w1"), self._p(w, f"{name}.b1"))
        bias = temb @ self._p(w, f"{name}.wt") + self._p(w, f"{name}.bt")
        h = h + bias.reshape(bias.shape[0], bias.shape[1], 1, 1)
        h = h.elu()
        h = conv2d(h, self._p(w, f"{name}.w2"), self._p(w, f"{name}.b2"))
        if f"{name}.wp" in self.params:
            x = conv2d(x, self._p(w, f"{name}.wp"), self._p(w, f"{name}.bp"), padding=0)
        return (h + x).elu()

    def forward_t(self, xt, t, cond_feat, wrapped) -> Tensor:
        w = wrapped
        x = np.concatenate([np.asarray(xt, dtype=np.float32),
                            np.asarray(cond_feat, dtype=np.float32)], axis=1)
        temb_in = sinusoidal_embedding(t)
        temb = (Tensor(temb_in) @ self._p(w, "temb.w1") + self._p(w, "temb.b1")).elu()
        temb = temb @ self._p(w, "temb.w2") + self._p(w, "temb.b2")

        h0 = conv2d(Tensor(x), self._p(w, "in.w"), self._p(w, "in.b"))
        e1 = self._res(h0, "enc1", temb, w)
        e2 = self._res(conv2d(e1, self._p(w, "down.w"), self._p(w, "down.b"), stride=2),
                       "enc2", temb, w)
        u = upsample_nearest(e2, 2, axes=(2, 3))
        u = conv2d(u, self._p(w, "up.w"), self._p(w, "up.b"))
        if u.shape[2] != e1.shape[2] or u.shape[3] != e1.shape[3]:
            u = u[:, :, :e1.shape[2], :e1.shape[3]]
        d1 = self._res(concat([u, e1], axis=1), "dec1", temb, w)
        d2 = self._res(d1, "dec2", temb, w)
        return conv2d(d2, self._p(w, "out.w"), self._p(w, "out.b"))
