"""Numpy inference engine for the small UNet epsilon predictor.

The operator set is deliberately tiny so weights trained elsewhere run here
with no framework dependency: 3x3 convolutions (stride 1 and 2), GroupNorm,
SiLU, nearest-neighbor x2 upsampling, and a sinusoidal timestep embedding
passed through a two-layer MLP and injected per residual block.

Architecture "unet-small-v1" (three resolutions n, n/2, n/4):

    conv_in: 1 -> C
    down0.res (C -> C),   down0.down (stride 2)
    down1.res (C -> 2C),  down1.down (stride 2)
    mid.res   (2C -> 2C)
    up1.up (nearest x2 + conv), up1.res (concat skip: 4C -> 2C)
    up0.up (nearest x2 + conv), up0.res (concat skip: 3C -> C)
    out.norm + SiLU + out.conv: C -> 1

Residual blocks are pre-activation GroupNorm/SiLU/conv pairs with the time
embedding added between the convolutions and a 1x1 skip projection whenever
the channel count changes. All GroupNorms use `groups` groups and eps 1e-5.
"""

from __future__ import annotations

import numpy as np

__all__ = ["UNetSmall", "sinusoidal_embedding", "tensor_inventory"]

_EPS = 1e-5


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Classic sin/cos positional embedding of timestep(s) t, shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """NCHW conv with 3x3 or 1x1 kernels, padding (k-1)//2, via im2col."""
    n_b, c_in, h, wd = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if c_in != c_in_w:
        raise ValueError(f"input has {c_in} channels, kernel expects {c_in_w}")
    pad = (kh - 1) // 2
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h_out = (h + 2 * pad - kh) // stride + 1
    w_out = (wd + 2 * pad - kw) // stride + 1
    # gather all kh*kw shifted views, then one big matmul
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, shape=(n_b, c_in, h_out, w_out, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3), writeable=False)
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(n_b * h_out * w_out, c_in * kh * kw)
    out = cols @ w.reshape(c_out, -1).T + b[None, :]
    return out.reshape(n_b, h_out, w_out, c_out).transpose(0, 3, 1, 2)


def group_norm(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, groups: int) -> np.ndarray:
    n_b, c, h, w = x.shape
    if c % groups:
        raise ValueError(f"{c} channels not divisible into {groups} groups")
    g = x.reshape(n_b, groups, c // groups * h * w)
    mean = g.mean(axis=2, keepdims=True)
    var = g.var(axis=2, keepdims=True)
    g = (g - mean) / np.sqrt(var + _EPS)
    return g.reshape(n_b, c, h, w) * weight[None, :, None, None] + bias[None, :, None, None]


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3)


def _res_names(prefix: str, c_in: int, c_out: int) -> dict:
    names = {
        "norm1.weight": (c_in,), "norm1.bias": (c_in,),
        "conv1.weight": (c_out, c_in, 3, 3), "conv1.bias": (c_out,),
        "temb.weight": None, "temb.bias": (c_out,),   # temb in-dim filled later
        "norm2.weight": (c_out,), "norm2.bias": (c_out,),
        "conv2.weight": (c_out, c_out, 3, 3), "conv2.bias": (c_out,),
    }
    if c_in != c_out:
        names["skip.weight"] = (c_out, c_in, 1, 1)
        names["skip.bias"] = (c_out,)
    return {f"{prefix}.{k}": v for k, v in names.items()}


def tensor_inventory(base_channels: int = 32, temb_dim: int | None = None) -> dict:
    """name -> shape for every tensor of unet-small-v1 at the given width."""
    c = base_channels
    td = temb_dim if temb_dim is not None else 4 * c
    inv = {
        "time.lin1.weight": (td, c), "time.lin1.bias": (td,),
        "time.lin2.weight": (td, td), "time.lin2.bias": (td,),
        "conv_in.weight": (c, 1, 3, 3), "conv_in.bias": (c,),
    }
    inv.update(_res_names("down0.res", c, c))
    inv.update({"down0.down.weight": (c, c, 3, 3), "down0.down.bias": (c,)})
    inv.update(_res_names("down1.res", c, 2 * c))
    inv.update({"down1.down.weight": (2 * c, 2 * c, 3, 3), "down1.down.bias": (2 * c,)})
    inv.update(_res_names("mid.res", 2 * c, 2 * c))
    inv.update({"up1.up.weight": (2 * c, 2 * c, 3, 3), "up1.up.bias": (2 * c,)})
    inv.update(_res_names("up1.res", 4 * c, 2 * c))
    inv.update({"up0.up.weight": (2 * c, 2 * c, 3, 3), "up0.up.bias": (2 * c,)})
    inv.update(_res_names("up0.res", 3 * c, c))
    inv.update({"out.norm.weight": (c,), "out.norm.bias": (c,),
                "out.conv.weight": (1, c, 3, 3), "out.conv.bias": (1,)})
    for k, v in inv.items():
        if v is None:   # temb projections map the MLP output to block channels
            out_c = inv[k.replace("temb.weight", "temb.bias")][0]
            inv[k] = (out_c, td)
    return inv


class UNetSmall:
    """Inference-only unet-small-v1 over a tensor dict.

    Stateless and thread-safe: forward() touches only local arrays.
    """

    def __init__(self, tensors: dict, n: int, base_channels: int = 32,
                 groups: int = 8, temb_dim: int | None = None):
        if n % 4:
            raise ValueError(f"n must be divisible by 4 for three resolutions, got {n}")
        self.n = n
        self.c = base_channels
        self.groups = groups
        self.temb_dim = temb_dim if temb_dim is not None else 4 * base_channels
        if base_channels % groups:
            raise ValueError(f"base_channels {base_channels} not divisible by groups {groups}")
        want = tensor_inventory(base_channels, self.temb_dim)
        missing = sorted(set(want) - set(tensors))
        if missing:
            raise ValueError(f"missing tensors: {missing[:4]}{'...' if len(missing) > 4 else ''}")
        self.t = {}
        for name, shape in want.items():
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            self.t[name] = arr

    def _res(self, prefix: str, x: np.ndarray, temb: np.ndarray) -> np.ndarray:
        t = self.t
        h = silu(group_norm(x, t[f"{prefix}.norm1.weight"], t[f"{prefix}.norm1.bias"], self.groups))
        h = conv2d(h, t[f"{prefix}.conv1.weight"], t[f"{prefix}.conv1.bias"])
        proj = temb @ t[f"{prefix}.temb.weight"].T + t[f"{prefix}.temb.bias"][None, :]
        h = h + proj[:, :, None, None]
        h = silu(group_norm(h, t[f"{prefix}.norm2.weight"], t[f"{prefix}.norm2.bias"], self.groups))
        h = conv2d(h, t[f"{prefix}.conv2.weight"], t[f"{prefix}.conv2.bias"])
        if f"{prefix}.skip.weight" in t:
            x = conv2d(x, t[f"{prefix}.skip.weight"], t[f"{prefix}.skip.bias"])
        return x + h

    def forward(self, x: np.ndarray, t_step) -> np.ndarray:
        """x: (B, n, n) or (n, n); t_step: original-chain timestep(s)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[-2:] != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} images, got {x.shape[-2:]}")
        b = x.shape[0]
        tt = self.t
        temb = sinusoidal_embedding(np.broadcast_to(np.asarray(t_step, dtype=np.float64), (b,)), self.c)
        temb = temb @ tt["time.lin1.weight"].T + tt["time.lin1.bias"][None, :]
        temb = silu(temb)
        temb = temb @ tt["time.lin2.weight"].T + tt["time.lin2.bias"][None, :]

        h0 = conv2d(x[:, None, :, :], tt["conv_in.weight"], tt["conv_in.bias"])
        s1 = self._res("down0.res", h0, temb)
        d1 = conv2d(s1, tt["down0.down.weight"], tt["down0.down.bias"], stride=2)
        s2 = self._res("down1.res", d1, temb)
        d2 = conv2d(s2, tt["down1.down.weight"], tt["down1.down.bias"], stride=2)
        m = self._res("mid.res", d2, temb)

        u1 = conv2d(upsample_nearest2(m), tt["up1.up.weight"], tt["up1.up.bias"])
        r1 = self._res("up1.res", np.concatenate([u1, s2], axis=1), temb)
        u0 = conv2d(upsample_nearest2(r1), tt["up0.up.weight"], tt["up0.up.bias"])
        r0 = self._res("up0.res", np.concatenate([u0, s1], axis=1), temb)

        out = silu(group_norm(r0, tt["out.norm.weight"], tt["out.norm.bias"], self.groups))
        out = conv2d(out, tt["out.conv.weight"], tt["out.conv.bias"])[:, 0]
        return out[0] if single else out
