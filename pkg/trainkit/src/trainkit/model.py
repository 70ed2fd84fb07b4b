"""Torch mirror of the unet-small-v1 inference architecture.

The module tree is named so that state_dict() keys coincide exactly with
the weight-file tensor inventory (edmkit.diffusion.unet.tensor_inventory):
"conv_in.weight", "down0.res.norm1.weight", "time.lin1.weight", and so on.
Exporting is then a dtype cast, nothing more. Keep the two forward passes
in lockstep: any change here must be mirrored in the numpy engine and vice
versa, or exported check vectors will stop replaying.
"""

from __future__ import annotations

import math

import torch
from torch import nn

__all__ = ["TorchUNetSmall", "sinusoidal_embedding"]

_EPS = 1e-5


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sin/cos embedding of timestep(s), shape (B, dim); matches the numpy engine.

    Always computed in float64 (callers cast afterwards): the consumer's
    verification replays exported weights in float64, so a float32 embedding
    here would leave its rounding baked into every check vector.
    """
    t = torch.atleast_1d(t).to(torch.float64)
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype,
                                                        device=t.device) / half)
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=1)
    return emb


class _ResBlock(nn.Module):
    """Pre-activation GroupNorm/SiLU/conv pair with additive time embedding
    between the convolutions and a 1x1 skip when the channel count changes."""

    def __init__(self, c_in: int, c_out: int, temb_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, c_in, eps=_EPS)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb = nn.Linear(temb_dim, c_out)
        self.norm2 = nn.GroupNorm(groups, c_out, eps=_EPS)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else None

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        if self.skip is not None:
            x = self.skip(x)
        return x + h


class TorchUNetSmall(nn.Module):
    """Trainable twin of the numpy inference engine (three resolutions)."""

    def __init__(self, n: int, base_channels: int = 32, groups: int = 8,
                 temb_dim: int | None = None):
        super().__init__()
        if n % 4:
            raise ValueError(f"n must be divisible by 4, got {n}")
        if base_channels % groups:
            raise ValueError(f"base_channels {base_channels} not divisible "
                             f"by groups {groups}")
        c = base_channels
        td = temb_dim if temb_dim is not None else 4 * c
        self.n = n
        self.c = c
        self.groups = groups
        self.temb_dim = td
        self.time = nn.ModuleDict({
            "lin1": nn.Linear(c, td),
            "lin2": nn.Linear(td, td),
        })
        self.conv_in = nn.Conv2d(1, c, 3, padding=1)
        self.down0 = nn.ModuleDict({
            "res": _ResBlock(c, c, td, groups),
            "down": nn.Conv2d(c, c, 3, stride=2, padding=1),
        })
        self.down1 = nn.ModuleDict({
            "res": _ResBlock(c, 2 * c, td, groups),
            "down": nn.Conv2d(2 * c, 2 * c, 3, stride=2, padding=1),
        })
        self.mid = nn.ModuleDict({"res": _ResBlock(2 * c, 2 * c, td, groups)})
        self.up1 = nn.ModuleDict({
            "up": nn.Conv2d(2 * c, 2 * c, 3, padding=1),
            "res": _ResBlock(4 * c, 2 * c, td, groups),
        })
        self.up0 = nn.ModuleDict({
            "up": nn.Conv2d(2 * c, 2 * c, 3, padding=1),
            "res": _ResBlock(3 * c, c, td, groups),
        })
        self.out = nn.ModuleDict({
            "norm": nn.GroupNorm(groups, c, eps=_EPS),
            "conv": nn.Conv2d(c, 1, 3, padding=1),
        })

    def forward(self, x: torch.Tensor, t_step: torch.Tensor) -> torch.Tensor:
        """x: (B, n, n); t_step: (B,) or scalar original-chain timesteps."""
        if x.shape[-2:] != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} inputs, "
                             f"got {tuple(x.shape[-2:])}")
        b = x.shape[0]
        t_step = torch.as_tensor(t_step, device=x.device).broadcast_to((b,))
        temb = sinusoidal_embedding(t_step, self.c).to(x.dtype)
        temb = self.time["lin2"](torch.nn.functional.silu(self.time["lin1"](temb)))

        h0 = self.conv_in(x[:, None])
        s1 = self.down0["res"](h0, temb)
        d1 = self.down0["down"](s1)
        s2 = self.down1["res"](d1, temb)
        d2 = self.down1["down"](s2)
        m = self.mid["res"](d2, temb)

        u1 = self.up1["up"](torch.nn.functional.interpolate(m, scale_factor=2,
                                                            mode="nearest"))
        r1 = self.up1["res"](torch.cat([u1, s2], dim=1), temb)
        u0 = self.up0["up"](torch.nn.functional.interpolate(r1, scale_factor=2,
                                                            mode="nearest"))
        r0 = self.up0["res"](torch.cat([u0, s1], dim=1), temb)

        out = torch.nn.functional.silu(self.out["norm"](r0))
        return self.out["conv"](out)[:, 0]

    def export_tensors(self) -> dict:
        """state_dict as float32 numpy arrays keyed by the weight-file names."""
        return {k: v.detach().cpu().to(torch.float32).numpy()
                for k, v in self.state_dict().items()}
