"""Torch model mirroring the inference engine's architecture.

Seven dilated 3D convolutions with per-layer scalar PReLU and a global
residual connection denoise the (pilot symbols, subcarriers, antennas)
volume; a 2D convolution over (subcarriers, antennas) with pilot symbols
as input channels interpolates to all symbols. Real and imaginary parts
share the real-valued weights.

Weight tensors are exported under the canonical names the estimation
toolkit expects (``denoise.conv<i>.weight/.bias/.prelu``,
``interp.conv.weight/.bias``, ``meta.frame_dims``).
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

__all__ = [
    "ChannelDenoiser",
    "default_pilot_symbols",
    "linear_interp_matrix",
    "export_weights",
    "import_weights",
    "parameter_count",
]

_DENOISE_OUT = (1, 1, 1, 5, 5, 5, 1)


def default_pilot_symbols(T: int, T_P: int, U: int) -> tuple[int, ...]:
    """Evenly spread pilot positions, 1-based, per time block.

    Matches the frame toolkit's default schedule: within each of the U
    blocks of T/U symbols, pilot j sits at local position
    floor((j - 0.5) * (T/U) / (T_P/U)) + 1.
    """
    per_block = T_P // U
    span = T // U
    out = []
    for u in range(U):
        for j in range(1, per_block + 1):
            local = int(np.floor((j - 0.5) * span / per_block)) + 1
            out.append(u * span + local)
    return tuple(out)


def linear_interp_matrix(pilot_symbols: tuple[int, ...], T: int) -> np.ndarray:
    """(T, T_P) linear time-interpolation weights, edges held.

    Built from interpolated unit pulses: column p is np.interp of the
    p-th canonical basis vector, which makes rows sum to one and pilot
    rows one-hot by construction.
    """
    pos = np.asarray(pilot_symbols, dtype=float)
    grid = np.arange(1, T + 1, dtype=float)
    W = np.empty((T, len(pos)))
    for p in range(len(pos)):
        basis = np.zeros(len(pos))
        basis[p] = 1.0
        W[:, p] = np.interp(grid, pos, basis)
    return W


class ChannelDenoiser(nn.Module):
    """Residual 3D denoiser plus 2D time-interpolation head."""

    def __init__(self, T: int, T_P: int):
        super().__init__()
        self.T = T
        self.T_P = T_P
        convs, acts = [], []
        in_ch = 1
        for i, out_ch in enumerate(_DENOISE_OUT, start=1):
            kernel = (7, 7, 5) if i <= 4 else (5, 5, 3)
            dilation = (1, 4, 4)
            padding = tuple(d * (k - 1) // 2 for k, d in zip(kernel, dilation))
            convs.append(nn.Conv3d(in_ch, out_ch, kernel, dilation=dilation,
                                   padding=padding))
            acts.append(nn.PReLU(num_parameters=1, init=0.25))
            in_ch = out_ch
        self.denoise = nn.ModuleList(convs)
        self.activations = nn.ModuleList(acts)
        self.head = nn.Conv2d(T_P, T, (5, 3), dilation=(4, 4), padding=(8, 4))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 2, T_P, N, M) real/imaginary channels -> (B, 2, T, N, M)."""
        b = x.shape[0]
        y = x.reshape(b * 2, 1, *x.shape[2:])
        z = y
        for conv, act in zip(self.denoise, self.activations):
            z = act(conv(z))
        denoised = (y + z).squeeze(1)           # (2B, T_P, N, M)
        out = self.head(denoised)               # (2B, T, N, M)
        return out.reshape(b, 2, *out.shape[1:])

    def init_baseline(self, pilot_symbols: tuple[int, ...] | None = None) -> None:
        """Start the network at the planar + linear-interpolation baseline.

        Zeroing the last denoising convolution makes the residual stage an
        exact identity; planting the interpolation matrix at the head's
        centre tap makes the head pure linear time interpolation. Training
        then refines from the classical baseline instead of from noise.
        """
        if pilot_symbols is None:
            pilot_symbols = default_pilot_symbols(self.T, self.T_P, 1)
        if len(pilot_symbols) != self.T_P:
            raise ValueError(
                f"{len(pilot_symbols)} pilot symbols for T_P={self.T_P}"
            )
        with torch.no_grad():
            last = self.denoise[-1]
            last.weight.zero_()
            last.bias.zero_()
            W = linear_interp_matrix(pilot_symbols, self.T)
            self.head.weight.zero_()
            kh, kw = self.head.kernel_size
            self.head.weight[:, :, kh // 2, kw // 2] = torch.from_numpy(
                W.astype(np.float32)
            )
            self.head.bias.zero_()


def parameter_count(model: ChannelDenoiser) -> int:
    return sum(p.numel() for p in model.parameters())


def export_weights(
    model: ChannelDenoiser, N: int = 0, M: int = 0
) -> dict[str, np.ndarray]:
    """State dict under canonical names, in canonical order."""
    out: dict[str, np.ndarray] = {}
    for i, (conv, act) in enumerate(
        zip(model.denoise, model.activations), start=1
    ):
        out[f"denoise.conv{i}.weight"] = conv.weight.detach().numpy().astype(
            np.float32
        )
        out[f"denoise.conv{i}.bias"] = conv.bias.detach().numpy().astype(
            np.float32
        )
        out[f"denoise.conv{i}.prelu"] = act.weight.detach().numpy().astype(
            np.float32
        )
    out["interp.conv.weight"] = model.head.weight.detach().numpy().astype(
        np.float32
    )
    out["interp.conv.bias"] = model.head.bias.detach().numpy().astype(
        np.float32
    )
    out["meta.frame_dims"] = np.array(
        [model.T, model.T_P, N, M], np.float32
    )
    return out


def import_weights(tensors: dict[str, np.ndarray]) -> ChannelDenoiser:
    """Rebuild a model from exported tensors (shape checks included)."""
    meta = tensors.get("meta.frame_dims")
    if meta is None or meta.size != 4:
        raise ValueError("weights missing meta.frame_dims")
    T, T_P = int(meta[0]), int(meta[1])
    model = ChannelDenoiser(T, T_P)
    with torch.no_grad():
        for i, (conv, act) in enumerate(
            zip(model.denoise, model.activations), start=1
        ):
            conv.weight.copy_(torch.from_numpy(
                tensors[f"denoise.conv{i}.weight"]
            ))
            conv.bias.copy_(torch.from_numpy(
                tensors[f"denoise.conv{i}.bias"]
            ))
            act.weight.copy_(torch.from_numpy(
                tensors[f"denoise.conv{i}.prelu"].reshape(1)
            ))
        model.head.weight.copy_(torch.from_numpy(
            tensors["interp.conv.weight"]
        ))
        model.head.bias.copy_(torch.from_numpy(tensors["interp.conv.bias"]))
    return model
