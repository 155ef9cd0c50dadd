"""Downstream predictors: graph-recurrent FAGRU on the static graph, gated
TCN + FAGCN (FAGWN) on the dynamic graph, and their weighted fusion."""

from __future__ import annotations

import math
from typing import Sequence

import torch
from torch import nn

from .graphops import FilterPair, inv_softplus, nonnegative, power_series
from .numeric import DTYPE, ShapeError, dilated_causal_conv1d, receptive_field


def _glorot(*shape: int) -> nn.Parameter:
    fan_in, fan_out = shape[-2], shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return nn.Parameter(torch.empty(*shape, dtype=DTYPE).uniform_(-bound, bound))


class GraphGate(nn.Module):
    """K-hop polynomial graph convolution bank with bias: sum_k A^k X W_k + b."""

    def __init__(self, c_in: int, c_out: int, order: int = 2):
        super().__init__()
        self.order = order
        self.weight = _glorot(order + 1, c_in, c_out)
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=DTYPE))

    def stacked(self) -> torch.Tensor:
        k1, c_in, c_out = self.weight.shape
        return self.weight.reshape(k1 * c_in, c_out)

    def forward(self, a: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        terms = torch.cat(power_series(a, x, self.order), dim=-1)
        return terms @ self.stacked() + self.bias


class FAGRUCell(nn.Module):
    def __init__(self, in_dim: int, hidden: int, order: int = 2):
        super().__init__()
        self.hidden = hidden
        self.reset = GraphGate(in_dim + hidden, hidden, order)
        self.update = GraphGate(in_dim + hidden, hidden, order)
        self.cand = GraphGate(in_dim + hidden, hidden, order)

    def forward(self, x_t: torch.Tensor, h: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        xh = torch.cat([x_t, h], dim=-1)
        terms = torch.cat(power_series(a_hat, xh, self.reset.order), dim=-1)
        # reset and update share the propagated input; one product covers both
        w = torch.cat([self.reset.stacked(), self.update.stacked()], dim=-1)
        b = torch.cat([self.reset.bias, self.update.bias])
        r, u = torch.sigmoid(terms @ w + b).split(self.hidden, dim=-1)
        c = torch.tanh(self.cand(a_hat, torch.cat([x_t, r * h], dim=-1)))
        return u * h + (1.0 - u) * c


class FAGRU(nn.Module):
    """Encode the T_in steps, then read the whole horizon off the last state."""

    def __init__(self, in_dim: int, out_dim: int, horizon: int, hidden: int = 64, order: int = 2):
        super().__init__()
        self.out_dim, self.horizon = out_dim, horizon
        self.cell = FAGRUCell(in_dim, hidden, order)
        self.readout = nn.Linear(hidden, horizon * out_dim, dtype=DTYPE)

    def forward(self, x: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        B, T, N, _ = x.shape
        h = x.new_zeros(B, N, self.cell.hidden, dtype=DTYPE)
        for t in range(T):
            h = self.cell(x[:, t], h, a_hat)
        out = self.readout(h).reshape(B, N, self.horizon, self.out_dim)
        return out.permute(0, 2, 1, 3)


def _causal_taps(x: torch.Tensor, kernel: torch.Tensor, dilation: int,
                 bias: torch.Tensor | None) -> torch.Tensor:
    """Channels-last dilated causal conv over axis 1 of (B, T, N, C).

    ``kernel`` is (C_out, C_in, k), same layout as the numeric primitive.
    """
    span = (kernel.shape[2] - 1) * dilation
    T = x.shape[1]
    if T <= span:
        raise ShapeError(f"input length {T} too short for receptive field {span + 1}")
    out_len = T - span
    out = None
    for j in range(kernel.shape[2]):
        term = x[:, j * dilation: j * dilation + out_len] @ kernel[:, :, j].T
        out = term if out is None else out + term
    return out if bias is None else out + bias


def _gated_tcn_cl(x, theta1, theta2, dilation, bias1=None, bias2=None):
    return (torch.tanh(_causal_taps(x, theta1, dilation, bias1))
            * torch.sigmoid(_causal_taps(x, theta2, dilation, bias2)))


def gated_tcn(x: torch.Tensor, theta1: torch.Tensor, theta2: torch.Tensor, dilation: int,
              bias1: torch.Tensor | None = None, bias2: torch.Tensor | None = None) -> torch.Tensor:
    """tanh(theta1 * x) . sigmoid(theta2 * x), dilated causal along the last axis.

    x is (B, C, N, T); kernels are (C_out, C, k). Output is (B, C_out, N, T').
    """
    if x.shape[-1] <= (theta1.shape[2] - 1) * dilation:
        raise ShapeError(f"input length {x.shape[-1]} too short for dilation {dilation}")
    out = _gated_tcn_cl(x.permute(0, 3, 2, 1), theta1, theta2, dilation, bias1, bias2)
    return out.permute(0, 3, 2, 1)


class FagwnLayer(nn.Module):
    """Gated TCN followed by the two-filter graph convolution, channels-last."""

    def __init__(self, channels: int, dilation: int, kp: int = 2, kernel_size: int = 2):
        super().__init__()
        self.dilation, self.kp = dilation, kp
        bound = 1.0 / math.sqrt(channels * kernel_size)
        self.theta1 = nn.Parameter(torch.empty(channels, channels, kernel_size, dtype=DTYPE).uniform_(-bound, bound))
        self.theta2 = nn.Parameter(torch.empty(channels, channels, kernel_size, dtype=DTYPE).uniform_(-bound, bound))
        self.bias1 = nn.Parameter(torch.zeros(channels, dtype=DTYPE))
        self.bias2 = nn.Parameter(torch.zeros(channels, dtype=DTYPE))
        self.w_low = _glorot(kp + 1, channels, channels)
        self.w_high = _glorot(kp + 1, channels, channels)

    def fagcn(self, x: torch.Tensor, fp: FilterPair) -> torch.Tensor:
        """sum_k (A_L^k x W_k1 + A_H^k x W_k2) for x of shape (B, T, N, C)."""
        low = power_series(fp.f_low, x, self.kp)
        high = power_series(fp.f_high, x, self.kp)
        out = x @ (self.w_low[0] + self.w_high[0])
        for k in range(1, self.kp + 1):
            out = out + low[k] @ self.w_low[k] + high[k] @ self.w_high[k]
        return out

    def forward(self, x: torch.Tensor, fp: FilterPair, residual: torch.Tensor) -> torch.Tensor:
        h = _gated_tcn_cl(x, self.theta1, self.theta2, self.dilation, self.bias1, self.bias2)
        return self.fagcn(h, fp) + residual[:, -h.shape[1]:]


class FAGWN(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, input_len: int, horizon: int,
                 channels: int = 32, end_channels: int = 64, kp: int = 2,
                 dilations: Sequence[int] = (1, 2, 1, 2), kernel_size: int = 2):
        super().__init__()
        field = receptive_field(kernel_size, dilations)
        if field > input_len:
            raise ValueError(f"receptive field {field} exceeds input length {input_len}")
        self.out_dim, self.horizon = out_dim, horizon
        self.fc_in = nn.Linear(in_dim, channels, dtype=DTYPE)
        self.layers = nn.ModuleList(FagwnLayer(channels, d, kp, kernel_size) for d in dilations)
        self.final_len = input_len - (field - 1)
        self.fc2 = nn.Linear(len(dilations) * channels, end_channels, dtype=DTYPE)
        self.fc1 = nn.Linear(end_channels, out_dim, dtype=DTYPE)
        self.time_map = nn.Linear(self.final_len, horizon, dtype=DTYPE)

    def forward(self, x_in: torch.Tensor, fp: FilterPair) -> torch.Tensor:
        proj = self.fc_in(x_in)  # (B, T, N, C)
        h = proj
        skips = []
        for layer in self.layers:
            h = layer(h, fp, proj)
            skips.append(h)
        cut = min(s.shape[1] for s in skips)
        z = torch.cat([s[:, -cut:] for s in skips], dim=-1)  # (B, T', N, K*C)
        z = self.fc1(torch.relu(self.fc2(z)))                 # (B, T', N, D_out)
        z = self.time_map(z.permute(0, 2, 3, 1))              # (B, N, D_out, E)
        return z.permute(0, 3, 1, 2)


def fuse_outputs(x1: torch.Tensor, x2: torch.Tensor, eta) -> torch.Tensor:
    return (x1 + eta * x2) / (1.0 + eta)


class OutputFusion(nn.Module):
    def __init__(self, eta_init: float = 0.1):
        super().__init__()
        self.eta_raw = nn.Parameter(torch.tensor(inv_softplus(eta_init), dtype=DTYPE))

    @property
    def eta(self) -> torch.Tensor:
        return nonnegative(self.eta_raw)

    def forward(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        if x1.shape != x2.shape:
            raise ShapeError(f"cannot fuse {tuple(x1.shape)} with {tuple(x2.shape)}")
        return fuse_outputs(x1, x2, self.eta)
