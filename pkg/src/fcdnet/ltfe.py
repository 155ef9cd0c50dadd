"""Long-term extractor: static low-frequency dependency graph from the training history."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import signal
from .graphops import logit, unit_interval
from .numeric import DTYPE, check_finite


def chi_squash(x: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    """Smooth monotone map onto (0, 1): a temperature sigmoid."""
    return torch.sigmoid(x / tau)


@dataclass
class LtfePreprocessed:
    q1: torch.Tensor  # (N, S*D*L, P)
    q2: torch.Tensor  # (N, P*D*L, S)
    S: int
    P: int
    DL: int

    def to_dict(self) -> dict:
        return {"q1": self.q1, "q2": self.q2, "S": self.S, "P": self.P, "DL": self.DL}

    @classmethod
    def from_dict(cls, d: dict) -> "LtfePreprocessed":
        return cls(d["q1"], d["q2"], d["S"], d["P"], d["DL"])

    @classmethod
    def zeros(cls, N: int, S: int, P: int, D: int, L: int) -> "LtfePreprocessed":
        DL = D * L
        return cls(torch.zeros(N, S * DL, P, dtype=DTYPE), torch.zeros(N, P * DL, S, dtype=DTYPE),
                   S, P, DL)


def ltfe_preprocess(train_values: np.ndarray, period: int, levels_total: int = 5,
                    order: int = 4, gates=None, float32: bool = False) -> LtfePreprocessed:
    """diff -> segment -> per-level wavelet rebuild -> ST-Norm over S and over P.

    ``train_values`` is (T_train, N, D). The (s, d, l) and (p, d, l) channel
    axes are flattened lexicographically.
    """
    x = signal.diff(train_values)
    segs = signal.segment(x, period)
    S, P, N, D = segs.shape
    if S < 2:
        raise ValueError(f"training split yields only {S} segment(s) of period {P}; need >= 2")
    signal.check_wavelet_length(P, levels_total - 1)
    stack = signal.wavelet_stack(segs, order, levels_total, gates)
    z = torch.from_numpy(np.ascontiguousarray(stack.merged))  # (S, P, N, DL)
    DL = z.shape[-1]
    z1 = signal.stnorm(z)
    z2 = signal.stnorm(z.transpose(0, 1))  # (P, S, N, DL)
    q1 = z1.permute(2, 0, 3, 1).reshape(N, S * DL, P).contiguous()
    q2 = z2.permute(2, 0, 3, 1).reshape(N, P * DL, S).contiguous()
    if float32:
        q1, q2 = q1.float(), q2.float()
    return LtfePreprocessed(q1, q2, S, P, DL)


class LtfeBranch(nn.Module):
    """ST-Norm affine -> conv(k=3, same) -> ReLU -> mean over length -> 3 FCs -> chi.

    ``groups`` is the size of the leading sub-axis folded into the channel
    axis (S for the first view, P for the second); the affine acts per
    (d, l) feature.
    """

    def __init__(self, groups: int, dl: int, num_nodes: int, channels: int = 16,
                 hidden: int = 64, tau: float = 1.0):
        super().__init__()
        self.groups, self.dl, self.tau = groups, dl, tau
        self.gain = nn.Parameter(torch.ones(dl, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(dl, dtype=DTYPE))
        self.conv = nn.Conv1d(groups * dl, channels, kernel_size=3, padding=1, dtype=DTYPE)
        self.fc3 = nn.Linear(channels, hidden, dtype=DTYPE)
        self.fc2 = nn.Linear(hidden, hidden, dtype=DTYPE)
        self.fc1 = nn.Linear(hidden, num_nodes, dtype=DTYPE)

    def forward(self, q: torch.Tensor) -> torch.Tensor:
        N, C, length = q.shape
        q = q.to(DTYPE).reshape(N, self.groups, self.dl, length)
        q = q * self.gain[:, None] + self.bias[:, None]
        h = torch.relu(self.conv(q.reshape(N, C, length)))
        h = h.mean(dim=-1)
        h = torch.relu(self.fc3(h))
        h = torch.relu(self.fc2(h))
        return chi_squash(self.fc1(h), self.tau)


def fuse_beta(a1: torch.Tensor, a2: torch.Tensor, beta) -> torch.Tensor:
    return beta * a1 + (1.0 - beta) * a2


class LTFE(nn.Module):
    def __init__(self, num_nodes: int, S: int, P: int, dl: int, channels: int = 16,
                 hidden: int = 64, beta_init: float = 0.9, tau: float = 1.0):
        super().__init__()
        self.branch1 = LtfeBranch(S, dl, num_nodes, channels, hidden, tau)
        self.branch2 = LtfeBranch(P, dl, num_nodes, channels, hidden, tau)
        self.beta_raw = nn.Parameter(torch.tensor(logit(beta_init), dtype=DTYPE))

    @property
    def beta(self) -> torch.Tensor:
        return unit_interval(self.beta_raw)

    def forward(self, pre: LtfePreprocessed) -> torch.Tensor:
        a1 = self.branch1(pre.q1)
        a2 = self.branch2(pre.q2)
        return check_finite(fuse_beta(a1, a2, self.beta), "A_LF")
