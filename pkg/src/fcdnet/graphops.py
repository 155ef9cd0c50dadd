"""Frequency-adaptation graph filters and polynomial graph convolution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

from .numeric import ShapeError

DEGREE_FLOOR = 1e-6


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def inv_softplus(y: float) -> float:
    return math.log(math.expm1(y))


def unit_interval(raw: torch.Tensor) -> torch.Tensor:
    """Squash a raw mixer into [0, 1]."""
    return torch.sigmoid(raw)


def nonnegative(raw: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.softplus(raw)


@dataclass
class FilterPair:
    f_low: torch.Tensor
    f_high: torch.Tensor
    eps: float


def sym_normalize(a: torch.Tensor, floor: float = DEGREE_FLOOR) -> torch.Tensor:
    """D^-1/2 A D^-1/2 with row-sum degrees plus ``floor``."""
    inv_sqrt = (a.sum(dim=1) + floor).rsqrt()
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def build_filters(a: torch.Tensor, eps: float = 0.3, floor: float = DEGREE_FLOOR) -> FilterPair:
    """Low-pass eps*I + D^-1/2 A D^-1/2 and high-pass eps*I - D^-1/2 A D^-1/2."""
    norm = sym_normalize(a, floor)
    eye = torch.eye(a.shape[0], dtype=a.dtype)
    return FilterPair(eps * eye + norm, eps * eye - norm, eps)


def fuse_gamma(fp: FilterPair, gamma: torch.Tensor | float) -> torch.Tensor:
    return gamma * fp.f_low + (1.0 - gamma) * fp.f_high


def power_series(a: torch.Tensor, x: torch.Tensor, order: int, node_axis: int = -2) -> list[torch.Tensor]:
    """[x, A x, A^2 x, ...] up to ``order``, propagating along ``node_axis``.

    Powers are applied one hop at a time; dense A^k is never formed.
    """
    nodes_second_last = node_axis in (-2, x.dim() - 2)
    cur = x if nodes_second_last else x.movedim(node_axis, -2)
    out = [x]
    for _ in range(order):
        cur = a @ cur  # (..., N, C): row i gathers sum_j a[i, j] x[..., j, :]
        out.append(cur if nodes_second_last else cur.movedim(-2, node_axis))
    return out


def poly_graph_conv(a: torch.Tensor, x: torch.Tensor, weights: Sequence[torch.Tensor] | torch.Tensor,
                    order: int | None = None) -> torch.Tensor:
    """sum_k A^k x W_k for x of shape (B, N, C_in) and W_k of shape (C_in, C_out)."""
    if order is None:
        order = len(weights) - 1
    if order < 0 or len(weights) != order + 1:
        raise ShapeError(f"need {order + 1} weight matrices, got {len(weights)}")
    if x.shape[-1] != weights[0].shape[0]:
        raise ShapeError(f"input has {x.shape[-1]} channels, weights expect {weights[0].shape[0]}")
    if a.shape != (x.shape[1], x.shape[1]):
        raise ShapeError(f"graph {tuple(a.shape)} does not match {x.shape[1]} nodes")
    terms = power_series(a, x, order)
    out = terms[0] @ weights[0]
    for k in range(1, order + 1):
        out = out + terms[k] @ weights[k]
    return out
