"""Tensor substrate: float64 torch tensors, a causal conv primitive, Adam and a
finite-difference gradient checker.

Reverse-mode differentiation is delegated to torch autograd; everything in
this package builds on the helpers below rather than calling torch.optim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

DTYPE = torch.float64
Tensor = torch.Tensor


class NumericError(RuntimeError):
    """Raised when a NaN/Inf shows up or a numeric contract is violated."""


class ShapeError(ValueError):
    pass


def as_tensor(values, requires_grad: bool = False) -> Tensor:
    t = torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=DTYPE).clone()
    t.requires_grad_(requires_grad)
    return t


def check_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not torch.isfinite(t).all():
        raise NumericError(f"non-finite values in {what}")
    return t


def receptive_field(kernel_size: int, dilations: Sequence[int]) -> int:
    return 1 + sum((kernel_size - 1) * d for d in dilations)


def dilated_causal_conv1d(x: Tensor, kernel: Tensor, dilation: int = 1,
                          bias: Tensor | None = None) -> Tensor:
    """Valid dilated convolution over the last axis.

    x is (B, C_in, T), kernel (C_out, C_in, k). Output index t only sees
    x[t : t + (k-1)*dilation + 1], so the result is T - (k-1)*dilation long.
    """
    if dilation < 1:
        raise ValueError("dilation must be a positive integer")
    if x.dim() != 3 or kernel.dim() != 3:
        raise ShapeError("expected x (B, C_in, T) and kernel (C_out, C_in, k)")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"channel mismatch: x has {x.shape[1]}, kernel expects {kernel.shape[1]}")
    span = (kernel.shape[2] - 1) * dilation
    if x.shape[2] <= span:
        raise ShapeError(f"input length {x.shape[2]} too short for receptive field {span + 1}")
    # tap sum instead of F.conv1d: torch's dilated float64 CPU kernel loops per sample
    out_len = x.shape[2] - span
    out = None
    for j in range(kernel.shape[2]):
        term = kernel[:, :, j] @ x[:, :, j * dilation: j * dilation + out_len]
        out = term if out is None else out + term
    if bias is not None:
        out = out + bias[:, None]
    return out


def backward(loss: Tensor, params: Sequence[Tensor]) -> list[Tensor]:
    """Gradients of a scalar loss w.r.t. ``params``; unreachable params get zeros."""
    if loss.numel() != 1:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    check_finite(loss.detach(), "loss")
    params = list(params)
    if not loss.requires_grad:
        return [torch.zeros_like(p) for p in params]
    grads = torch.autograd.grad(loss.reshape(()), params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


@dataclass
class AdamState:
    m: list[Tensor] = field(default_factory=list)
    v: list[Tensor] = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        return cls(m=[torch.zeros_like(p) for p in params],
                   v=[torch.zeros_like(p) for p in params], **kw)

    def state_dict(self) -> dict:
        return {"m": [m.clone() for m in self.m], "v": [v.clone() for v in self.v],
                "t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


@torch.no_grad()
def adam_step(params: Sequence[Tensor], grads: Sequence[Tensor], state: AdamState,
              lr: float) -> AdamState:
    """In-place Adam update with bias correction. Returns the same state object."""
    params, grads = list(params), list(grads)
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {tuple(p.shape)}, grad {tuple(g.shape)}, "
                             f"moment {tuple(m.shape)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        m_hat = m / bc1
        v_hat = v / bc2
        p.sub_(lr * m_hat / (v_hat.sqrt() + state.eps))
    return state


@torch.no_grad()
def clip_grad_norm(grads: Sequence[Tensor], max_norm: float) -> float:
    total = torch.sqrt(sum((g * g).sum() for g in grads)).item()
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g.mul_(scale)
    return total


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    per_param: dict[str, float]
    threshold: float | None = None

    @property
    def passed(self) -> bool:
        return self.threshold is None or self.max_rel_error < self.threshold


def _rel_err(a: np.ndarray, n: np.ndarray) -> float:
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-8))


def grad_check(fn: Callable[[], Tensor], params: dict[str, Tensor] | Sequence[Tensor],
               step: float = 1e-4, seed: int = 0, max_entries: int | None = None,
               name: str = "op", threshold: float | None = None) -> GradCheckReport:
    """Compare autograd against central finite differences.

    ``fn`` closes over ``params`` and returns a tensor; non-scalar outputs are
    reduced with a fixed random projection so every output entry is probed.
    The error for one parameter is ||analytic - numeric|| / max(||analytic||,
    ||numeric||, 1e-8) over its probed entries; the report keeps the max.
    With ``max_entries`` set, larger parameters are probed on a seeded random
    subset of coordinates. Parameter values are restored afterwards.
    """
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    gen = torch.Generator().manual_seed(seed)
    out0 = fn()
    proj = torch.randn(out0.shape, generator=gen, dtype=out0.dtype)

    def scalar() -> Tensor:
        return (fn() * proj).sum()

    loss = scalar()
    tensors = list(params.values())
    analytic = torch.autograd.grad(loss, tensors, allow_unused=True)
    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    for (pname, p), g in zip(params.items(), analytic):
        g = torch.zeros_like(p) if g is None else g
        flat_g = g.detach().reshape(-1).numpy()
        idx = np.arange(p.numel())
        if max_entries is not None and p.numel() > max_entries:
            idx = np.sort(rng.choice(p.numel(), size=max_entries, replace=False))
        numeric = np.empty(len(idx))
        with torch.no_grad():
            flat = p.view(-1)
            for j, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + step
                up = scalar().item()
                flat[i] = orig - step
                down = scalar().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2 * step)
        per_param[pname] = _rel_err(flat_g[idx], numeric)
    worst = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(name=name, max_rel_error=worst, per_param=per_param,
                           threshold=threshold)
