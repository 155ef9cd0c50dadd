"""Short-term extractor: one dynamic graph per input batch from its spectrum."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .ltfe import chi_squash
from .numeric import DTYPE, ShapeError, check_finite
from .signal import amplitude_phase, fft_real_imag, ifft_real


def pad_batch(samples, batch_size: int):
    """Pad to ``batch_size`` rows by repeating the last sample.

    Returns ``(padded, valid)`` where ``valid`` flags the original rows.
    """
    samples = np.asarray(samples)
    count = samples.shape[0]
    if count < 1:
        raise ValueError("cannot pad an empty batch")
    if count > batch_size:
        raise ValueError(f"{count} samples exceed batch size {batch_size}")
    valid = np.zeros(batch_size, dtype=bool)
    valid[:count] = True
    if count == batch_size:
        return samples, valid
    fill = np.repeat(samples[-1:], batch_size - count, axis=0)
    return np.concatenate([samples, fill], axis=0), valid


class STFE(nn.Module):
    """FFT over the window, per-part projections, amplitude/phase and IFFT, fused to N x N."""

    def __init__(self, batch_size: int, in_dim: int, input_len: int, num_nodes: int,
                 features: int = 10, tau: float = 1.0):
        super().__init__()
        self.batch_size, self.in_dim, self.tau = batch_size, in_dim, tau
        bd = batch_size * in_dim
        self.w_u_real = nn.Linear(bd, features, dtype=DTYPE)
        self.w_u_imag = nn.Linear(bd, features, dtype=DTYPE)
        scale = features ** -0.5
        self.w_g = nn.Parameter(torch.randn(features, num_nodes, dtype=DTYPE) * scale)
        self.w_m = nn.Parameter(torch.randn(features, num_nodes, dtype=DTYPE) * scale)
        self.w_s = nn.Parameter(torch.randn(features, num_nodes, dtype=DTYPE) * scale)
        self.w_t = nn.Parameter(torch.full((input_len,), 1.0 / input_len, dtype=DTYPE))

    def forward(self, x_in: torch.Tensor) -> torch.Tensor:
        B, T, N, D = x_in.shape
        if B != self.batch_size or D != self.in_dim:
            raise ShapeError(f"STFE built for batch {self.batch_size} x {self.in_dim} features, "
                             f"got {B} x {D}; pad the batch first")
        x_hat = x_in.to(DTYPE).permute(2, 1, 0, 3).reshape(N, T, B * D)
        re, im = fft_real_imag(x_hat)
        v_r = self.w_u_real(re)
        v_i = self.w_u_imag(im)
        amp, phase = amplitude_phase(v_r, v_i)
        g = ifft_real(v_r, v_i)                        # (N, T, F)
        g, amp, phase = (t.transpose(0, 1) for t in (g, amp, phase))  # (T, N, F)
        m = g @ self.w_g + amp @ self.w_m + phase @ self.w_s           # (T, N, N)
        a = chi_squash(torch.einsum("t,tij->ij", self.w_t, m), self.tau)
        return check_finite(a, "A_HF")
