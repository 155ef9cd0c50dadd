"""Deterministic signal transforms used by the graph extractors.

Wavelets use periodized Daubechies filter banks, so every level halves the
length exactly and synthesis is the transpose of analysis. The FFT is an
iterative radix-2 transform; other lengths go through Bluestein's chirp-z
identity on power-of-two buffers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import torch

from .numeric import DTYPE

EPS_STNORM = 1e-5


class WaveletConfigError(ValueError):
    pass


# ----------------------------------------------------------------- time domain

def diff(series: np.ndarray) -> np.ndarray:
    """First difference along axis 0 with a leading zero slice."""
    series = np.asarray(series, dtype=np.float64)
    out = np.zeros_like(series)
    out[1:] = series[1:] - series[:-1]
    return out


def segment(series: np.ndarray, period: int) -> np.ndarray:
    """Split (T, ...) into (T // period, period, ...), dropping the tail."""
    series = np.asarray(series)
    T = series.shape[0]
    if period < 1 or T < period:
        raise ValueError(f"cannot segment length {T} with period {period}")
    S = T // period
    return series[: S * period].reshape((S, period) + series.shape[1:])


# -------------------------------------------------------------------- wavelets

@lru_cache(maxsize=None)
def daubechies_filter(order: int) -> tuple[float, ...]:
    """Reconstruction low-pass filter of the Daubechies wavelet ``db<order>``.

    Built by spectral factorisation: the half-band polynomial is split
    keeping the roots inside the unit circle (minimum phase), giving the
    same taps as the usual tabulated values.
    """
    if order < 1:
        raise WaveletConfigError("wavelet order must be >= 1")
    if order == 1:
        return (1 / np.sqrt(2), 1 / np.sqrt(2))
    poly = [comb(order - 1 + k, k) for k in range(order)]
    zeros = []
    for y in np.roots(poly[::-1]):
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zeros.append(pair[np.argmin(np.abs(pair))])
    q = np.real(np.poly(zeros))
    h = np.convolve(np.poly([-1.0] * order), q).real
    h = h / h.sum() * np.sqrt(2.0)
    return tuple(float(v) for v in h)


@lru_cache(maxsize=None)
def _analysis_matrices(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Periodized one-level analysis operators (n/2 x n) for low and high band."""
    rec_lo = np.asarray(daubechies_filter(order))
    taps = len(rec_lo)
    dec_lo = rec_lo[::-1]
    dec_hi = np.array([(-1) ** (j + 1) * rec_lo[j] for j in range(taps)])
    half = n // 2
    lo = np.zeros((half, n))
    hi = np.zeros((half, n))
    for k in range(half):
        for j in range(taps):
            col = (2 * k + taps // 2 - j) % n
            lo[k, col] += dec_lo[j]
            hi[k, col] += dec_hi[j]
    return lo, hi


def check_wavelet_length(length: int, levels: int) -> None:
    block = 2 ** levels
    if levels < 0 or length < block or length % block:
        lower = max(block, (length // block) * block)
        raise WaveletConfigError(
            f"length {length} is not divisible by 2**{levels}={block}; "
            f"try a period of {lower} or {lower + block}")


def dwt_decompose(signal: np.ndarray, order: int = 4, levels: int = 4) -> list[np.ndarray]:
    """Multilevel periodized DWT along the last axis.

    Returns ``[cA_levels, cD_levels, ..., cD_1]``, i.e. ``levels + 1`` arrays.
    """
    x = np.asarray(signal, dtype=np.float64)
    check_wavelet_length(x.shape[-1], levels)
    details = []
    approx = x
    for _ in range(levels):
        lo, hi = _analysis_matrices(approx.shape[-1], order)
        details.append(approx @ hi.T)
        approx = approx @ lo.T
    return [approx] + details[::-1]


def dwt_reconstruct(coeffs: list[np.ndarray], order: int = 4) -> np.ndarray:
    """Inverse of :func:`dwt_decompose` (adjoint filter bank)."""
    approx = np.asarray(coeffs[0], dtype=np.float64)
    for detail in coeffs[1:]:
        lo, hi = _analysis_matrices(2 * approx.shape[-1], order)
        approx = approx @ lo + np.asarray(detail) @ hi
    return approx


def gate_coeffs(coeffs: list[np.ndarray], gates) -> list[np.ndarray]:
    if len(gates) != len(coeffs):
        raise ValueError(f"need {len(coeffs)} gates, got {len(gates)}")
    return [g * np.asarray(c) for g, c in zip(gates, coeffs)]


def reconstruct_levels(coeffs: list[np.ndarray], order: int = 4) -> np.ndarray:
    """Per-level synthesis: level i is rebuilt with every other level zeroed.

    Returns an array of shape ``(..., length, L)``.
    """
    parts = []
    for i in range(len(coeffs)):
        only = [c if j == i else np.zeros_like(c) for j, c in enumerate(coeffs)]
        parts.append(dwt_reconstruct(only, order))
    return np.stack(parts, axis=-1)


def default_gates(levels_total: int, approx: float = 1.0, detail: float = 0.1) -> list[float]:
    return [approx] + [detail] * (levels_total - 1)


@dataclass
class WaveletStack:
    """Per-level low-frequency reconstructions of segmented data."""
    sub_series: np.ndarray  # (S, P, N, D, L)

    @property
    def merged(self) -> np.ndarray:
        S, P, N, D, L = self.sub_series.shape
        return self.sub_series.reshape(S, P, N, D * L)


def wavelet_stack(segments: np.ndarray, order: int = 4, levels_total: int = 5,
                  gates=None) -> WaveletStack:
    """Decompose/gate/rebuild every (s, n, d) series of an (S, P, N, D) tensor."""
    gates = default_gates(levels_total) if gates is None else list(gates)
    series = np.moveaxis(segments, 1, -1)  # (S, N, D, P)
    coeffs = gate_coeffs(dwt_decompose(series, order, levels_total - 1), gates)
    z = reconstruct_levels(coeffs, order)  # (S, N, D, P, L)
    return WaveletStack(np.moveaxis(z, 3, 1))


# --------------------------------------------------------------------- fourier

def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    if bits == 0:
        return np.zeros(1, dtype=np.int64)
    return np.array([int(format(i, f"0{bits}b")[::-1], 2) for i in range(n)])


def _fft_pow2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    n = x.shape[-1]
    a = x[..., _bit_reversal(n)].astype(np.complex128)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape[:-2] + (n,))
        size *= 2
    return a


def _bluestein(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    chirp = np.exp(sign * 1j * np.pi * (k * k % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:][::-1])
    conv = _fft_pow2(_fft_pow2(a) * _fft_pow2(b), inverse=True) / m
    return conv[..., :n] * chirp


def fft(x, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    if x.shape[-1] < 1:
        raise ValueError("fft needs at least one sample")
    out = _fft_pow2(x) if _is_pow2(x.shape[-1]) else _bluestein(x)
    return np.moveaxis(out, -1, axis)


def ifft(X, axis: int = -1) -> np.ndarray:
    """Inverse DFT carrying the 1/T factor."""
    X = np.moveaxis(np.asarray(X, dtype=np.complex128), axis, -1)
    n = X.shape[-1]
    out = (_fft_pow2(X, inverse=True) if _is_pow2(n) else _bluestein(X, inverse=True)) / n
    return np.moveaxis(out, -1, axis)


def dft_naive(x, inverse: bool = False) -> np.ndarray:
    """O(T^2) reference DFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    w = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    out = x @ w.T
    return out / n if inverse else out


class _RealFFT(torch.autograd.Function):
    """Real input -> (real part, imag part) of the DFT along dim 1 of a 3-D tensor."""

    @staticmethod
    def forward(ctx, x):
        X = fft(x.detach().numpy(), axis=1)
        return (torch.from_numpy(np.ascontiguousarray(X.real)),
                torch.from_numpy(np.ascontiguousarray(X.imag)))

    @staticmethod
    def backward(ctx, g_re, g_im):
        T = g_re.shape[1]
        z = g_re.numpy() + 1j * g_im.numpy()
        gx = T * ifft(z, axis=1).real
        return torch.from_numpy(np.ascontiguousarray(gx))


class _RealIFFT(torch.autograd.Function):
    """(V_r, V_i) -> real part of IFFT(V_r + i V_i) along dim 1."""

    @staticmethod
    def forward(ctx, v_r, v_i):
        g = ifft(v_r.detach().numpy() + 1j * v_i.detach().numpy(), axis=1).real
        return torch.from_numpy(np.ascontiguousarray(g))

    @staticmethod
    def backward(ctx, grad):
        T = grad.shape[1]
        Z = fft(grad.numpy(), axis=1) / T
        return (torch.from_numpy(np.ascontiguousarray(Z.real)),
                torch.from_numpy(np.ascontiguousarray(Z.imag)))


def fft_real_imag(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable DFT of a real (A, T, C) tensor along T."""
    return _RealFFT.apply(x.to(DTYPE).contiguous())


def ifft_real(v_r: torch.Tensor, v_i: torch.Tensor) -> torch.Tensor:
    """Differentiable real part of the inverse DFT of (A, T, C) along T."""
    return _RealIFFT.apply(v_r.contiguous(), v_i.contiguous())


def amplitude_phase(v_r, v_i):
    """Amplitude sqrt(v_r^2 + v_i^2) and phase arctan(v_r / v_i).

    Where v_i == 0 the phase is sign(v_r) * pi/2 (0 if v_r is also 0). Works
    on torch tensors (differentiable away from those points) and numpy arrays.
    """
    if not isinstance(v_r, torch.Tensor):
        r, i = np.asarray(v_r, dtype=np.float64), np.asarray(v_i, dtype=np.float64)
        amp = np.sqrt(r * r + i * i)
        safe = np.where(i == 0, 1.0, i)
        phase = np.where(i == 0, np.sign(r) * np.pi / 2, np.arctan(r / safe))
        return amp, phase
    sq = v_r * v_r + v_i * v_i
    pos = sq > 0
    amp = torch.where(pos, torch.sqrt(torch.where(pos, sq, torch.ones_like(sq))),
                      torch.zeros_like(sq))
    zero_i = v_i == 0
    safe = torch.where(zero_i, torch.ones_like(v_i), v_i)
    phase = torch.where(zero_i, torch.sign(v_r) * (np.pi / 2), torch.atan(v_r / safe))
    return amp, phase


# -------------------------------------------------------------------- ST-Norm

def stnorm(x: torch.Tensor, gain: torch.Tensor | None = None,
           bias: torch.Tensor | None = None, eps: float = EPS_STNORM) -> torch.Tensor:
    """Standardise along axis 0, then apply an optional per-feature affine.

    Mean and (population) std are taken over axis 0 for every remaining
    index; the divisor is ``std + eps``. ``gain``/``bias`` broadcast against
    the last axis.
    """
    if x.shape[0] < 2:
        raise ValueError("stnorm needs at least two entries along axis 0")
    mean = x.mean(dim=0, keepdim=True)
    std = ((x - mean) ** 2).mean(dim=0, keepdim=True).sqrt()
    out = (x - mean) / (std + eps)
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out
