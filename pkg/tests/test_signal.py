import numpy as np
import pytest
import pywt
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fcdnet import signal
from fcdnet.numeric import DTYPE


def test_diff_leading_zero():
    np.testing.assert_array_equal(signal.diff(np.array([1.0, 4.0, 9.0])), [0.0, 3.0, 5.0])


def test_segment_drops_tail():
    s = signal.segment(np.arange(10), 3)
    assert s.shape == (3, 3)
    np.testing.assert_array_equal(s[2], [6, 7, 8])
    with pytest.raises(ValueError):
        signal.segment(np.arange(2), 3)


@pytest.mark.parametrize("order", [1, 2, 4, 6])
def test_daubechies_taps_match_pywt(order):
    ref = pywt.Wavelet(f"db{order}").rec_lo
    np.testing.assert_allclose(signal.daubechies_filter(order), ref, atol=1e-12)


def test_db4_first_tap_frozen():
    # [PAPER] tabulated db4 tap, cross-checked with PyWavelets
    assert signal.daubechies_filter(4)[0] == pytest.approx(0.23037781330885523, abs=1e-12)


@pytest.mark.parametrize("order,levels,n", [(4, 4, 288), (2, 3, 64), (1, 2, 12), (6, 4, 288)])
def test_dwt_matches_pywt_periodization(order, levels, n):
    x = np.random.default_rng(n).normal(size=(3, n))
    ours = signal.dwt_decompose(x, order, levels)
    ref = pywt.wavedec(x, f"db{order}", mode="periodization", level=levels, axis=-1)
    assert [c.shape[-1] for c in ours] == [c.shape[-1] for c in ref]
    for a, b in zip(ours, ref):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_coefficient_lengths_for_period_288():
    # [DERIVED] exact halving: 288 -> 144 -> 72 -> 36 -> 18
    coeffs = signal.dwt_decompose(np.zeros(288), 4, 4)
    assert [c.shape[-1] for c in coeffs] == [18, 18, 36, 72, 144]


def test_wavelet_length_check():
    with pytest.raises(signal.WaveletConfigError):
        signal.dwt_decompose(np.zeros(100), 4, 4)  # 100 is not divisible by 16


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)))
def test_perfect_reconstruction_property(x):
    rec = signal.dwt_reconstruct(signal.dwt_decompose(x, 4, 3), 4)
    np.testing.assert_allclose(rec, x, atol=1e-9 * max(1.0, np.abs(x).max()))


def test_level_rebuilds_sum_to_signal():
    x = np.random.default_rng(1).normal(size=288)
    parts = signal.reconstruct_levels(signal.dwt_decompose(x, 4, 4), 4)
    assert parts.shape == (288, 5)
    np.testing.assert_allclose(parts.sum(-1), x, atol=1e-10)


def test_gates_scale_levels_linearly():
    x = np.random.default_rng(2).normal(size=64)
    coeffs = signal.dwt_decompose(x, 4, 2)
    full = signal.reconstruct_levels(coeffs, 4)
    gated = signal.reconstruct_levels(signal.gate_coeffs(coeffs, [1.0, 0.1, 0.1]), 4)
    np.testing.assert_allclose(gated, full * np.array([1.0, 0.1, 0.1]), atol=1e-12)
    with pytest.raises(ValueError):
        signal.gate_coeffs(coeffs, [1.0])


def test_default_gates():
    assert signal.default_gates(5) == [1.0, 0.1, 0.1, 0.1, 0.1]


def test_wavelet_stack_shape():
    segs = np.random.default_rng(3).normal(size=(2, 16, 3, 2))  # (S, P, N, D)
    stack = signal.wavelet_stack(segs, 2, 3)
    assert stack.sub_series.shape == (2, 16, 3, 2, 3)
    assert stack.merged.shape == (2, 16, 3, 6)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 12, 16, 64, 7, 100])
def test_fft_matches_dft_oracle(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    np.testing.assert_allclose(signal.fft(x), signal.dft_naive(x), atol=1e-10)
    np.testing.assert_allclose(signal.fft(x), np.fft.fft(x), atol=1e-10)
    np.testing.assert_allclose(signal.ifft(signal.fft(x)), x, atol=1e-12)


def test_dft_naive_frozen_values():
    # [TRIVIAL] DFT of [1, 0, 0, 0] is all ones; DFT of ones is [4, 0, 0, 0]
    np.testing.assert_allclose(signal.dft_naive([1, 0, 0, 0]), np.ones(4), atol=1e-15)
    np.testing.assert_allclose(signal.dft_naive(np.ones(4)), [4, 0, 0, 0], atol=1e-12)


def test_fft_along_axis():
    x = np.random.default_rng(5).normal(size=(3, 8, 2))
    np.testing.assert_allclose(signal.fft(x, axis=1), np.fft.fft(x, axis=1), atol=1e-12)


def test_torch_fft_pair_roundtrip():
    x = torch.randn(3, 12, 4, dtype=DTYPE)
    re, im = signal.fft_real_imag(x)
    ref = np.fft.fft(x.numpy(), axis=1)
    np.testing.assert_allclose(re.numpy(), ref.real, atol=1e-12)
    np.testing.assert_allclose(im.numpy(), ref.imag, atol=1e-12)
    np.testing.assert_allclose(signal.ifft_real(re, im).numpy(), x.numpy(), atol=1e-12)


def test_amplitude_phase_values():
    amp, phase = signal.amplitude_phase(np.array([3.0, 1.0, -2.0, 0.0]), np.array([4.0, 1.0, 0.0, 0.0]))
    np.testing.assert_allclose(amp, [5.0, np.sqrt(2), 2.0, 0.0])
    np.testing.assert_allclose(phase, [np.arctan(0.75), np.pi / 4, -np.pi / 2, 0.0])
    ta, tp = signal.amplitude_phase(torch.tensor([3.0, -2.0], dtype=DTYPE),
                                    torch.tensor([4.0, 0.0], dtype=DTYPE))
    np.testing.assert_allclose(ta.numpy(), [5.0, 2.0])
    np.testing.assert_allclose(tp.numpy(), [np.arctan(0.75), -np.pi / 2])


def test_amplitude_has_finite_gradient_at_origin():
    vr = torch.zeros(2, dtype=DTYPE, requires_grad=True)
    vi = torch.zeros(2, dtype=DTYPE, requires_grad=True)
    amp, phase = signal.amplitude_phase(vr, vi)
    (amp.sum() + phase.sum()).backward()
    assert torch.isfinite(vr.grad).all() and torch.isfinite(vi.grad).all()


def test_stnorm_standardizes_along_axis0():
    x = torch.tensor([[2.0], [4.0], [6.0]], dtype=DTYPE)
    # [DERIVED] mean 4, population std sqrt(8/3); divisor std + 1e-5
    std = np.sqrt(8 / 3)
    expected = np.array([[-2.0], [0.0], [2.0]]) / (std + 1e-5)
    np.testing.assert_allclose(signal.stnorm(x).numpy(), expected, atol=1e-15)


def test_stnorm_affine_and_shape_check():
    x = torch.randn(5, 3, 2, dtype=DTYPE)
    gain = torch.tensor([2.0, 3.0], dtype=DTYPE)
    bias = torch.tensor([1.0, -1.0], dtype=DTYPE)
    np.testing.assert_allclose(signal.stnorm(x, gain, bias).numpy(),
                               (signal.stnorm(x) * gain + bias).numpy())
    with pytest.raises(ValueError):
        signal.stnorm(torch.zeros(1, 3, dtype=DTYPE))
