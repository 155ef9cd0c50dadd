import numpy as np
import pytest
import torch

from fcdnet.numeric import DTYPE, ShapeError
from fcdnet.stfe import STFE, pad_batch


def test_pad_batch_repeats_last():
    padded, valid = pad_batch(np.array([1, 2, 3]), 5)
    np.testing.assert_array_equal(padded, [1, 2, 3, 3, 3])
    np.testing.assert_array_equal(valid, [True, True, True, False, False])
    with pytest.raises(ValueError):
        pad_batch(np.array([1, 2, 3]), 2)
    with pytest.raises(ValueError):
        pad_batch(np.array([]), 2)


def stfe_oracle(stfe: STFE, x: np.ndarray) -> np.ndarray:
    """numpy re-derivation using np.fft and the module's weights."""
    B, T, N, D = x.shape
    w = {k: v.detach().numpy() for k, v in stfe.named_parameters()}
    xh = x.transpose(2, 1, 0, 3).reshape(N, T, B * D)
    spec = np.fft.fft(xh, axis=1)
    vr = spec.real @ w["w_u_real.weight"].T + w["w_u_real.bias"]
    vi = spec.imag @ w["w_u_imag.weight"].T + w["w_u_imag.bias"]
    amp = np.sqrt(vr ** 2 + vi ** 2)
    phase = np.arctan(vr / vi)
    g = np.fft.ifft(vr + 1j * vi, axis=1).real
    m = (g.transpose(1, 0, 2) @ w["w_g"] + amp.transpose(1, 0, 2) @ w["w_m"]
         + phase.transpose(1, 0, 2) @ w["w_s"])
    return 1 / (1 + np.exp(-np.einsum("t,tij->ij", w["w_t"], m)))


def test_stfe_matches_numpy_oracle():
    torch.manual_seed(0)
    stfe = STFE(batch_size=3, in_dim=2, input_len=12, num_nodes=4, features=5)
    x = np.random.default_rng(0).normal(size=(3, 12, 4, 2))
    got = stfe(torch.as_tensor(x)).detach().numpy()
    np.testing.assert_allclose(got, stfe_oracle(stfe, x), atol=1e-10)


def test_stfe_graph_range_and_batch_sensitivity():
    torch.manual_seed(1)
    stfe = STFE(batch_size=2, in_dim=1, input_len=8, num_nodes=3, features=4)
    x1 = torch.randn(2, 8, 3, 1, dtype=DTYPE)
    x2 = torch.randn(2, 8, 3, 1, dtype=DTYPE)
    a1, a2 = stfe(x1), stfe(x2)
    assert a1.shape == (3, 3)
    assert ((a1 >= 0) & (a1 <= 1)).all()
    assert not torch.allclose(a1, a2)
    assert torch.equal(a1, stfe(x1.clone()))


def test_stfe_time_contraction_starts_uniform():
    stfe = STFE(batch_size=2, in_dim=1, input_len=8, num_nodes=3)
    np.testing.assert_allclose(stfe.w_t.detach().numpy(), np.full(8, 1 / 8))


def test_stfe_rejects_unpadded_batch():
    stfe = STFE(batch_size=4, in_dim=1, input_len=8, num_nodes=3)
    with pytest.raises(ShapeError, match="pad"):
        stfe(torch.zeros(3, 8, 3, 1, dtype=DTYPE))
