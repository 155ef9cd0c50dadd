import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fcdnet.graphops import (build_filters, fuse_gamma, inv_softplus, logit, nonnegative,
                             poly_graph_conv, power_series, sym_normalize, unit_interval)
from fcdnet.numeric import DTYPE, ShapeError, as_tensor


def norm_oracle(a, floor=1e-6):
    d = np.diag(1.0 / np.sqrt(a.sum(axis=1) + floor))
    return d @ a @ d


def test_raw_parameter_inverses():
    assert unit_interval(torch.tensor(logit(0.8))).item() == pytest.approx(0.8)
    assert nonnegative(torch.tensor(inv_softplus(0.1), dtype=DTYPE)).item() == pytest.approx(0.1)


def test_sym_normalize_matches_matrix_oracle():
    a = np.random.default_rng(0).random((5, 5))
    np.testing.assert_allclose(sym_normalize(as_tensor(a)).numpy(), norm_oracle(a), atol=1e-14)


def test_filters_frozen_two_node_example():
    # [DERIVED] A = [[0,1],[1,0]]: degrees 1 (+1e-6), normalised A is A / (1 + 1e-6)
    a = as_tensor([[0.0, 1.0], [1.0, 0.0]])
    fp = build_filters(a, eps=0.3)
    off = 1.0 / (1.0 + 1e-6)
    np.testing.assert_allclose(fp.f_low.numpy(), [[0.3, off], [off, 0.3]], atol=1e-15)
    np.testing.assert_allclose(fp.f_high.numpy(), [[0.3, -off], [-off, 0.3]], atol=1e-15)


def test_zero_graph_is_finite():
    fp = build_filters(torch.zeros(3, 3, dtype=DTYPE))
    assert torch.isfinite(fp.f_low).all()
    np.testing.assert_allclose(fp.f_low.numpy(), 0.3 * np.eye(3))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(0, 1)), st.floats(0, 1))
def test_filter_pair_identities(a, gamma):
    fp = build_filters(as_tensor(a), eps=0.3)
    np.testing.assert_allclose((fp.f_low + fp.f_high).numpy(), 0.6 * np.eye(4), atol=1e-12)
    mixed = fuse_gamma(fp, gamma).numpy()
    # gamma*(eI + S) + (1-gamma)*(eI - S) = eI + (2 gamma - 1) S
    s = norm_oracle(a)
    np.testing.assert_allclose(mixed, 0.3 * np.eye(4) + (2 * gamma - 1) * s, atol=1e-9)


def test_normalized_spectrum_bounded():
    # eigenvalues of D^-1/2 A D^-1/2 lie in [-1, 1] for symmetric nonnegative A
    a = np.random.default_rng(1).random((6, 6))
    a = a + a.T
    ev = np.linalg.eigvalsh(sym_normalize(as_tensor(a)).numpy())
    assert ev.min() >= -1 - 1e-12 and ev.max() <= 1 + 1e-12


def test_power_series_matches_matrix_power():
    rng = np.random.default_rng(2)
    a, x = rng.random((4, 4)), rng.normal(size=(2, 4, 3))
    terms = power_series(as_tensor(a), as_tensor(x), 3)
    for k, t in enumerate(terms):
        np.testing.assert_allclose(t.numpy(), np.linalg.matrix_power(a, k) @ x, atol=1e-12)


def test_power_series_other_node_axis():
    rng = np.random.default_rng(3)
    a, x = rng.random((4, 4)), rng.normal(size=(2, 4, 5, 3))  # nodes on axis 1
    terms = power_series(as_tensor(a), as_tensor(x), 2, node_axis=1)
    np.testing.assert_allclose(terms[2].numpy(), np.einsum("ij,bjtc->bitc", a @ a, x), atol=1e-12)


def test_poly_graph_conv_oracle_and_errors():
    rng = np.random.default_rng(4)
    a, x = rng.random((4, 4)), rng.normal(size=(2, 4, 3))
    ws = [rng.normal(size=(3, 5)) for _ in range(3)]
    got = poly_graph_conv(as_tensor(a), as_tensor(x), [as_tensor(w) for w in ws]).numpy()
    ref = sum(np.linalg.matrix_power(a, k) @ x @ w for k, w in enumerate(ws))
    np.testing.assert_allclose(got, ref, atol=1e-12)
    with pytest.raises(ShapeError):
        poly_graph_conv(as_tensor(a), as_tensor(x), [as_tensor(ws[0])], order=2)
    with pytest.raises(ShapeError):
        poly_graph_conv(as_tensor(np.eye(3)), as_tensor(x), [as_tensor(w) for w in ws])
