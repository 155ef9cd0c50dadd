import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fcdnet.numeric import (DTYPE, AdamState, NumericError, ShapeError, adam_step, as_tensor,
                            backward, check_finite, clip_grad_norm, dilated_causal_conv1d,
                            grad_check, receptive_field)


def conv_oracle(x, kernel, dilation, bias=None):
    """Direct quadruple loop, independent of the implementation."""
    B, C_in, T = x.shape
    C_out, _, k = kernel.shape
    out_len = T - (k - 1) * dilation
    out = np.zeros((B, C_out, out_len))
    for b in range(B):
        for o in range(C_out):
            for t in range(out_len):
                s = 0.0
                for c in range(C_in):
                    for j in range(k):
                        s += kernel[o, c, j] * x[b, c, t + j * dilation]
                out[b, o, t] = s + (0.0 if bias is None else bias[o])
    return out


def test_receptive_field_default_stack():
    # [DERIVED] 1 + (2-1)*(1+2+1+2)
    assert receptive_field(2, [1, 2, 1, 2]) == 7


@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_dilated_conv_matches_loop(dilation):
    rng = np.random.default_rng(dilation)
    x, k, b = rng.normal(size=(2, 3, 11)), rng.normal(size=(4, 3, 2)), rng.normal(size=4)
    got = dilated_causal_conv1d(as_tensor(x), as_tensor(k), dilation, as_tensor(b)).numpy()
    np.testing.assert_allclose(got, conv_oracle(x, k, dilation, b), atol=1e-12)


def test_dilated_conv_is_causal():
    # changing x at time t only affects outputs whose window reaches t
    x = torch.zeros(1, 1, 8, dtype=DTYPE)
    k = torch.ones(1, 1, 2, dtype=DTYPE)
    y0 = dilated_causal_conv1d(x, k, 2)
    x[0, 0, 5] = 1.0
    changed = (dilated_causal_conv1d(x, k, 2) != y0).nonzero()[:, 2].tolist()
    assert changed == [3, 5]  # windows [3, 5] and [5, 7]


def test_dilated_conv_rejects_short_input():
    with pytest.raises(ShapeError):
        dilated_causal_conv1d(torch.zeros(1, 1, 2, dtype=DTYPE), torch.zeros(1, 1, 2, dtype=DTYPE), 2)
    with pytest.raises(ShapeError):
        dilated_causal_conv1d(torch.zeros(1, 2, 9, dtype=DTYPE), torch.zeros(1, 3, 2, dtype=DTYPE))


def test_adam_single_step_frozen():
    # [DERIVED] m=0.05, v=2.5e-4, m_hat=0.5, v_hat=0.25 -> step 0.1*0.5/(0.5+1e-8)
    p = torch.tensor([1.0], dtype=DTYPE)
    g = torch.tensor([0.5], dtype=DTYPE)
    state = AdamState.for_params([p])
    adam_step([p], [g], state, lr=0.1)
    assert state.t == 1
    assert p.item() == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-15)
    assert state.m[0].item() == pytest.approx(0.05)
    assert state.v[0].item() == pytest.approx(2.5e-4)


def test_adam_matches_torch_optim():
    # torch.optim.Adam is used only as an oracle here
    rng = np.random.default_rng(0)
    p0 = rng.normal(size=(3, 4))
    ours = as_tensor(p0)
    ref = torch.nn.Parameter(as_tensor(p0))
    opt = torch.optim.Adam([ref], lr=1e-2, eps=1e-8)
    state = AdamState.for_params([ours])
    for _ in range(5):
        g = as_tensor(rng.normal(size=(3, 4)))
        adam_step([ours], [g.clone()], state, lr=1e-2)
        ref.grad = g.clone()
        opt.step()
    np.testing.assert_allclose(ours.numpy(), ref.detach().numpy(), atol=1e-12)


def test_adam_rejects_mismatched_shapes():
    p = torch.zeros(3, dtype=DTYPE)
    with pytest.raises(ValueError):
        adam_step([p], [torch.zeros(2, dtype=DTYPE)], AdamState.for_params([p]), lr=0.1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(1e-4, 1.0))
def test_adam_zero_gradient_is_a_fixed_point(values, lr):
    p = as_tensor(values)
    before = p.clone()
    adam_step([p], [torch.zeros_like(p)], AdamState.for_params([p]), lr)
    assert torch.equal(p, before)


def test_clip_grad_norm():
    g = [torch.tensor([3.0, 4.0], dtype=DTYPE)]
    assert clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(g[0].numpy(), [0.6, 0.8], atol=1e-12)
    g = [torch.tensor([0.3, 0.4], dtype=DTYPE)]
    clip_grad_norm(g, 1.0)
    np.testing.assert_allclose(g[0].numpy(), [0.3, 0.4])


def test_backward_unused_parameter_gets_zeros():
    a = torch.tensor([2.0], dtype=DTYPE, requires_grad=True)
    b = torch.tensor([1.0, 1.0], dtype=DTYPE, requires_grad=True)
    ga, gb = backward((a * a).sum(), [a, b])
    assert ga.item() == 4.0
    assert torch.equal(gb, torch.zeros(2, dtype=DTYPE))


def test_backward_rejects_nonfinite_loss_and_nonscalar():
    a = torch.tensor([1.0], dtype=DTYPE, requires_grad=True)
    with pytest.raises(NumericError):
        backward((a * float("nan")).sum(), [a])
    with pytest.raises(ValueError):
        backward(a * torch.ones(2, dtype=DTYPE), [a])


def test_check_finite():
    check_finite(torch.ones(2))
    with pytest.raises(NumericError):
        check_finite(torch.tensor([1.0, float("inf")]))


def test_grad_check_passes_on_correct_op():
    w = torch.randn(4, 3, dtype=DTYPE, requires_grad=True)
    x = torch.randn(3, 2, dtype=DTYPE)
    report = grad_check(lambda: torch.tanh(w @ x), {"w": w}, threshold=1e-6)
    assert report.passed
    assert report.max_rel_error < 1e-8


class _WrongGrad(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return x * x

    @staticmethod
    def backward(ctx, g):
        (x,) = ctx.saved_tensors
        return g * x  # should be 2 x


def test_grad_check_flags_corrupted_gradient():
    x = torch.randn(5, dtype=DTYPE, requires_grad=True)
    report = grad_check(lambda: _WrongGrad.apply(x), {"x": x}, name="square", threshold=1e-4)
    assert not report.passed
    assert report.name == "square"
    assert report.per_param["x"] == pytest.approx(0.5, abs=1e-6)  # |x - 2x| / |2x|


def test_grad_check_restores_parameters():
    w = torch.randn(6, dtype=DTYPE, requires_grad=True)
    before = w.detach().clone()
    grad_check(lambda: w.sin(), [w], max_entries=3)
    assert torch.equal(w.detach(), before)
