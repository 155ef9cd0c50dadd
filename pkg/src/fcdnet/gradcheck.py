"""Finite-difference checks for every parameterised operation, grouped by scope."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from . import signal
from .forecaster import FAGRUCell, FagwnLayer, fuse_outputs, gated_tcn
from .graphops import build_filters, fuse_gamma, logit, nonnegative, poly_graph_conv, unit_interval
from .ltfe import LtfeBranch, LtfePreprocessed, chi_squash, fuse_beta
from .model import FCDNet, ModelConfig
from .numeric import DTYPE, GradCheckReport, dilated_causal_conv1d, grad_check
from .stfe import STFE

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3

Builder = Callable[[torch.Generator], tuple[Callable[[], torch.Tensor], dict[str, torch.Tensor]]]


@dataclass
class Check:
    scope: str
    name: str
    build: Builder
    threshold: float = OP_TOLERANCE
    max_entries: int | None = None

    def run(self, seed: int = 0) -> GradCheckReport:
        gen = torch.Generator().manual_seed(seed)
        torch.manual_seed(seed)
        fn, params = self.build(gen)
        return grad_check(fn, params, seed=seed, max_entries=self.max_entries,
                          name=f"{self.scope}.{self.name}", threshold=self.threshold)


def _rand(gen, *shape, lo=-1.0, hi=1.0, grad=True):
    t = torch.rand(*shape, generator=gen, dtype=DTYPE) * (hi - lo) + lo
    return t.requires_grad_(grad)


def _away_from_zero(gen, *shape, gap=1e-3):
    t = _rand(gen, *shape, grad=False)
    while (t.abs() < gap).any():
        t = torch.where(t.abs() < gap, _rand(gen, *shape, grad=False), t)
    return t.requires_grad_(True)


def _module_params(module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {n: p for n, p in module.named_parameters()}


# ---------------------------------------------------------------- builders

def _matmul(gen):
    a, b = _rand(gen, 3, 4), _rand(gen, 4, 2)
    return (lambda: a @ b), {"a": a, "b": b}


def _relu(gen):
    x = _away_from_zero(gen, 5, 4)
    return (lambda: torch.relu(x)), {"x": x}


def _causal_conv(gen):
    x, k, b = _rand(gen, 2, 3, 9), _rand(gen, 4, 3, 2), _rand(gen, 4)
    return (lambda: dilated_causal_conv1d(x, k, 2, b)), {"x": x, "kernel": k, "bias": b}


def _chi(gen):
    x = _rand(gen, 6, lo=0.1, hi=0.9)
    return (lambda: chi_squash(x)), {"x": x}


def _stnorm_affine(gen):
    x = _rand(gen, 5, 3, 4, grad=False)
    gain, bias = _rand(gen, 4), _rand(gen, 4)
    return (lambda: signal.stnorm(x, gain, bias)), {"gain": gain, "bias": bias}


def _fourier(gen):
    x = _rand(gen, 3, 12, 2)
    vr, vi = _rand(gen, 3, 12, 2), _rand(gen, 3, 12, 2)

    def fn():
        re, im = signal.fft_real_imag(x)
        return torch.cat([re, im, signal.ifft_real(vr, vi)])
    return fn, {"x": x, "v_r": vr, "v_i": vi}


def _amp_phase(gen):
    vr, vi = _away_from_zero(gen, 4, 3, gap=0.05), _away_from_zero(gen, 4, 3, gap=0.05)
    return (lambda: torch.cat(signal.amplitude_phase(vr, vi))), {"v_r": vr, "v_i": vi}


def _ltfe_branch(view: int):
    def build(gen):
        N, S, P, DL = 3, 3, 8, 2
        groups, length = (S, P) if view == 1 else (P, S)
        q = _rand(gen, N, groups * DL, length, grad=False)
        branch = LtfeBranch(groups, DL, N, channels=4, hidden=5)
        return (lambda: branch(q)), _module_params(branch)
    return build


def _beta(gen):
    a1, a2 = _rand(gen, 3, 3, lo=0, hi=1), _rand(gen, 3, 3, lo=0, hi=1)
    raw = torch.tensor(logit(0.9), dtype=DTYPE, requires_grad=True)
    return (lambda: fuse_beta(a1, a2, unit_interval(raw))), {"a1": a1, "a2": a2, "beta_raw": raw}


def _stfe(gen):
    stfe = STFE(batch_size=2, in_dim=1, input_len=8, num_nodes=3, features=4)
    x = _rand(gen, 2, 8, 3, 1, grad=False)
    return (lambda: stfe(x)), _module_params(stfe)


def _filters_gamma(gen):
    a = _rand(gen, 4, 4, lo=0.1, hi=1.0)
    raw = torch.tensor(logit(0.8), dtype=DTYPE, requires_grad=True)
    return (lambda: fuse_gamma(build_filters(a), unit_interval(raw))), {"a": a, "gamma_raw": raw}


def _poly_conv(gen):
    a = _rand(gen, 4, 4, lo=0, hi=1)
    x = _rand(gen, 2, 4, 3)
    ws = [_rand(gen, 3, 5) for _ in range(3)]
    params = {"a": a, "x": x, **{f"w{k}": w for k, w in enumerate(ws)}}
    return (lambda: poly_graph_conv(a, x, ws)), params


def _fagru_cell(gen):
    cell = FAGRUCell(in_dim=2, hidden=3)
    x, h = _rand(gen, 2, 4, 2), _rand(gen, 2, 4, 3)
    a = _rand(gen, 4, 4, lo=0, hi=0.5)
    return (lambda: cell(x, h, a)), {**_module_params(cell), "x": x, "h": h, "a_hat": a}


def _gated_tcn(gen):
    x = _rand(gen, 2, 3, 4, 8)
    t1, t2 = _rand(gen, 3, 3, 2), _rand(gen, 3, 3, 2)
    b1, b2 = _rand(gen, 3), _rand(gen, 3)
    return (lambda: gated_tcn(x, t1, t2, 2, b1, b2)), {"x": x, "theta1": t1, "theta2": t2,
                                                        "bias1": b1, "bias2": b2}


def _fagcn_layer(gen):
    layer = FagwnLayer(channels=3, dilation=2, kp=2)
    x = _rand(gen, 2, 8, 4, 3)      # channels-last (B, T, N, C)
    res = _rand(gen, 2, 8, 4, 3)
    a = _rand(gen, 4, 4, lo=0.1, hi=1.0)
    return (lambda: layer(x, build_filters(a), res)), {**_module_params(layer), "a_hf": a}


def _eta(gen):
    x1, x2 = _rand(gen, 2, 3, 4, 1), _rand(gen, 2, 3, 4, 1)
    raw = _rand(gen, 1)
    return (lambda: fuse_outputs(x1, x2, nonnegative(raw))), {"x1": x1, "x2": x2, "eta_raw": raw}


def tiny_model(gen: torch.Generator | None = None) -> tuple[FCDNet, torch.Tensor]:
    gen = gen or torch.Generator().manual_seed(0)
    cfg = ModelConfig(num_nodes=3, in_dim=1, out_dim=1, input_len=8, horizon=4, batch_size=2,
                      period=8, levels=3, fft_features=3, gru_hidden=4, residual_channels=4,
                      end_channels=4, ltfe_channels=3, ltfe_hidden=4)
    S, P, DL = 2, 8, 3
    pre = LtfePreprocessed(torch.randn(3, S * DL, P, generator=gen, dtype=DTYPE),
                           torch.randn(3, P * DL, S, generator=gen, dtype=DTYPE), S, P, DL)
    model = FCDNet(cfg, pre)
    x = torch.randn(2, 8, 3, 1, generator=gen, dtype=DTYPE)
    return model, x


def _full_model(gen):
    model, x = tiny_model(gen)
    return (lambda: model(x)), _module_params(model)


CHECKS: list[Check] = [
    Check("numeric", "matmul", _matmul, threshold=1e-6),
    Check("numeric", "relu", _relu, threshold=1e-6),
    Check("numeric", "dilated_causal_conv1d", _causal_conv),
    Check("signal", "fft_ifft", _fourier),
    Check("signal", "amplitude_phase", _amp_phase),
    Check("signal", "stnorm_affine", _stnorm_affine),
    Check("ltfe", "chi_squash", _chi, threshold=1e-5),
    Check("ltfe", "branch_view1", _ltfe_branch(1)),
    Check("ltfe", "branch_view2", _ltfe_branch(2)),
    Check("ltfe", "fuse_beta", _beta),
    Check("stfe", "pipeline", _stfe),
    Check("graphops", "filters_gamma", _filters_gamma),
    Check("graphops", "poly_graph_conv", _poly_conv),
    Check("forecaster", "fagru_cell", _fagru_cell),
    Check("forecaster", "gated_tcn", _gated_tcn),
    Check("forecaster", "fagcn_layer", _fagcn_layer),
    Check("forecaster", "fuse_eta", _eta),
    Check("model", "full", _full_model, threshold=MODEL_TOLERANCE, max_entries=12),
]

SCOPES = sorted({c.scope for c in CHECKS})


def run_checks(scope: str = "all", checks: list[Check] | None = None,
               seed: int = 0) -> list[GradCheckReport]:
    checks = CHECKS if checks is None else checks
    if scope != "all" and scope not in {c.scope for c in checks}:
        raise ValueError(f"unknown scope {scope!r}; choose from all, {', '.join(SCOPES)}")
    return [c.run(seed) for c in checks if scope in ("all", c.scope)]
