"""FCDNet: both graph extractors wired to both forecasters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .forecaster import FAGRU, FAGWN, OutputFusion
from .graphops import build_filters, fuse_gamma, logit, unit_interval
from .ltfe import LTFE, LtfePreprocessed, chi_squash
from .numeric import DTYPE
from .stfe import STFE

ABLATIONS = ("full", "no_ltfe", "no_stfe")


@dataclass
class ModelConfig:
    num_nodes: int = 0
    in_dim: int = 1
    out_dim: int = 0  # 0 = forecast every input feature
    input_len: int = 12
    horizon: int = 12
    batch_size: int = 64
    period: int = 288
    levels: int = 5
    wavelet_order: int = 4
    gate_approx: float = 1.0
    gate_detail: float = 0.1
    fft_features: int = 10
    eps: float = 0.3
    gru_order: int = 2
    kp: int = 2
    dilations: tuple[int, ...] = (1, 2, 1, 2)
    kernel_size: int = 2
    gru_hidden: int = 64
    residual_channels: int = 32
    end_channels: int = 64
    ltfe_channels: int = 16
    ltfe_hidden: int = 64
    beta_init: float = 0.9
    gamma_init: float = 0.8
    eta_init: float = 0.1
    chi_tau: float = 1.0
    ablation: str = "full"
    rank: int = 10

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    @property
    def gates(self) -> list[float]:
        return [self.gate_approx] + [self.gate_detail] * (self.levels - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


class LowRankGraph(nn.Module):
    """chi(E1 E2^T) with trainable N x rank factors; the ablation stand-in."""

    def __init__(self, num_nodes: int, rank: int = 10, tau: float = 1.0):
        super().__init__()
        self.tau = tau
        self.e1 = nn.Parameter(torch.randn(num_nodes, rank, dtype=DTYPE) / rank ** 0.5)
        self.e2 = nn.Parameter(torch.randn(num_nodes, rank, dtype=DTYPE) / rank ** 0.5)

    def forward(self, *_unused) -> torch.Tensor:
        return chi_squash(self.e1 @ self.e2.T, self.tau)


def ablate(mode: str, num_nodes: int, rank: int = 10, tau: float = 1.0) -> LowRankGraph:
    if mode not in ("no_ltfe", "no_stfe"):
        raise ValueError(f"no graph substitution for mode {mode!r}")
    return LowRankGraph(num_nodes, rank, tau)


class FCDNet(nn.Module):
    def __init__(self, cfg: ModelConfig, pre: LtfePreprocessed):
        super().__init__()
        if not cfg.out_dim:
            cfg.out_dim = cfg.in_dim
        self.cfg = cfg
        N = cfg.num_nodes
        self.register_buffer("q1", pre.q1.clone())
        self.register_buffer("q2", pre.q2.clone())
        self._shape = (pre.S, pre.P, pre.DL)
        if cfg.ablation == "no_ltfe":
            self.ltfe = ablate("no_ltfe", N, cfg.rank, cfg.chi_tau)
        else:
            self.ltfe = LTFE(N, pre.S, pre.P, pre.DL, cfg.ltfe_channels, cfg.ltfe_hidden,
                             cfg.beta_init, cfg.chi_tau)
        if cfg.ablation == "no_stfe":
            self.stfe = ablate("no_stfe", N, cfg.rank, cfg.chi_tau)
        else:
            self.stfe = STFE(cfg.batch_size, cfg.in_dim, cfg.input_len, N, cfg.fft_features,
                             cfg.chi_tau)
        self.gamma_raw = nn.Parameter(torch.tensor(logit(cfg.gamma_init), dtype=DTYPE))
        self.fagru = FAGRU(cfg.in_dim, cfg.out_dim, cfg.horizon, cfg.gru_hidden, cfg.gru_order)
        self.fagwn = FAGWN(cfg.in_dim, cfg.out_dim, cfg.input_len, cfg.horizon,
                           cfg.residual_channels, cfg.end_channels, cfg.kp, cfg.dilations,
                           cfg.kernel_size)
        self.fusion = OutputFusion(cfg.eta_init)

    @property
    def preprocessed(self) -> LtfePreprocessed:
        S, P, DL = self._shape
        return LtfePreprocessed(self.q1, self.q2, S, P, DL)

    @property
    def gamma(self) -> torch.Tensor:
        return unit_interval(self.gamma_raw)

    def low_graph(self) -> torch.Tensor:
        if isinstance(self.ltfe, LowRankGraph):
            return self.ltfe()
        return self.ltfe(self.preprocessed)

    def high_graph(self, x_in: torch.Tensor) -> torch.Tensor:
        return self.stfe(x_in)

    def forward(self, x_in: torch.Tensor, return_graphs: bool = False):
        x_in = x_in.to(DTYPE)
        a_lf = self.low_graph()
        a_hf = self.high_graph(x_in)
        a_hat = fuse_gamma(build_filters(a_lf, self.cfg.eps), self.gamma)
        out1 = self.fagru(x_in, a_hat)
        out2 = self.fagwn(x_in, build_filters(a_hf, self.cfg.eps))
        out = self.fusion(out1, out2)
        if return_graphs:
            return out, a_lf, a_hf
        return out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
