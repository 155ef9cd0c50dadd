"""Masked-MAE training loop, step-decay schedule and evaluation metrics."""

from __future__ import annotations

import copy
import csv
import logging
import time
from decimal import Decimal
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import NormStats, SeriesFrame, WindowSet, make_windows, persistence_forecast, zscore_fit
from .ltfe import LtfePreprocessed, ltfe_preprocess
from .model import ABLATIONS, FCDNet, ModelConfig
from .numeric import DTYPE, AdamState, NumericError, adam_step, backward, clip_grad_norm

log = logging.getLogger(__name__)

# no wall-clock column: a replayed run must reproduce the log byte for byte
LOG_FIELDS = ("epoch", "lr", "train_mae", "val_mae", "val_rmse", "val_mape")


@dataclass
class TrainConfig:
    lr: float = 3e-3
    lr_decay: float = 0.1
    decay_every: int = 10
    lr_min: float = 3e-5
    epochs: int = 250
    batch_size: int = 64
    seed: int = 0
    ablation: str = "full"
    clip_norm: float = 5.0
    shuffle: bool = True

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")


def lr_schedule(epoch: int, cfg: TrainConfig | None = None) -> float:
    cfg = cfg or TrainConfig()
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    # decimal arithmetic on the written values, so 3e-3 decays to the float 3e-4 exactly
    lr = Decimal(repr(cfg.lr)) * Decimal(repr(cfg.lr_decay)) ** (epoch // cfg.decay_every)
    return max(float(lr), cfg.lr_min)


# -------------------------------------------------------------------- metrics

def masked_mae(pred, target, mask):
    """sum(mask * |pred - target|) / sum(mask); works on numpy or torch.

    Masked-out entries are dropped before the arithmetic, so whatever they
    hold (NaN included) cannot leak into the result or its gradient.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if isinstance(pred, torch.Tensor):
        m = torch.as_tensor(mask, dtype=torch.bool).expand(pred.shape)
        if not m.any():
            raise ValueError("every target in the batch is masked")
        return (pred[m] - torch.as_tensor(target, dtype=pred.dtype)[m]).abs().mean()
    m = np.broadcast_to(np.asarray(mask, dtype=bool), pred.shape)
    if not m.any():
        raise ValueError("every target in the batch is masked")
    return float(np.abs(pred[m] - target[m]).mean())


@dataclass
class MetricReport:
    mae: float
    rmse: float
    mape: float | None                   # percent; None when no nonzero targets
    horizon_mae: list[float] = field(default_factory=list)
    horizon_rmse: list[float] = field(default_factory=list)
    horizon_mape: list[float | None] = field(default_factory=list)
    masked_out: int = 0
    mape_excluded: int = 0

    def lines(self) -> list[str]:
        def fmt(v):
            return "n/a" if v is None else f"{v:.6f}"
        out = [f"MAE  {self.mae:.6f}", f"RMSE {self.rmse:.6f}",
               f"MAPE {fmt(self.mape)}" + ("%" if self.mape is not None else
                                          " (omitted: no nonzero targets)")]
        if self.mape_excluded and self.mape is not None:
            out.append(f"note: {self.mape_excluded} zero-valued targets left out of MAPE")
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "mae", "rmse", "mape"])
            for h, (a, r, p) in enumerate(zip(self.horizon_mae, self.horizon_rmse,
                                              self.horizon_mape), start=1):
                w.writerow([h, a, r, "" if p is None else p])
            w.writerow(["avg", self.mae, self.rmse, "" if self.mape is None else self.mape])


def _support_metrics(err: np.ndarray, tgt: np.ndarray):
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    nz = tgt != 0
    mape = float((np.abs(err[nz]) / np.abs(tgt[nz])).mean() * 100.0) if nz.any() else None
    return mae, rmse, mape, int((~nz).sum())


def metrics(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> MetricReport:
    """MAE / RMSE / MAPE over observed entries, overall and per horizon step.

    ``pred``/``target`` are (W, E, N, D); ``mask`` is (W, E, N) or full shape.
    """
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    m = np.asarray(mask, dtype=bool)
    if m.ndim == pred.ndim - 1:
        m = m[..., None]
    m = np.broadcast_to(m, pred.shape)
    if not m.any():
        raise ValueError("no observed targets to score")
    mae, rmse, mape, excluded = _support_metrics(pred[m] - target[m], target[m])
    h_mae, h_rmse, h_mape = [], [], []
    for h in range(pred.shape[1]):
        mh = m[:, h]
        if not mh.any():
            h_mae.append(float("nan")); h_rmse.append(float("nan")); h_mape.append(None)
            continue
        a, r, p, _ = _support_metrics(pred[:, h][mh] - target[:, h][mh], target[:, h][mh])
        h_mae.append(a); h_rmse.append(r); h_mape.append(p)
    return MetricReport(mae, rmse, mape, h_mae, h_rmse, h_mape,
                        masked_out=int((~m).sum()), mape_excluded=excluded)


# ----------------------------------------------------------------- prediction

def denormalize(pred: torch.Tensor, stats: NormStats, out_dim: int) -> torch.Tensor:
    mean = torch.as_tensor(stats.mean[:out_dim], dtype=DTYPE)
    std = torch.as_tensor(stats.std[:out_dim], dtype=DTYPE)
    return pred * std + mean


@torch.no_grad()
def predict(model: FCDNet, windows: WindowSet, batch_size: int | None = None) -> np.ndarray:
    """Raw-scale forecasts for every window, (W, E, N, D_out); short batches are padded."""
    batch_size = batch_size or model.cfg.batch_size
    model.eval()
    outs = []
    for batch in windows.batches(batch_size, drop_last=False, pad=True):
        x = torch.as_tensor(batch.inputs, dtype=DTYPE)
        y = denormalize(model(x), windows.norm_stats, model.cfg.out_dim)
        outs.append(y.numpy()[batch.valid])
    return np.concatenate(outs, axis=0)


def evaluate(model: FCDNet, windows: WindowSet, batch_size: int | None = None) -> MetricReport:
    pred = predict(model, windows, batch_size)
    D_out = model.cfg.out_dim
    return metrics(pred, windows.targets[..., :D_out], windows.target_mask)


def persistence_mae(raw: SeriesFrame, T_in: int, E: int, split: str = "train") -> float:
    w = make_windows(raw, T_in, E, split)
    pred = persistence_forecast(raw, w, T_in, E)
    return masked_mae(pred, w.targets, np.broadcast_to(w.target_mask[..., None], pred.shape))


# ------------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: FCDNet                     # carries the best-validation parameters
    log: list[dict]
    best_epoch: int
    best_val_mae: float
    final_state: dict                 # parameters after the last epoch
    norm_stats: NormStats
    model_config: ModelConfig
    train_config: TrainConfig


def resolve_model_config(model_cfg: ModelConfig, train_cfg: TrainConfig,
                         frame: SeriesFrame) -> ModelConfig:
    cfg = copy.deepcopy(model_cfg)
    T, N, D = frame.values.shape
    cfg.num_nodes, cfg.in_dim = N, D
    if not cfg.out_dim or cfg.out_dim > D:
        cfg.out_dim = D
    cfg.batch_size = train_cfg.batch_size
    cfg.ablation = train_cfg.ablation
    return cfg


def preprocess_frame(frame: SeriesFrame, stats: NormStats, cfg: ModelConfig) -> LtfePreprocessed:
    train = frame.part("train")
    norm = np.where(train.mask[..., None], stats.apply(train.values), 0.0)
    return ltfe_preprocess(norm, cfg.period, cfg.levels, cfg.wavelet_order, cfg.gates)


def build_model(frame: SeriesFrame, model_cfg: ModelConfig, train_cfg: TrainConfig,
                ) -> tuple[FCDNet, NormStats]:
    cfg = resolve_model_config(model_cfg, train_cfg, frame)
    stats = zscore_fit(frame)
    pre = preprocess_frame(frame, stats, cfg)
    torch.manual_seed(train_cfg.seed)
    return FCDNet(cfg, pre), stats


@torch.enable_grad()  # a caller's no_grad block would otherwise freeze every parameter
def train(frame: SeriesFrame, model_cfg: ModelConfig, train_cfg: TrainConfig,
          log_path=None, progress: bool = False) -> TrainResult:
    """Fit FCDNet with Adam on masked MAE over de-normalised forecasts.

    Batches are drawn in a seeded shuffled order with the last partial batch
    dropped. The model with the lowest validation MAE is returned.
    """
    torch.set_num_threads(1)
    model, stats = build_model(frame, model_cfg, train_cfg)
    cfg = model.cfg
    train_w = make_windows(frame, cfg.input_len, cfg.horizon, "train", stats)
    val_w = make_windows(frame, cfg.input_len, cfg.horizon, "val", stats)
    if len(train_w) < train_cfg.batch_size and train_cfg.epochs > 0:
        raise ValueError(f"{len(train_w)} training windows cannot fill one batch of "
                         f"{train_cfg.batch_size}")
    params = [p for p in model.parameters() if p.requires_grad]
    state = AdamState.for_params(params)
    rng = np.random.default_rng(train_cfg.seed)
    best_state = copy.deepcopy(model.state_dict())
    best_val, best_epoch = float("inf"), -1
    rows: list[dict] = []
    D_out = cfg.out_dim
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(epoch, train_cfg)
        order = rng.permutation(len(train_w)) if train_cfg.shuffle else None
        model.train()
        total, count = 0.0, 0
        for b, batch in enumerate(train_w.batches(train_cfg.batch_size, drop_last=True, order=order)):
            mask = batch.loss_mask()
            if not mask.any():
                continue
            x = torch.as_tensor(batch.inputs, dtype=DTYPE)
            pred = denormalize(model(x), stats, D_out)
            target = torch.as_tensor(batch.targets[..., :D_out], dtype=DTYPE)
            m = torch.as_tensor(mask)[..., None]
            loss = masked_mae(pred, target, m)
            if not torch.isfinite(loss):
                raise NumericError(f"loss diverged at epoch {epoch}, batch {b}")
            grads = backward(loss, params)
            if train_cfg.clip_norm:
                clip_grad_norm(grads, train_cfg.clip_norm)
            adam_step(params, grads, state, lr)
            n = int(m.expand(pred.shape).sum())
            total += loss.item() * n
            count += n
        rep = evaluate(model, val_w, train_cfg.batch_size)
        row = {"epoch": epoch, "lr": lr, "train_mae": total / max(count, 1),
               "val_mae": rep.mae, "val_rmse": rep.rmse,
               "val_mape": "" if rep.mape is None else rep.mape}
        rows.append(row)
        if rep.mae < best_val:
            best_val, best_epoch = rep.mae, epoch
            best_state = copy.deepcopy(model.state_dict())
        if progress:
            log.info("epoch %d lr %.2e train %.5f val %.5f (%.1fs)", epoch, lr, row["train_mae"],
                     rep.mae, time.perf_counter() - t0)
        if log_path is not None:
            write_log(rows, log_path)
    final_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    if log_path is not None:
        write_log(rows, log_path)
    return TrainResult(model, rows, best_epoch, best_val, final_state, stats, cfg, train_cfg)


def write_log(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(result: TrainResult, path, state: dict | None = None) -> None:
    torch.save({
        "model_config": result.model_config.to_dict(),
        "train_config": asdict(result.train_config),
        "state_dict": result.model.state_dict() if state is None else state,
        "preprocessed": result.model.preprocessed.to_dict(),
        "norm_mean": result.norm_stats.mean, "norm_std": result.norm_stats.std,
        "best_epoch": result.best_epoch,
    }, path)


def load_checkpoint(path) -> tuple[FCDNet, NormStats, dict]:
    blob = torch.load(path, weights_only=False)
    cfg = ModelConfig(**blob["model_config"])
    pre = LtfePreprocessed.from_dict(blob["preprocessed"])
    model = FCDNet(cfg, pre)
    model.load_state_dict(blob["state_dict"])
    stats = NormStats(np.asarray(blob["norm_mean"]), np.asarray(blob["norm_std"]))
    return model, stats, blob
