"""Series ingestion, normalisation, windowing and the planted-graph generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

SPLIT_NAMES = ("train", "val", "test")


class DataError(ValueError):
    """Bad input data: malformed files, degenerate features, short splits."""


@dataclass
class SeriesFrame:
    values: np.ndarray          # (T, N, D)
    mask: np.ndarray            # (T, N) bool, True = observed
    sample_rate: str = "unknown"
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"values must be (T, N, D), got shape {self.values.shape}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape[:2]:
            raise DataError("mask must be (T, N)")
        if not math.isclose(sum(self.split), 1.0, abs_tol=1e-9) or min(self.split) < 0:
            raise DataError(f"split fractions must be nonnegative and sum to 1: {self.split}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def bounds(self) -> dict[str, tuple[int, int]]:
        """Contiguous [start, end) index ranges of train, val and test."""
        T = self.values.shape[0]
        train_end = int(round(T * self.split[0]))
        val_end = int(round(T * (self.split[0] + self.split[1])))
        return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, T)}

    def part(self, name: str) -> "SeriesFrame":
        lo, hi = self.bounds()[name]
        return replace(self, values=self.values[lo:hi], mask=self.mask[lo:hi])

    def summary(self) -> str:
        T, N, D = self.values.shape
        items = [f"T={T}", f"N={N}", f"D={D}", f"sample_rate={self.sample_rate}",
                 "split=" + ":".join(f"{s:g}" for s in self.split),
                 f"missing={int((~self.mask).sum())}"]
        items += [f"{k}={v}" for k, v in sorted(self.meta.items())]
        return " ".join(items)


# ------------------------------------------------------------------------- I/O

def load_series(path, sample_rate: str = "unknown",
                split: tuple[float, float, float] = (0.6, 0.2, 0.2),
                **meta) -> SeriesFrame:
    """Read the ``T,N,D`` header CSV format.

    Row t holds N*D values, node-major (node 0's D features first). Cells
    that do not parse as finite numbers mark the node as missing at t.
    Extra keyword arguments (e.g. ``input_len=12``) are carried as metadata.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}:1: empty file")
    try:
        T, N, D = (int(v) for v in rows[0])
    except ValueError:
        raise DataError(f"{path}:1: header must be 'T,N,D' integers, got {rows[0]!r}") from None
    if min(T, N, D) < 1:
        raise DataError(f"{path}:1: T, N, D must be positive")
    body = [r for r in rows[1:] if r]
    if len(body) != T:
        raise DataError(f"{path}: header declares T={T} rows but found {len(body)}")
    values = np.zeros((T, N, D))
    mask = np.ones((T, N), dtype=bool)
    for t, row in enumerate(body):
        if len(row) != N * D:
            raise DataError(f"{path}:{t + 2}: expected {N * D} values, got {len(row)}")
        for c, cell in enumerate(row):
            n, d = divmod(c, D)
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if math.isfinite(v):
                values[t, n, d] = v
            else:
                mask[t, n] = False
    values[~mask] = 0.0
    return SeriesFrame(values, mask, sample_rate=sample_rate, split=tuple(split), meta=meta)


def write_series(frame: SeriesFrame, path) -> None:
    T, N, D = frame.values.shape
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([T, N, D])
        for t in range(T):
            row = []
            for n in range(N):
                for d in range(D):
                    row.append(repr(float(frame.values[t, n, d])) if frame.mask[t, n] else "NaN")
            w.writerow(row)


def write_matrix(mat: np.ndarray, path) -> None:
    """N x N CSV, one row per source-row index, full float precision."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(mat, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])


def read_matrix(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


# ------------------------------------------------------------- normalisation

@dataclass
class NormStats:
    mean: np.ndarray  # (D,)
    std: np.ndarray   # (D,)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def zscore_fit(frame: SeriesFrame) -> NormStats:
    """Per-feature mean/std (population) over observed training entries."""
    train = frame.part("train")
    obs = train.values[train.mask]  # (count, D)
    D = frame.values.shape[2]
    if obs.shape[0] < 2:
        raise DataError("training split needs at least two observed points per feature")
    mean = obs.mean(axis=0)
    std = obs.std(axis=0)
    for d in range(D):
        if not std[d] > 0:
            raise DataError(f"feature {d} has zero variance on the training split")
    return NormStats(mean, std)


def zscore_fit_apply(frame: SeriesFrame) -> tuple[SeriesFrame, NormStats]:
    stats = zscore_fit(frame)
    out = stats.apply(frame.values)
    out[~frame.mask] = frame.values[~frame.mask]
    return replace(frame, values=out), stats


# -------------------------------------------------------------------- windows

@dataclass
class ForecastBatch:
    inputs: np.ndarray       # (B, T_in, N, D), normalised, missing imputed with 0
    targets: np.ndarray      # (B, E, N, D_out), raw scale
    target_mask: np.ndarray  # (B, E, N) bool
    norm_stats: NormStats
    valid: np.ndarray        # (B,) bool, False on padded rows
    index: np.ndarray        # (B,) window start offsets within the split

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    def loss_mask(self) -> np.ndarray:
        return self.target_mask & self.valid[:, None, None]


@dataclass
class WindowSet:
    """All stride-1 windows of one split."""
    inputs: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    norm_stats: NormStats
    start: int  # absolute index of the split start

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def batches(self, batch_size: int, drop_last: bool = False, pad: bool = True,
                order: np.ndarray | None = None) -> Iterator[ForecastBatch]:
        from .stfe import pad_batch

        idx = np.arange(len(self)) if order is None else np.asarray(order)
        for lo in range(0, len(idx), batch_size):
            sel = idx[lo:lo + batch_size]
            if len(sel) < batch_size:
                if drop_last:
                    return
                if pad:
                    sel, valid = pad_batch(sel, batch_size)
                else:
                    valid = np.ones(len(sel), dtype=bool)
            else:
                valid = np.ones(len(sel), dtype=bool)
            yield ForecastBatch(self.inputs[sel], self.targets[sel], self.target_mask[sel],
                                self.norm_stats, np.asarray(valid, dtype=bool), sel)


def window_count(length: int, T_in: int, E: int) -> int:
    return length - T_in - E + 1


def make_windows(raw: SeriesFrame, T_in: int, E: int, split: str,
                 stats: NormStats | None = None) -> WindowSet:
    """Stride-1 windows fully inside one split.

    Inputs are normalised with ``stats`` (fitted on train if not given) and
    masked inputs are imputed with 0; targets stay on the raw scale.
    """
    if split not in SPLIT_NAMES:
        raise DataError(f"unknown split {split!r}")
    stats = zscore_fit(raw) if stats is None else stats
    lo, hi = raw.bounds()[split]
    count = window_count(hi - lo, T_in, E)
    if count < 1:
        raise DataError(f"{split} split has {hi - lo} steps, needs at least T_in + E = {T_in + E}")
    norm = stats.apply(raw.values[lo:hi])
    mask = raw.mask[lo:hi]
    norm = np.where(mask[..., None], norm, 0.0)
    vals = raw.values[lo:hi]
    starts = np.arange(count)
    ins = np.stack([norm[s:s + T_in] for s in starts])
    tgt = np.stack([vals[s + T_in:s + T_in + E] for s in starts])
    tmask = np.stack([mask[s + T_in:s + T_in + E] for s in starts])
    return WindowSet(ins, tgt, tmask, stats, lo)


def persistence_forecast(raw: SeriesFrame, windows: WindowSet, T_in: int, E: int) -> np.ndarray:
    """Repeat the last input value (raw scale) across the horizon."""
    last = windows.norm_stats.invert(windows.inputs[:, T_in - 1])  # (W, N, D)
    return np.repeat(last[:, None], E, axis=1)


# ---------------------------------------------------------- planted generator

@dataclass
class PlantedSystem:
    static_graph: np.ndarray            # (N, N) {0,1}, diagonal 1
    static_weights: np.ndarray          # (N, N) coupling on that support
    burst_graph: np.ndarray             # (N, N) {0,1}
    burst_weights: np.ndarray
    burst_schedule: list[tuple[int, int]]
    noise_std: float = 0.1
    season_period: int = 48
    season_amplitude: np.ndarray | None = None  # (N,)
    season_phase: np.ndarray | None = None      # (N,)

    @property
    def N(self) -> int:
        return self.static_graph.shape[0]

    def validate(self) -> None:
        N = self.N
        if not np.all(np.diag(self.static_graph) == 1):
            raise DataError("static graph must have a unit diagonal")
        for name, g, w in (("static", self.static_graph, self.static_weights),
                           ("burst", self.burst_graph, self.burst_weights)):
            if g.shape != (N, N) or w.shape != (N, N):
                raise DataError(f"{name} graph/weights must be {N}x{N}")
            if np.any(w[g == 0] != 0):
                raise DataError(f"{name} weights outside the {name} support")
        for mat, name in ((self.static_weights, "static"),
                          (self.static_weights + self.burst_weights, "static+burst")):
            rho = float(np.max(np.abs(np.linalg.eigvals(mat))))
            if rho >= 1.0:
                raise DataError(f"{name} coupling is unstable: spectral radius {rho:.4f} >= 1")

    def burst_active(self, T: int) -> np.ndarray:
        active = np.zeros(T, dtype=bool)
        for a, b in self.burst_schedule:
            active[max(a, 0):min(b, T)] = True
        return active


def _scaled(weights: np.ndarray, radius: float) -> np.ndarray:
    rho = float(np.max(np.abs(np.linalg.eigvals(weights))))
    return weights * (radius / rho) if rho > radius else weights


def _signs(rng, shape, signed: bool) -> np.ndarray:
    # draw even when unsigned so both modes consume the same random stream
    s = rng.choice([-1.0, 1.0], shape)
    return s if signed else np.abs(s)


def make_planted_system(N: int = 8, density: float = 0.25, seed: int = 0,
                        noise_std: float = 0.1, season_period: int = 48,
                        season_amplitude: float = 1.0, bursts: bool = False,
                        T: int = 2000, burst_every: int = 200, burst_len: int = 40,
                        radius: float = 0.9, signed: bool = False) -> PlantedSystem:
    """Random stable system with a sparse directed static graph.

    Off-diagonal support entries are drawn with probability ``density``;
    weights are positive (random signs with ``signed``) and the matrix is
    rescaled below ``radius``.
    """
    rng = np.random.default_rng(seed)
    off = ~np.eye(N, dtype=bool)
    static = (rng.random((N, N)) < density) & off
    static = (static | np.eye(N, dtype=bool)).astype(np.int64)
    w = rng.uniform(0.5, 1.0, (N, N)) * _signs(rng, (N, N), signed)
    w[np.eye(N, dtype=bool)] = 0.3
    w_static = _scaled(w * static, radius * 0.8)

    burst = np.zeros((N, N), dtype=np.int64)
    w_burst = np.zeros((N, N))
    schedule: list[tuple[int, int]] = []
    if bursts:
        burst = ((rng.random((N, N)) < density) & off & (static == 0)).astype(np.int64)
        wb = rng.uniform(0.5, 1.0, (N, N)) * _signs(rng, (N, N), signed) * burst
        w_burst = _scaled(wb, radius * 0.6)
        start = int(rng.integers(burst_len, burst_every))
        while start < T:
            schedule.append((start, min(start + burst_len, T)))
            start += burst_every
        # static alone sits below 0.8 * radius, so halving the burst part terminates
        while np.max(np.abs(np.linalg.eigvals(w_static + w_burst))) >= radius:
            w_burst = w_burst * 0.5
    system = PlantedSystem(
        static_graph=static, static_weights=w_static, burst_graph=burst,
        burst_weights=w_burst, burst_schedule=schedule, noise_std=noise_std,
        season_period=season_period,
        season_amplitude=np.full(N, float(season_amplitude)),
        season_phase=rng.uniform(0, 2 * np.pi, N))
    system.validate()
    return system


def seasonal_component(system: PlantedSystem, T: int) -> np.ndarray:
    N = system.N
    amp = np.ones(N) if system.season_amplitude is None else system.season_amplitude
    phase = np.zeros(N) if system.season_phase is None else system.season_phase
    t = np.arange(T)[:, None]
    return amp * np.sin(2 * np.pi * t / system.season_period + phase)


def generate_planted(system: PlantedSystem, T: int, seed: int = 0,
                     split: tuple[float, float, float] = (0.6, 0.2, 0.2),
                     ) -> tuple[SeriesFrame, dict[str, np.ndarray]]:
    """Simulate the latent coupled process plus a per-node seasonal signal.

    latent[t+1] = tanh(W_s latent[t]) + 1[burst at t] * W_b latent[t] + noise
    observed[t] = latent[t] + seasonal[t]
    """
    system.validate()
    rng = np.random.default_rng(seed)
    N = system.N
    active = system.burst_active(T)
    z = np.zeros((T, N))
    for t in range(T - 1):
        nxt = np.tanh(system.static_weights @ z[t])
        if active[t]:
            nxt = nxt + system.burst_weights @ z[t]
        if system.noise_std > 0:
            nxt = nxt + rng.normal(0.0, system.noise_std, N)
        z[t + 1] = nxt
    values = (z + seasonal_component(system, T))[..., None]
    frame = SeriesFrame(values, np.ones((T, N), dtype=bool), sample_rate="synthetic",
                        split=split, meta={"period": system.season_period})
    truth = {"static": system.static_graph.copy(), "burst": system.burst_graph.copy(),
             "burst_active": active}
    return frame, truth
