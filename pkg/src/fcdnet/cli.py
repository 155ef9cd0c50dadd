"""Command-line entry point: train, evaluate, export-graphs, synth-data, grad-check.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import torch

from .config import ConfigError, dump_config, load_config
from .data import (DataError, generate_planted, load_series, make_planted_system, make_windows,
                   write_matrix, write_series)
from .numeric import DTYPE, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("fcdnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which is our data-error code
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------------ commands

def _load_frame(path, split=(0.6, 0.2, 0.2), sample_rate="unknown"):
    if not path:
        raise ConfigError("no dataset given (set data.path)")
    if not Path(path).is_file():
        raise DataError(f"dataset not found: {path}")
    return load_series(path, sample_rate=sample_rate, split=split)


def cmd_train(args) -> int:
    from .training import save_checkpoint, train

    overrides = list(args.set or [])
    if args.epochs is not None:
        overrides.append(f"train.epochs={args.epochs}")
    if args.ablation is not None:
        overrides.append(f"train.ablation={args.ablation}")
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if args.data is not None:
        overrides.append(f"data.path={Path(args.data).resolve()}")
    try:
        run = load_config(args.config, overrides)
    except ValueError as exc:  # dataclass validation, e.g. a bad ablation name
        raise ConfigError(str(exc)) from None
    frame = _load_frame(run.data.path, run.data.split, run.data.sample_rate)
    log.info("data: %s", frame.summary())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(run, out / "resolved.cfg")
    result = train(frame, run.model, run.train, log_path=out / "log.csv", progress=True)
    # with no epochs the returned model is the initialisation, as wanted
    save_checkpoint(result, out / "model.ckpt")
    log.info("best epoch %d, val MAE %.6f", result.best_epoch, result.best_val_mae)
    print(f"wrote {out / 'model.ckpt'}, {out / 'log.csv'}, {out / 'resolved.cfg'}")
    return EXIT_OK


def _check_shapes(model, frame) -> None:
    T, N, D = frame.shape
    cfg = model.cfg
    diffs = []
    if N != cfg.num_nodes:
        diffs.append(f"N: checkpoint {cfg.num_nodes}, data {N}")
    if D != cfg.in_dim:
        diffs.append(f"D: checkpoint {cfg.in_dim}, data {D}")
    if diffs:
        raise DataError("checkpoint does not match dataset: " + "; ".join(diffs))


def _checkpoint_and_frame(args):
    from .training import load_checkpoint

    if not Path(args.checkpoint).is_file():
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    model, stats, blob = load_checkpoint(args.checkpoint)
    frame = _load_frame(args.data)
    _check_shapes(model, frame)
    return model, stats, frame


def cmd_evaluate(args) -> int:
    from .training import evaluate

    model, stats, frame = _checkpoint_and_frame(args)
    cfg = model.cfg
    windows = make_windows(frame, cfg.input_len, cfg.horizon, args.split, stats)
    report = evaluate(model, windows)
    print(f"split={args.split} windows={len(windows)} T_in={cfg.input_len} E={cfg.horizon}")
    for line in report.lines():
        print(line)
    for h, (a, r) in enumerate(zip(report.horizon_mae, report.horizon_rmse), start=1):
        print(f"horizon {h}: MAE {a:.6f} RMSE {r:.6f}")
    if args.out:
        report.write_csv(args.out)
    return EXIT_OK


@torch.no_grad()
def cmd_export_graphs(args) -> int:
    model, stats, frame = _checkpoint_and_frame(args)
    cfg = model.cfg
    windows = make_windows(frame, cfg.input_len, cfg.horizon, args.split, stats)
    batches = list(windows.batches(cfg.batch_size, drop_last=False, pad=True))
    if not 0 <= args.batch_index < len(batches):
        raise DataError(f"batch index {args.batch_index} out of range: the {args.split} split "
                        f"has {len(batches)} batches of {cfg.batch_size}")
    model.eval()
    x = torch.as_tensor(batches[args.batch_index].inputs, dtype=DTYPE)
    _, a_lf, a_hf = model(x, return_graphs=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(a_lf.numpy(), out / "A_LF.csv")
    write_matrix(a_hf.numpy(), out / "A_HF.csv")
    print(f"wrote {out / 'A_LF.csv'} and {out / 'A_HF.csv'}")
    return EXIT_OK


SYSTEM_KEYS = {"N": int, "density": float, "noise_std": float, "season_period": int,
               "season_amplitude": float, "bursts": bool, "burst_every": int, "burst_len": int,
               "radius": float, "signed": bool}


def read_system_spec(path) -> dict:
    """``[system]`` section of a key = value file; unknown keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with Path(path).open() as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise DataError(f"system spec not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if parser.sections() != ["system"]:
        raise ConfigError(f"system spec needs exactly one [system] section, got {parser.sections()}")
    spec = {}
    for key, raw in parser.items("system"):
        if key not in SYSTEM_KEYS:
            raise ConfigError(f"unknown key {key!r} in [system]")
        try:
            spec[key] = (parser.getboolean("system", key) if SYSTEM_KEYS[key] is bool
                         else SYSTEM_KEYS[key](raw))
        except ValueError as exc:
            raise ConfigError(f"[system] {key}: {exc}") from None
    return spec


def cmd_synth(args) -> int:
    spec = read_system_spec(args.spec) if args.spec else {}
    if args.T < 2:
        raise UsageError("T must be at least 2")
    system = make_planted_system(seed=args.seed, T=args.T, **spec)
    frame, truth = generate_planted(system, args.T, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_series(frame, out / "series.csv")
    write_matrix(truth["static"], out / "static_graph.csv")
    write_matrix(truth["burst"], out / "burst_graph.csv")
    with (out / "schedule.csv").open("w") as fh:
        fh.write("start,end\n")
        for a, b in system.burst_schedule:
            fh.write(f"{a},{b}\n")
    print(f"wrote series.csv, static_graph.csv, burst_graph.csv, schedule.csv to {out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradcheck import run_checks

    try:
        reports = run_checks(args.scope, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    failed = 0
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:36s} rel_err={r.max_rel_error:.3e} threshold={r.threshold:.0e}")
        if not r.passed:
            failed += 1
            worst = max(r.per_param, key=r.per_param.get)
            print(f"     worst parameter: {worst} ({r.per_param[worst]:.3e})")
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return EXIT_NUMERIC if failed else EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    from .gradcheck import SCOPES
    from .model import ABLATIONS

    p = _Parser(prog="fcdnet", description="Frequency-based coupled dependency forecaster")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model and write checkpoint, log and config")
    t.add_argument("--config", help="key = value file with [data], [model], [train] sections")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config entry (repeatable)")
    t.add_argument("--data", help="dataset CSV (overrides data.path)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--ablation", choices=ABLATIONS)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", default="run", help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on one split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--out", help="write per-horizon metrics CSV here")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("export-graphs", help="write A_LF.csv and A_HF.csv for one batch")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--split", choices=("train", "val", "test"), default="test")
    g.add_argument("--batch-index", type=int, default=0)
    g.add_argument("--out", default="graphs")
    g.set_defaults(func=cmd_export_graphs)

    s = sub.add_parser("synth-data", help="simulate a planted coupled system")
    s.add_argument("--spec", help="file with a [system] section")
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="synth")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("grad-check", help="finite-difference check of every parameterised op")
    c.add_argument("--scope", default="all", choices=("all", *SCOPES))
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_grad_check)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
