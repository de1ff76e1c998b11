"""Command line: ``qrn {train,eval,trace,bench,gradcheck,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 failed numeric check.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as qdata
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, build_configs, parse_config
from .encoding import InputError
from .trainer import evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, data: bool = True):
    p.add_argument("--config", type=Path, help="key = value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--scan", choices=("sequential", "parallel"))
    if data:
        p.add_argument("--task", type=int, default=1)
        p.add_argument("--data", type=Path, required=True, help="dataset root directory")
        p.add_argument("--oov", action="store_true", help="dialog: use the OOV test file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qrn", description="Query-Reduction Networks on bAbI QA and dialog.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train with restarts and write a checkpoint")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="checkpoint directory")

    p = sub.add_parser("eval", help="error rate of a checkpoint on a split")
    _common(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")

    p = sub.add_parser("trace", help="print gate values for selected examples")
    _common(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--example", default="0", help="index, a:b range, or comma list")
    p.add_argument("--human", action="store_true", help="two-decimal rendering")

    p = sub.add_parser("bench", help="time sequential against parallel recurrence")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--vector-gates", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference check of a small model")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--T", type=int, default=5)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--scalar-gates", action="store_true")
    p.add_argument("--no-reset", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("synth", help="write generated bAbI-format data")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--n-dialogs", type=int, default=1000)
    return parser


# -- helpers -------------------------------------------------------------------

def _settings(args) -> dict:
    settings = {}
    if args.config is not None:
        settings.update(parse_config(args.config.read_text(encoding="utf-8")))
    overrides = "\n".join(args.set)
    for key, value in parse_config(overrides).items():
        settings[key] = value
    for key in ("seed", "precision", "scan"):
        if getattr(args, key, None) is not None:
            settings[key] = getattr(args, key)
    return settings


def _load_data(args, head: str):
    if not args.data.is_dir():
        raise FileNotFoundError(f"data directory not found: {args.data}")
    if head == "dialog":
        return qdata.load_dialog_task(args.data, args.task, oov=args.oov)
    return qdata.load_qa_task(args.data, args.task)


def _select(selector: str, n: int) -> list[int]:
    try:
        if ":" in selector:
            a, b = selector.split(":", 1)
            picked = list(range(n))[slice(int(a) if a else None, int(b) if b else None)]
        else:
            picked = [int(s) for s in selector.split(",")]
    except ValueError:
        raise UsageFailure(f"bad example selector {selector!r}") from None
    picked = [i for i in picked if -n <= i < n]
    if not picked:
        raise InputError(f"example selector {selector!r} matches none of {n} examples")
    return [i % n for i in picked]


# -- commands ------------------------------------------------------------------

def cmd_train(args) -> int:
    model_cfg, train_cfg = build_configs(_settings(args))
    ds = _load_data(args, model_cfg.head)
    files = ds.meta.get("files", [])

    def on_epoch(r, rec):
        print(f"restart={r} {rec.line()}", flush=True)

    model, tlog = train(ds, model_cfg, train_cfg, on_epoch=on_epoch)
    save_checkpoint(args.out, model, train_cfg, qdata.fingerprint(files),
                    extra={"task": args.task, "chosen_restart": tlog.chosen,
                           "best_dev_loss": tlog.best_dev_loss[tlog.chosen]})
    err = evaluate(model, ds.test, mode=train_cfg.scan)
    print(f"chosen_restart={tlog.chosen} best_dev_loss={tlog.best_dev_loss[tlog.chosen]:.6f} "
          f"seconds={tlog.seconds:.1f}")
    print(f"test_error={err:.6f}")
    return EXIT_OK


def _checkpoint_and_split(args):
    model, train_cfg, _ = load_checkpoint(args.checkpoint)
    ds = _load_data(args, model.config.head)
    scan = args.scan or (train_cfg.scan if train_cfg else "parallel")
    return model, getattr(ds, args.split), scan


def cmd_eval(args) -> int:
    model, examples, scan = _checkpoint_and_split(args)
    err = evaluate(model, examples, mode=scan)
    print(f"split={args.split} examples={len(examples)} error={err:.6f}")
    return EXIT_OK


def _fmt(values: np.ndarray | None, human: bool) -> str:
    if values is None:
        return "-"
    v = np.atleast_1d(values)
    if human:
        return f"{float(v.mean()):.2f}"
    return ",".join(repr(float(x)) for x in v)


def trace_rows(model, example, scan: str = "parallel", human: bool = False) -> list[str]:
    """Tab-separated rows: a header, one row per context sentence with the
    update and reset gates of every layer, then question/answer/prediction."""
    item = model.prepare([example])[0]
    trace, pred, _, _ = model.trace(item, scan)
    K = len(trace.layers)
    header = ["t", "sentence"]
    for k in range(1, K + 1):
        header.append(f"z{k}")
        if "backward" in trace.layers[k - 1]:
            header.append(f"z{k}_bwd")
        if trace.layers[k - 1]["forward"]["r"] is not None:
            header.append(f"r{k}_fwd")
        if trace.layers[k - 1].get("backward", {}).get("r") is not None:
            header.append(f"r{k}_bwd")
    rows = ["\t".join(header)]
    for t, sentence in enumerate(example.context):
        cols = [str(t + 1), sentence]
        for layer in trace.layers:
            fwd, bwd = layer["forward"], layer.get("backward")
            cols.append(_fmt(fwd["z"][0, t], human))
            if bwd is not None:
                cols.append(_fmt(bwd["z"][0, t], human))
            if fwd["r"] is not None:
                cols.append(_fmt(fwd["r"][0, t], human))
            if bwd is not None and bwd["r"] is not None:
                cols.append(_fmt(bwd["r"][0, t], human))
        rows.append("\t".join(cols))
    predicted = (model.candidates.texts[pred] if model.candidates is not None else model.vocab.word(pred))
    rows.append(f"question\t{example.question}")
    rows.append(f"answer\t{example.answer}")
    rows.append(f"predicted\t{predicted}")
    return rows


def cmd_trace(args) -> int:
    model, examples, scan = _checkpoint_and_split(args)
    for i in _select(args.example, len(examples)):
        print(f"example\t{i}")
        for row in trace_rows(model, examples[i], scan, args.human):
            print(row)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .scan import EquivalenceError, benchmark_scan

    dtype = np.float32 if args.precision == "f32" else np.float64
    try:
        report = benchmark_scan(args.T, args.d, args.batch, args.repeats, args.seed,
                                vector_gates=args.vector_gates, dtype=dtype)
    except EquivalenceError as e:
        print(f"equivalence check failed: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(report.line())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import model_gradcheck

    report = model_gradcheck(d=args.d, T=args.T, layers=args.layers,
                             vector_gates=not args.scalar_gates, use_reset_gate=not args.no_reset,
                             seed=args.seed, tolerance=args.tolerance)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_synth(args) -> int:
    from .synth import write_dialog_dataset, write_qa_dataset

    write_qa_dataset(args.data, n_train=args.n_train, n_test=args.n_test, seed=args.seed)
    write_dialog_dataset(args.data / "dialog", args.n_dialogs, args.n_dialogs, seed=args.seed)
    print(f"wrote {args.data}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "trace": cmd_trace, "bench": cmd_bench,
            "gradcheck": cmd_gradcheck, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageFailure, InputError, qdata.ParseError, CheckpointError, ValueError) as e:
        print(f"qrn {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"qrn {args.command}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
