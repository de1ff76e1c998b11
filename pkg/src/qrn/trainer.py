"""Optimisation: cross-entropy loss with L2 decay, AdaGrad, early stopping and
best-of-N restarts selected on development loss."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .cell import QrnConfig
from .encoding import InputError
from .model import Prepared, QrnModel

log = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.5
    l2_decay: float = 0.001
    max_epochs: int = 500
    patience_epochs: int = 50
    restarts: int = 10
    seed: int = 0
    forget_bias: float = 2.5
    hidden_size: int = 50
    decay_biases: bool = False
    precision: str = "f32"
    scan: str = "parallel"
    initial_accumulator: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.l2_decay < 0:
            raise ValueError("batch_size and learning_rate must be positive, l2_decay non-negative")
        if self.max_epochs < 0 or self.patience_epochs < 1 or self.restarts < 1:
            raise ValueError("max_epochs >= 0, patience_epochs >= 1 and restarts >= 1 required")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.scan not in ("sequential", "parallel"):
            raise ValueError(f"scan must be sequential or parallel, got {self.scan!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    @classmethod
    def qa10k(cls, **kw):
        base = dict(batch_size=128, learning_rate=0.1, l2_decay=0.0005, restarts=50)
        base.update(kw)
        return cls(**base)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_err: float

    def line(self) -> str:
        return (f"epoch={self.epoch} train_loss={self.train_loss:.6f} "
                f"dev_loss={self.dev_loss:.6f} dev_err={self.dev_err:.6f}")


@dataclass
class TrainLog:
    restarts: list[list[EpochRecord]] = field(default_factory=list)
    best_dev_loss: list[float] = field(default_factory=list)
    best_epoch: list[int] = field(default_factory=list)
    diverged: list[bool] = field(default_factory=list)
    chosen: int = -1
    seconds: float = 0.0

    def lines(self, restart: int | None = None) -> list[str]:
        r = self.chosen if restart is None else restart
        return [rec.line() for rec in self.restarts[r]]


def loss(predicted, gold_index, weights: Sequence[Parameter] = (), l2: float = 0.0,
         reconstruction=None) -> Tensor:
    """Cross-entropy of a predicted distribution (or batch of them) plus L2
    decay over ``weights`` and an optional reconstruction term."""
    p = ag.as_tensor(predicted)
    gold = np.atleast_1d(np.asarray(gold_index))
    V = p.shape[-1]
    if np.any(gold < 0) or np.any(gold >= V):
        raise InputError(f"loss: gold index out of range for {V} classes")
    rows = ag.reshape(p, (-1, V))
    if rows.shape[0] != gold.size:
        raise InputError("loss: one gold index per distribution required")
    picked = rows[np.arange(gold.size), gold]
    total = ag.mul(ag.sum(ag.safe_log(picked)), -1.0 / gold.size)
    if l2 and weights:
        decay = ag.sum(weights[0] * weights[0])
        for w in weights[1:]:
            decay = decay + ag.sum(w * w)
        total = total + l2 * decay
    if reconstruction is not None:
        total = total + reconstruction
    return total


def adagrad_step(params: Sequence[Parameter], lr: float, eps: float = ADAGRAD_EPS):
    for p in params:
        g = p.grad
        p.accumulator += g * g
        p.data -= (lr * g / (np.sqrt(p.accumulator) + eps)).astype(p.dtype)


def evaluate(model: QrnModel, examples, batch_size: int = 64, mode: str = "parallel") -> float:
    """Fraction of wrong predictions. Dialog examples whose gold response is
    not among the candidates always count as errors."""
    if not examples:
        raise InputError("evaluate: no examples")
    items = list(examples) if isinstance(examples[0], Prepared) else model.prepare(examples)
    preds = model.predict(items, batch_size, mode)
    gold = np.array([it.answer for it in items])
    wrong = (preds != gold) | (gold < 0)
    return float(wrong.mean())


def _train_once(model: QrnModel, train_items, dev_items, cfg: TrainConfig, run_seed: int,
                on_epoch: Callable | None = None):
    params = model.parameters()
    for p in params:
        p.accumulator[...] = cfg.initial_accumulator
    records: list[EpochRecord] = []

    def dev_stats():
        return model.mean_loss(dev_items, 128, cfg.scan), evaluate(model, dev_items, 128, cfg.scan)

    best_loss, best_err = dev_stats()
    best_state, best_epoch = model.state(), 0
    records.append(EpochRecord(0, float("nan"), best_loss, best_err))
    if on_epoch:
        on_epoch(records[-1])
    diverged = not math.isfinite(best_loss)
    for epoch in range(1, cfg.max_epochs + 1):
        if diverged or epoch - best_epoch > cfg.patience_epochs:
            break
        rng = np.random.default_rng([run_seed, epoch])
        order = rng.permutation(len(train_items))
        total, seen = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            chunk = [train_items[j] for j in order[i:i + cfg.batch_size]]
            batch = model.pack(chunk)
            with ag.Tape() as tape:
                L = model.loss(batch, cfg.scan, cfg.l2_decay, cfg.decay_biases)
            if not math.isfinite(float(L.data)):
                diverged = True
                break
            ag.backward(tape, L, params)
            adagrad_step(params, cfg.learning_rate)
            total += float(L.data) * len(chunk)
            seen += len(chunk)
        if diverged:
            log.warning("restart diverged at epoch %d", epoch)
            break
        dev_loss, dev_err = dev_stats()
        if not math.isfinite(dev_loss):
            diverged = True
            break
        records.append(EpochRecord(epoch, total / seen, dev_loss, dev_err))
        if on_epoch:
            on_epoch(records[-1])
        if dev_loss < best_loss:
            best_loss, best_state, best_epoch = dev_loss, model.state(), epoch
    model.load_state(best_state)
    if model.decoder is not None:
        model.decoder.trained = True
    return records, best_loss, best_epoch, diverged


def build_model(dataset, model_config: QrnConfig, train_config: TrainConfig, seed: int) -> QrnModel:
    return QrnModel(model_config, dataset.vocab, seed=seed, dtype=train_config.dtype,
                    candidates=dataset.candidates)


def train(dataset, model_config: QrnConfig, train_config: TrainConfig,
          on_epoch: Callable | None = None) -> tuple[QrnModel, TrainLog]:
    """Train ``restarts`` freshly initialised models and keep the one with the
    lowest development loss."""
    if not dataset.train or not dataset.dev:
        raise InputError("train: train and dev splits must be non-empty")
    if model_config.hidden_size != train_config.hidden_size or model_config.forget_bias != train_config.forget_bias:
        raise ValueError("train: hidden_size/forget_bias differ between model and train configs")
    t0 = time.perf_counter()
    tlog = TrainLog()
    best_model, best = None, math.inf
    seeds = np.random.SeedSequence(train_config.seed).generate_state(train_config.restarts)
    for r in range(train_config.restarts):
        model = build_model(dataset, model_config, train_config, int(seeds[r]))
        train_items = model.prepare(dataset.train)
        dev_items = model.prepare(dataset.dev)
        cb = (lambda rec, r=r: on_epoch(r, rec)) if on_epoch else None
        records, dev_loss, epoch, diverged = _train_once(model, train_items, dev_items, train_config,
                                                         int(seeds[r]), cb)
        tlog.restarts.append(records)
        tlog.best_dev_loss.append(dev_loss)
        tlog.best_epoch.append(epoch)
        tlog.diverged.append(diverged)
        log.info("restart %d: best dev loss %.4f at epoch %d%s", r, dev_loss, epoch,
                 " (diverged)" if diverged else "")
        if math.isfinite(dev_loss) and dev_loss < best:
            best, best_model, tlog.chosen = dev_loss, model, r
    if best_model is None:
        raise FloatingPointError("train: every restart diverged")
    tlog.seconds = time.perf_counter() - t0
    return best_model, tlog
