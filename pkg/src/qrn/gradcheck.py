"""Finite-difference check of a whole small model (embedding, QRN stack,
QA head, L2 decay and query reconstruction) in both scan modes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .cell import QrnConfig
from .encoding import Vocabulary
from .model import Prepared, QrnModel

MAX_D = 16
MAX_T = 8


class SizeError(ValueError):
    pass


@dataclass
class GradcheckReport:
    errors: dict[str, dict[str, float]] = field(default_factory=dict)  # mode -> param -> error
    cross_mode: float = 0.0  # worst |g_seq - g_par| over all entries
    tolerance: float = 1e-4
    cross_tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        worst = max((e for per in self.errors.values() for e in per.values()), default=0.0)
        return worst < self.tolerance and self.cross_mode < self.cross_tolerance

    def lines(self) -> list[str]:
        out = []
        for mode, per in self.errors.items():
            for name, err in per.items():
                out.append(f"{mode}\t{name}\t{err:.3e}")
        out.append(f"cross_mode\tall\t{self.cross_mode:.3e}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def _random_items(rng, vocab: Vocabulary, n: int, T: int, words: int):
    content = np.arange(3, len(vocab))
    items = []
    for _ in range(n):
        t = int(rng.integers(2, T + 1))
        ctx = [list(rng.choice(content, int(rng.integers(2, words + 1)))) for _ in range(t)]
        q = list(rng.choice(content, int(rng.integers(2, words + 1))))
        items.append(Prepared(ctx, q, int(rng.choice(content))))
    # one story always uses the full length
    items[0].context = [list(rng.choice(content, words)) for _ in range(T)]
    return items


def model_gradcheck(d: int = 8, T: int = 5, layers: int = 2, vector_gates: bool = True,
                    use_reset_gate: bool = True, bidirectional: bool = True, seed: int = 0,
                    l2: float = 0.001, batch: int = 3, vocab_size: int = 10,
                    tolerance: float = 1e-4, step: float = 1e-5) -> GradcheckReport:
    """Runs in 64-bit. Sizes above ``MAX_D``/``MAX_T`` are refused."""
    if d > MAX_D or T > MAX_T:
        raise SizeError(f"gradcheck needs d <= {MAX_D} and T <= {MAX_T}, got d={d} T={T}")
    if min(d, T, layers, batch) < 1:
        raise SizeError("gradcheck sizes must be positive")
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(f"w{i}" for i in range(vocab_size))
    cfg = QrnConfig(layers=layers, hidden_size=d, use_reset_gate=use_reset_gate,
                    vector_gates=vector_gates, bidirectional=bidirectional, query_decoder=True)
    model = QrnModel(cfg, vocab, seed=seed, dtype=np.float64)
    # move gates away from saturation so differences are informative
    for p in model.parameters():
        if p.name.endswith(".b_z"):
            p.data[...] = rng.normal(0.0, 0.5, p.shape)
        elif p.name.endswith(".b_r") or p.name.endswith(".b_h") or p.name.endswith("decoder.b"):
            p.data[...] = rng.normal(0.0, 0.3, p.shape)
    data = model.pack(_random_items(rng, vocab, batch, T, 4))
    params = model.parameters()
    report = GradcheckReport(tolerance=tolerance)
    grads = {}
    for mode in ("sequential", "parallel"):
        res = ag.check_gradients(lambda: model.loss(data, mode, l2), params, step=step, tolerance=tolerance)
        report.errors[mode] = res["errors"]
        with ag.Tape() as tape:
            loss = model.loss(data, mode, l2)
        ag.backward(tape, loss, params)
        grads[mode] = {p.name: p.grad.copy() for p in params}
    report.cross_mode = max(float(np.max(np.abs(grads["sequential"][k] - grads["parallel"][k])))
                            for k in grads["parallel"])
    return report
