"""End-to-end QRN: input module, stacked QRN layers, and an output head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .cell import QrnConfig, QrnParams, init_params, stack_forward
from .encoding import (InputError, RESERVED, Vocabulary, answer_token, example_token_ids,
                       init_embedding, position_weights, tokenize)
from .heads import (CandidateSet, DialogHead, MatchFeatures, QaHead, QueryDecoder, candidate_scores,
                    candidate_set)


@dataclass
class Prepared:
    """Token ids of one example, computed once and reused every epoch."""
    context: list[list[int]]
    question: list[int]
    answer: int  # vocabulary index (QA) or candidate index, -1 if absent (dialog)
    target: list[int] | None = None  # response tokens (dialog)


class QrnModel:
    def __init__(self, config: QrnConfig, vocab: Vocabulary, seed: int = 0, dtype=np.float32,
                 candidates: list[str] | None = None):
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        d, V = config.hidden_size, len(vocab)
        self.A = init_embedding(V, d, rng, dtype)
        if config.tie_weights_across_layers:
            self.cell = init_params(config, rng, dtype)
        else:
            self.cell = [init_params(config, rng, dtype, prefix=f"qrn{k}") for k in range(config.layers)]
        self.candidates: CandidateSet | None = None
        if config.head == "qa":
            self.head = QaHead.init(V, d, rng, dtype)
        else:
            if not candidates:
                raise InputError("QrnModel: dialog head needs a candidate list")
            cand_ids = [vocab.indices(tokenize(c)) for c in candidates]
            slots = max(len(c) for c in cand_ids) + 1
            self.head = DialogHead.init(V, d, slots, rng, dtype, config.use_match)
            self.candidates = candidate_set(candidates, cand_ids, slots, vocab.nil, vocab.nil)
        self.decoder = (QueryDecoder.init(V, d, rng, dtype, config.reconstruction_weight)
                        if config.query_decoder else None)
        self._pe_cache: dict[int, np.ndarray] = {}
        self._reserved = np.array([vocab.index(w) for w in RESERVED])

    # -- parameters -----------------------------------------------------------

    def cell_parameters(self) -> list[Parameter]:
        if isinstance(self.cell, QrnParams):
            return self.cell.parameters()
        return [p for c in self.cell for p in c.parameters()]

    def parameters(self) -> list[Parameter]:
        ps = [self.A] + self.cell_parameters() + self.head.parameters()
        if self.decoder is not None:
            ps += self.decoder.parameters()
        return ps

    def weight_matrices(self) -> list[Parameter]:
        names = {"W_z", "W_h", "W_r"}
        ws = [self.A] + [p for p in self.cell_parameters() if p.name.rsplit(".", 1)[-1] in names]
        ws += self.head.weight_matrices()
        if self.decoder is not None:
            ws += self.decoder.weight_matrices()
        return ws

    def biases(self) -> list[Parameter]:
        weights = {id(p) for p in self.weight_matrices()}
        return [p for p in self.parameters() if id(p) not in weights]

    def l2_term(self, decay_biases: bool = False) -> Tensor:
        mask = np.ones(len(self.vocab), dtype=self.dtype)
        mask[self.vocab.nil] = 0.0
        terms = []
        for p in self.weight_matrices():
            w = p * mask if p is self.A else p
            terms.append(ag.sum(w * w))
        if decay_biases:
            terms += [ag.sum(p * p) for p in self.biases()]
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    # -- data -----------------------------------------------------------------

    def prepare(self, examples) -> list[Prepared]:
        out = []
        for ex in examples:
            sents, q = example_token_ids(ex, self.vocab)
            if self.config.head == "qa":
                out.append(Prepared(sents, q, self.vocab.index(answer_token(ex.answer))))
            else:
                texts = self.candidates.texts
                idx = texts.index(ex.answer) if ex.answer in texts else -1
                target = self.vocab.indices(tokenize(ex.answer))[: self.head.slots - 1]
                out.append(Prepared(sents, q, idx, target))
        return out

    def _pe(self, J: int) -> np.ndarray:
        if J not in self._pe_cache:
            self._pe_cache[J] = position_weights(J, self.config.hidden_size, self.dtype)
        return self._pe_cache[J]

    def pack(self, items: list[Prepared]) -> dict:
        """Pad a batch. Stories are left-padded so every story ends at the
        last time step; padded steps carry a zero mask."""
        N, d = len(items), self.config.hidden_size
        T = max(len(it.context) for it in items)
        J = max(max(len(s) for it in items for s in it.context), max(len(it.question) for it in items))
        pad = self.vocab.pad
        ctx_ids = np.full((N, T, J), pad, dtype=np.int64)
        ctx_w = np.zeros((N, T, J, d), dtype=self.dtype)
        mask = np.zeros((N, T, 1), dtype=self.dtype)
        q_ids = np.full((N, J), pad, dtype=np.int64)
        q_w = np.zeros((N, J, d), dtype=self.dtype)
        for n, it in enumerate(items):
            off = T - len(it.context)
            mask[n, off:] = 1.0
            for t, s in enumerate(it.context, off):
                ctx_ids[n, t, :len(s)] = s
                ctx_w[n, t, :len(s)] = self._pe(len(s))
            q_ids[n, :len(it.question)] = it.question
            q_w[n, :len(it.question)] = self._pe(len(it.question))
        batch = {"ctx_ids": ctx_ids, "ctx_w": ctx_w, "mask": mask, "q_ids": q_ids, "q_w": q_w,
                 "q_mask": q_ids != pad, "answers": np.array([it.answer for it in items])}
        if self.config.head == "dialog":
            P = self.head.slots
            targets = np.full((N, P), self.vocab.nil, dtype=np.int64)
            valid = np.zeros((N, P), dtype=self.dtype)
            for n, it in enumerate(items):
                targets[n, :len(it.target)] = it.target
                valid[n, :len(it.target) + 1] = 1.0
            prev = np.concatenate([np.full((N, 1), self.vocab.nil), targets[:, :-1]], axis=1)
            batch.update(targets=targets, prev=prev, valid=valid)
            if self.config.use_match:
                batch["match"] = np.stack([self.match_features(it).matrix for it in items])
        return batch

    def match_features(self, item: Prepared) -> MatchFeatures:
        """Per-word match matrix [V x 2]: word occurs in the context / question."""
        m = np.zeros((len(self.vocab), 2), dtype=np.int8)
        for s in item.context:
            m[s, 0] = 1
        m[item.question, 1] = 1
        m[self._reserved] = 0
        return MatchFeatures(m)

    # -- forward ----------------------------------------------------------------

    def encode(self, batch) -> tuple[Tensor, Tensor]:
        X = ag.sum(ag.embed(self.A, batch["ctx_ids"]) * batch["ctx_w"], axis=-2)
        q = ag.sum(ag.embed(self.A, batch["q_ids"]) * batch["q_w"], axis=-2)
        return X, q

    def forward(self, batch, mode: str = "parallel"):
        X, q = self.encode(batch)
        y_hat, trace = stack_forward(X, q, self.config, self.cell, mode, batch["mask"])
        return y_hat, q, trace

    def data_loss(self, batch, y_hat) -> Tensor:
        N = y_hat.shape[0]
        if self.config.head == "qa":
            logp = ag.log_softmax(self.head.logits(y_hat), axis=-1)
            picked = logp[np.arange(N), batch["answers"]]
            return ag.mul(ag.sum(picked), -1.0 / N)
        logits = self.head.slot_logits(y_hat, batch["prev"], batch.get("match"))
        logp = ag.log_softmax(logits, axis=-1)
        P = logits.shape[1]
        picked = logp[np.arange(N)[:, None], np.arange(P)[None, :], batch["targets"]]
        return ag.mul(ag.sum(picked * batch["valid"]), -1.0 / N)

    def loss(self, batch, mode: str = "parallel", l2: float = 0.0, decay_biases: bool = False) -> Tensor:
        y_hat, q, _ = self.forward(batch, mode)
        total = self.data_loss(batch, y_hat)
        if l2:
            total = total + l2 * self.l2_term(decay_biases)
        if self.decoder is not None:
            rec = self.decoder.reconstruction_loss(q, batch["q_ids"], batch["q_mask"])
            total = total + self.decoder.weight * rec
        return total

    # -- inference -------------------------------------------------------------

    def predict_batch(self, batch, mode: str = "parallel", items=None) -> np.ndarray:
        with ag.no_tape():
            y_hat, _, _ = self.forward(batch, mode)
            if self.config.head == "qa":
                return np.argmax(self.head.logits(y_hat).data, axis=-1)
            scores = candidate_scores(y_hat.data, self.head, self.candidates, batch.get("match"))
            return np.argmax(scores, axis=-1)

    def batches(self, items, batch_size: int):
        for i in range(0, len(items), batch_size):
            yield items[i:i + batch_size]

    def predict(self, items: list[Prepared], batch_size: int = 64, mode: str = "parallel") -> np.ndarray:
        preds = [self.predict_batch(self.pack(b), mode) for b in self.batches(items, batch_size)]
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def mean_loss(self, items: list[Prepared], batch_size: int = 64, mode: str = "parallel") -> float:
        """Average data loss (no weight decay, no reconstruction)."""
        total = 0.0
        with ag.no_tape():
            for b in self.batches(items, batch_size):
                batch = self.pack(b)
                y_hat, _, _ = self.forward(batch, mode)
                total += float(self.data_loss(batch, y_hat).data) * len(b)
        return total / len(items)

    def trace(self, item: Prepared, mode: str = "parallel"):
        batch = self.pack([item])
        with ag.no_tape():
            y_hat, q, trace = self.forward(batch, mode)
        pred = self.predict_batch(batch, mode)[0]
        return trace, int(pred), y_hat.data[0], q.data[0]

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]):
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name}")
            if state[p.name].shape != p.shape:
                raise ValueError(f"parameter {p.name}: shape {state[p.name].shape} != {p.shape}")
            p.data[...] = state[p.name]
