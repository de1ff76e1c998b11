"""Output modules: the QA classifier, the slot-wise dialog response scorer,
lexical match features, and the query decoder used to read out reduced
queries."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Parameter, ShapeError, Tensor
from .encoding import InputError


class UsageError(RuntimeError):
    pass


def _normal(rng, shape, d, dtype):
    return rng.normal(0.0, 1.0 / np.sqrt(d), shape).astype(dtype)


# -- story QA -----------------------------------------------------------------

@dataclass
class QaHead:
    W_y: Parameter  # [V x d]

    @classmethod
    def init(cls, V: int, d: int, rng, dtype=np.float32):
        return cls(Parameter("head.W_y", _normal(rng, (V, d), d, dtype)))

    def parameters(self):
        return [self.W_y]

    def weight_matrices(self):
        return [self.W_y]

    def logits(self, y_hat) -> Tensor:
        return ag.linear(y_hat, self.W_y)


def qa_predict(y_hat, head: QaHead) -> Tensor:
    """Distribution over the vocabulary; the answer is its argmax."""
    y_hat = ag.as_tensor(y_hat)
    if y_hat.shape[-1] != head.W_y.shape[1]:
        raise ShapeError(f"qa_predict: y_hat {y_hat.shape} does not match W_y {head.W_y.shape}")
    return ag.softmax(head.logits(y_hat), axis=-1)


# -- match features -------------------------------------------------------------

@dataclass
class MatchFeatures:
    matrix: np.ndarray  # [n_candidates x 2] of 0/1

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != 2:
            raise ShapeError(f"MatchFeatures: expected [n x 2], got {self.matrix.shape}")


def compute_match(candidates: Sequence[Sequence[str]], context_tokens, question_tokens) -> MatchFeatures:
    """Row c is [any token of c in context, any token of c in question]."""
    ctx, qst = set(context_tokens), set(question_tokens)
    m = np.zeros((len(candidates), 2), dtype=np.int8)
    for i, cand in enumerate(candidates):
        toks = set(cand)
        m[i, 0] = bool(toks & ctx)
        m[i, 1] = bool(toks & qst)
    return MatchFeatures(m)


# -- dialog ---------------------------------------------------------------------

@dataclass
class DialogHead:
    """``slots`` softmax classifiers over the vocabulary.

    Slot ``p`` sees ``y_hat + C[:, w_{p-1}]``, the answer vector plus an
    embedding of the previous response word (the start token for the first
    slot). With match features the slot input first passes a [d x d] mixer;
    its last two coordinates weight the two match columns and the rest feed
    ``W`` of shape [slots x V x (d-2)].
    """
    W: Parameter
    C: Parameter
    mixer: Parameter | None = None

    @classmethod
    def init(cls, V: int, d: int, slots: int, rng, dtype=np.float32, use_match: bool = False):
        if slots < 1:
            raise ValueError("DialogHead: need at least one slot")
        width = d - 2 if use_match else d
        if width < 1:
            raise ValueError("DialogHead: match features need hidden_size > 2")
        W = Parameter("head.W", _normal(rng, (slots, V, width), d, dtype))
        C = Parameter("head.C", _normal(rng, (d, V), d, dtype))
        mixer = Parameter("head.mixer", _normal(rng, (d, d), d, dtype)) if use_match else None
        return cls(W, C, mixer)

    @property
    def slots(self) -> int:
        return self.W.shape[0]

    @property
    def use_match(self) -> bool:
        return self.mixer is not None

    def parameters(self):
        return [p for p in (self.W, self.C, self.mixer) if p is not None]

    def weight_matrices(self):
        return self.parameters()

    def slot_logits(self, y_hat, prev_ids, match=None) -> Tensor:
        """Logits (N, P, V) for teacher-forced previous words ``prev_ids`` (N, P).

        ``match`` is an (N, V, 2) array of per-word match features.
        """
        y_hat = ag.as_tensor(y_hat)
        N, P = prev_ids.shape
        u = ag.reshape(y_hat, (N, 1, y_hat.shape[-1])) + ag.embed(self.C, prev_ids)
        if self.use_match:
            if match is None:
                raise InputError("DialogHead: match features required")
            u = ag.linear(u, self.mixer)
            width = self.W.shape[2]
            core, extra = u[..., :width], u[..., width:]
        else:
            core, extra = u, None
        logits = ag.matmul(ag.transpose(core, (1, 0, 2)), ag.transpose(self.W[:P], (0, 2, 1)))
        logits = ag.transpose(logits, (1, 0, 2))
        if extra is not None:
            m = ag.Tensor(np.asarray(match, dtype=y_hat.dtype))
            logits = logits + ag.matmul(extra, ag.transpose(m, (0, 2, 1)))
        return logits

    def score_tables(self, y_hat: np.ndarray, prev_vocab: np.ndarray, match=None) -> np.ndarray:
        """Log-probabilities (..., P, len(prev_vocab), V), no tape.

        ``y_hat`` is (d,) or (N, d); ``match`` is (V, 2) or (N, V, 2).
        """
        W, C = self.W.data, self.C.data
        y_hat = np.asarray(y_hat)
        u = y_hat[..., None, :] + C[:, prev_vocab].T  # (..., R, d)
        if self.use_match:
            u = u @ self.mixer.data.T
            width = W.shape[2]
            logits = np.einsum("...rk,pvk->...prv", u[..., :width], W, optimize=True)
            m = np.asarray(match, dtype=u.dtype)
            logits = logits + (u[..., width:] @ np.swapaxes(m, -1, -2))[..., None, :, :]
        else:
            logits = np.einsum("...rk,pvk->...prv", u, W, optimize=True)
        logits = logits - logits.max(axis=-1, keepdims=True)
        return logits - np.log(np.exp(logits).sum(axis=-1, keepdims=True))


@dataclass
class CandidateSet:
    """Candidate responses as slot-aligned id arrays.

    ``targets[c, p]`` is the word candidate ``c`` emits at slot ``p`` (its
    tokens followed by one end token); ``prev`` is the same shifted right
    behind the start token; ``valid`` masks slots past the end token.
    """
    texts: list[str]
    targets: np.ndarray
    prev: np.ndarray
    valid: np.ndarray


def candidate_set(texts: Sequence[str], token_ids: Sequence[Sequence[int]], slots: int,
                  end_id: int, start_id: int) -> CandidateSet:
    if not token_ids:
        raise InputError("candidate_set: empty candidate list")
    n = len(token_ids)
    targets = np.full((n, slots), end_id, dtype=np.int64)
    valid = np.zeros((n, slots), dtype=bool)
    for i, toks in enumerate(token_ids):
        if len(toks) + 1 > slots:
            raise InputError(f"candidate_set: candidate {i} needs {len(toks) + 1} slots, head has {slots}")
        targets[i, :len(toks)] = toks
        valid[i, :len(toks) + 1] = True
    prev = np.concatenate([np.full((n, 1), start_id, dtype=np.int64), targets[:, :-1]], axis=1)
    return CandidateSet(list(texts), targets, prev, valid)


def candidate_scores(y_hat: np.ndarray, head: DialogHead, cands: CandidateSet,
                     match: MatchFeatures | np.ndarray | None = None) -> np.ndarray:
    """Sum of slot log-probabilities of each candidate (tokens plus end token).

    ``y_hat`` may carry a leading batch axis; ``match`` then holds one
    (V, 2) matrix per example.
    """
    prev_vocab, prev_local = np.unique(cands.prev, return_inverse=True)
    prev_local = prev_local.reshape(cands.prev.shape)
    if isinstance(match, MatchFeatures):
        match = match.matrix
    table = head.score_tables(np.asarray(y_hat), prev_vocab, match)
    P = cands.targets.shape[1]
    slot = np.broadcast_to(np.arange(P), cands.targets.shape)
    lp = table[..., slot, prev_local, cands.targets]
    return np.where(cands.valid, lp, 0.0).sum(axis=-1)


def dialog_predict(y_hat, head: DialogHead, cands: CandidateSet,
                   match: MatchFeatures | None = None) -> int:
    """Index of the best-scoring candidate; ties go to the lowest index."""
    if len(cands.texts) == 0:
        raise InputError("dialog_predict: empty candidate list")
    y = y_hat.data if isinstance(y_hat, Tensor) else np.asarray(y_hat)
    return int(np.argmax(candidate_scores(y, head, cands, match)))


# -- query decoder -----------------------------------------------------------------

@dataclass
class QueryDecoder:
    W: Parameter  # [V x d]
    b: Parameter  # [V]
    weight: float = 1.0
    trained: bool = False

    @classmethod
    def init(cls, V: int, d: int, rng, dtype=np.float32, weight: float = 1.0):
        return cls(Parameter("decoder.W", _normal(rng, (V, d), d, dtype)),
                   Parameter("decoder.b", np.zeros(V, dtype=dtype)), weight)

    def parameters(self):
        return [self.W, self.b]

    def weight_matrices(self):
        return [self.W]

    def reconstruction_loss(self, q, word_ids: np.ndarray, word_mask: np.ndarray) -> Tensor:
        """Bag-of-words cross-entropy of the question words, averaged over the batch.

        ``word_ids``/``word_mask`` are (N, J) padded question tokens.
        """
        logp = ag.log_softmax(ag.linear(q, self.W, self.b), axis=-1)  # (N, V)
        N = word_ids.shape[0]
        picked = logp[np.arange(N)[:, None], word_ids]
        return ag.mul(ag.sum(picked * word_mask.astype(logp.dtype)), -1.0 / N)


def decode_query(h, decoder: QueryDecoder, top_k: int, vocab=None) -> list:
    """Highest-scoring words for a reduced query ``h``; indices when ``vocab`` is None."""
    if not decoder.trained:
        raise UsageError("decode_query: the decoder has not been trained")
    h = h.data if isinstance(h, Tensor) else np.asarray(h)
    logits = decoder.W.data @ h + decoder.b.data
    order = np.argsort(-logits, kind="stable")[:top_k]
    return [int(i) for i in order] if vocab is None else [vocab.word(int(i)) for i in order]
