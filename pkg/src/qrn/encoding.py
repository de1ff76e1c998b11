"""Input module: tokenisation, vocabulary and the position encoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor

PAD, UNK, NIL = "<pad>", "<unk>", "<nil>"
RESERVED = (PAD, UNK, NIL)
_FINAL_PUNCT = ".?!"


class InputError(ValueError):
    pass


def tokenize(sentence: str) -> list[str]:
    """Lowercase, split on whitespace, drop trailing . ? ! from each token."""
    tokens = []
    for tok in sentence.lower().split():
        tok = tok.rstrip(_FINAL_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def answer_token(answer: str) -> str:
    """Fold an answer, including list answers like "football,apple", into one token."""
    parts = [p.strip() for p in answer.lower().split(",")]
    return ",".join(p.rstrip(_FINAL_PUNCT) for p in parts if p)


class Vocabulary:
    def __init__(self, words: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            if w not in self.stoi:
                self.stoi[w] = len(self.itos)
                self.itos.append(w)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def index(self, word: str) -> int:
        return self.stoi.get(word, self.stoi[UNK])

    def indices(self, words: Sequence[str]) -> list[int]:
        return [self.index(w) for w in words]

    def word(self, i: int) -> str:
        return self.itos[i]

    @property
    def pad(self) -> int:
        return self.stoi[PAD]

    @property
    def unk(self) -> int:
        return self.stoi[UNK]

    @property
    def nil(self) -> int:
        return self.stoi[NIL]


def build_vocabulary(corpus) -> Vocabulary:
    """Sorted vocabulary over context, question, answer and candidate tokens."""
    corpus = list(corpus)
    if not corpus:
        raise InputError("build_vocabulary: empty corpus")
    words = set()
    for ex in corpus:
        for s in ex.context:
            words.update(tokenize(s))
        words.update(tokenize(ex.question))
        if ex.candidates:
            for c in ex.candidates:
                words.update(tokenize(c))
            words.update(tokenize(ex.answer))
        else:
            words.add(answer_token(ex.answer))
    words -= set(RESERVED)
    return Vocabulary(sorted(words))


def position_weights(J: int, d: int, dtype=np.float64) -> np.ndarray:
    """l[j, k] = (1 - j/J) - (k/d)(1 - 2j/J) with 1-based j, k; shape (J, d)."""
    if J < 1:
        raise InputError("position_weights: sentence has no words")
    j = np.arange(1, J + 1, dtype=np.float64)[:, None]
    k = np.arange(1, d + 1, dtype=np.float64)[None, :]
    return ((1 - j / J) - (k / d) * (1 - 2 * j / J)).astype(dtype)


def position_encode(word_vectors) -> Tensor:
    """Position-weighted sum of a (J, d) matrix of word vectors."""
    W = ag.as_tensor(word_vectors)
    if W.ndim != 2 or W.shape[0] == 0:
        raise InputError(f"position_encode: need a non-empty (J, d) matrix, got {W.shape}")
    L = position_weights(W.shape[0], W.shape[1], W.dtype)
    return ag.sum(W * L, axis=0)


def init_embedding(V: int, d: int, rng: np.random.Generator, dtype=np.float32,
                   name: str = "A") -> Parameter:
    return Parameter(name, rng.normal(0.0, 1.0 / np.sqrt(d), (d, V)).astype(dtype))


@dataclass
class SentenceBatch:
    """Padded token ids and position weights for a (..., J) block of sentences.

    Padding positions carry zero weight, so they never affect the encoding.
    """
    ids: np.ndarray
    weights: np.ndarray

    def encode(self, A) -> Tensor:
        return ag.sum(ag.embed(A, self.ids) * self.weights, axis=-2)


def sentence_batch(sentences: Sequence[Sequence[int]], d: int, J: int | None = None,
                   dtype=np.float32, pad: int = 0) -> SentenceBatch:
    """Pack token-id lists (empty lists become all-padding rows)."""
    J = max([len(s) for s in sentences] + [1]) if J is None else J
    n = len(sentences)
    ids = np.full((n, J), pad, dtype=np.int64)
    weights = np.zeros((n, J, d), dtype=dtype)
    cache: dict[int, np.ndarray] = {}
    for i, s in enumerate(sentences):
        if not s:
            continue
        ids[i, :len(s)] = s
        if len(s) not in cache:
            cache[len(s)] = position_weights(len(s), d, dtype)
        weights[i, :len(s)] = cache[len(s)]
    return SentenceBatch(ids, weights)


@dataclass
class EncodedExample:
    X: Tensor
    q: Tensor
    answer_index: int
    candidate_indices: list[list[int]] | None = None
    text: dict = field(default_factory=dict)


def example_token_ids(example, vocab: Vocabulary) -> tuple[list[list[int]], list[int]]:
    sents = []
    for n, s in enumerate(example.context, 1):
        toks = tokenize(s)
        if not toks:
            raise InputError(f"encode_example: context line {n} is empty after tokenization: {s!r}")
        sents.append(vocab.indices(toks))
    qtoks = tokenize(example.question)
    if not qtoks:
        raise InputError(f"encode_example: question is empty after tokenization: {example.question!r}")
    return sents, vocab.indices(qtoks)


def encode_example(example, vocab: Vocabulary, A) -> EncodedExample:
    sents, qids = example_token_ids(example, vocab)
    d = A.shape[0]
    batch = sentence_batch(sents + [qids], d, dtype=A.dtype, pad=vocab.pad)
    enc = batch.encode(A)
    X = enc[:-1]
    q = enc[-1]
    if example.candidates:
        cands = [vocab.indices(tokenize(c)) for c in example.candidates]
        answer = example.candidates.index(example.answer) if example.answer in example.candidates else -1
    else:
        cands = None
        answer = vocab.index(answer_token(example.answer))
    return EncodedExample(X, q, answer, cands,
                          {"context": list(example.context), "question": example.question,
                           "answer": example.answer})
