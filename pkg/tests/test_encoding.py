import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrn.data import Example
from qrn.encoding import (NIL, PAD, UNK, InputError, Vocabulary, answer_token, build_vocabulary,
                          encode_example, init_embedding, position_encode, position_weights, sentence_batch,
                          tokenize)


def test_position_weights_two_words_two_dims():
    # j=1: (1 - 1/2) - (k/2)(1 - 1) = 0.5 ; j=2: 0 - (k/2)(1 - 2) = k/2
    L = position_weights(2, 2)
    np.testing.assert_allclose(L, [[0.5, 0.5], [0.5, 1.0]])


def test_position_weights_single_word():
    # J = 1: (1 - 1) - (k/d)(1 - 2) = k/d
    np.testing.assert_allclose(position_weights(1, 4)[0], [0.25, 0.5, 0.75, 1.0])


def test_position_weights_reject_empty():
    with pytest.raises(InputError):
        position_weights(0, 3)


def test_position_encode_is_weighted_sum():
    W = np.arange(6.0).reshape(2, 3)
    got = position_encode(W).data
    np.testing.assert_allclose(got, (W * position_weights(2, 3)).sum(axis=0))


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6))
def test_word_order_changes_encoding(words):
    vocab = Vocabulary(["a", "b", "c"])
    A = np.random.default_rng(0).normal(size=(8, len(vocab)))
    ids = vocab.indices(words)
    fwd = sentence_batch([ids], 8, dtype=np.float64).encode(A).data[0]
    rev = sentence_batch([ids[::-1]], 8, dtype=np.float64).encode(A).data[0]
    if ids != ids[::-1]:
        assert not np.allclose(fwd, rev)
    else:
        np.testing.assert_allclose(fwd, rev)


def test_padding_does_not_change_encoding():
    A = np.random.default_rng(1).normal(size=(5, 6))
    a = sentence_batch([[3, 4]], 5, dtype=np.float64).encode(A).data[0]
    b = sentence_batch([[3, 4], [3, 4, 5, 5]], 5, dtype=np.float64).encode(A).data[0]
    np.testing.assert_allclose(a, b)


def test_tokenize():
    assert tokenize("Mary went to the Kitchen.") == ["mary", "went", "to", "the", "kitchen"]
    assert tokenize("Where is it?") == ["where", "is", "it"]
    assert tokenize("  ") == []


def test_answer_token_folds_lists():
    assert answer_token("Football, Apple") == "football,apple"


def test_vocabulary_reserved_and_unknown():
    v = Vocabulary(["x", "y"])
    assert [v.pad, v.unk, v.nil] == [0, 1, 2]
    assert v.word(0) == PAD and v.word(1) == UNK and v.word(2) == NIL
    assert v.index("never-seen") == v.unk
    assert len(v) == 5


def test_build_vocabulary_is_sorted_and_includes_answers():
    exs = [Example(["B a."], "where c?", "dd"), Example(["a e"], "c", "x,y")]
    v = build_vocabulary(exs)
    assert v.itos[3:] == ["a", "b", "c", "dd", "e", "where", "x,y"]
    with pytest.raises(InputError):
        build_vocabulary([])


def test_build_vocabulary_dialog_uses_candidate_tokens():
    ex = Example(["hi"], "book it", "api_call thai rome", candidates=["api_call thai rome", "ok"])
    v = build_vocabulary([ex])
    assert {"api_call", "thai", "rome", "ok"} <= set(v.itos)
    assert "api_call thai rome" not in v


def test_init_embedding_scale():
    A = init_embedding(2000, 50, np.random.default_rng(0))
    assert A.shape == (50, 2000)
    assert A.data.std() == pytest.approx(1 / np.sqrt(50), rel=0.02)


def test_encode_example_shapes():
    ex = Example(["mary went home", "john left"], "where is mary", "home")
    v = build_vocabulary([ex])
    A = init_embedding(len(v), 6, np.random.default_rng(0), np.float64)
    enc = encode_example(ex, v, A)
    assert enc.X.shape == (2, 6) and enc.q.shape == (6,)
    assert enc.answer_index == v.index("home")


def test_encode_example_rejects_empty_sentence():
    ex = Example(["...", "john left"], "where", "home")
    v = build_vocabulary([Example(["john left"], "where", "home")])
    A = init_embedding(len(v), 4, np.random.default_rng(0))
    with pytest.raises(InputError):
        encode_example(ex, v, A)
