from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from qrn import data
from qrn.encoding import NIL, InputError
from qrn.synth import dialog_candidates, generate_dialog, generate_qa

DATA = Path(__file__).parent / "data"

QA_SAMPLE = """1 Mary moved to the bathroom.
2 John went to the hallway.
3 Where is Mary? \tbathroom\t1
4 Daniel went back to the hallway.
5 Where is Daniel? \thallway\t4
1 Sandra journeyed to the office.
2 Where is Sandra? \toffice\t1
"""


def test_parse_qa_stories_and_questions():
    exs = data.parse_babi_qa(QA_SAMPLE, task_id=1)
    assert len(exs) == 3
    assert exs[0].context == ["Mary moved to the bathroom.", "John went to the hallway."]
    assert exs[0].question == "Where is Mary?" and exs[0].answer == "bathroom"
    assert exs[0].supporting_ids == [1]
    # questions are not part of the context
    assert len(exs[1].context) == 3 and exs[1].supporting_ids == [4]
    # numbering restarting at 1 starts a new story
    assert exs[2].context == ["Sandra journeyed to the office."]


def test_parse_qa_truncates_long_stories():
    text = "".join(f"{i} John went to the office.\n" for i in range(1, 11)) + "11 Where is John?\toffice\t10\n"
    exs = data.parse_babi_qa(text, max_context=4)
    assert len(exs[0].context) == 4


def test_parse_qa_errors_name_the_line():
    with pytest.raises(data.ParseError) as e:
        data.parse_babi_qa("1 Mary moved.\nno number here\n")
    assert e.value.lineno == 2
    with pytest.raises(data.ParseError):
        data.parse_babi_qa("1 Where is Mary?\tkitchen\t1\n")
    with pytest.raises(data.ParseError):
        data.parse_babi_qa("1 Mary moved.\n2 Where is Mary?\t\t1\n")


def test_qa_format_round_trip():
    exs = data.parse_babi_qa(QA_SAMPLE)
    again = data.parse_babi_qa(data.format_babi_qa(exs))
    assert again == exs


def test_record_round_trip():
    exs = data.parse_babi_qa(QA_SAMPLE, task_id=2)
    assert data.load_records(data.dump_records(exs)) == exs


def test_record_errors():
    with pytest.raises(data.ParseError):
        data.load_records("1\tonly three\tfields\n")


def test_parse_dialog_turns_and_kb_facts():
    cands = data.parse_candidates((DATA / "dialog-babi-candidates.txt").read_text())
    exs = data.parse_babi_dialog((DATA / "dialog-kb-sample.txt").read_text(), cands, task_id=1)
    assert len(exs) == 6
    assert exs[0].context == [NIL] and exs[0].question == "hi"
    assert exs[0].answer == "hello what can i help you with today"
    # KB facts join the history as utterances
    assert exs[1].context[2:] == ["resto_rome_cheap_thai_1stars R_cuisine thai",
                                  "resto_rome_cheap_thai_1stars R_location rome"]
    assert exs[3].context[-2:] == ["<SILENCE>", "any preference on a type of cuisine"]
    assert exs[4].context == [NIL]


def test_dialog_turn_without_tab_is_an_error():
    with pytest.raises(data.ParseError):
        data.parse_babi_dialog("1 hello there friend\n", ["x"])


def test_candidates_strip_numbers():
    assert data.parse_candidates("1 api_call a b\n1 i'm on it\n\n") == ["api_call a b", "i'm on it"]


def test_split_dev_is_a_partition():
    exs = data.parse_babi_qa((DATA / "qa1_single-supporting-fact_train.txt").read_text())
    train, dev = data.split_dev(exs, 0.1, seed=3)
    assert len(dev) == 4 and len(train) == 36
    assert sorted(map(id, train + dev)) == sorted(map(id, exs))
    assert data.split_dev(exs, 0.1, seed=3) == (train, dev)
    with pytest.raises(InputError):
        data.split_dev(exs, 1.5)


def test_load_qa_task_from_fixture_dir():
    ds = data.load_qa_task(DATA, 2)
    assert len(ds.train) + len(ds.dev) == 40 and len(ds.test) == 20
    assert ds.meta["kind"] == "qa"
    for ex in ds.train + ds.dev + ds.test:
        assert ex.answer in ds.vocab


def test_load_dialog_task_from_fixture_dir():
    ds = data.load_dialog_task(DATA, 1)
    assert ds.candidates == dialog_candidates()
    for ex in ds.train + ds.dev + ds.test:
        assert ex.answer in ds.candidates


def test_missing_directory_and_files():
    with pytest.raises(FileNotFoundError, match="nowhere"):
        data.load_qa_task(DATA / "nowhere", 1)
    with pytest.raises(FileNotFoundError):
        data.load_qa_task(DATA, 7)


def test_fingerprint_changes_with_content(tmp_path):
    a = tmp_path / "a.txt"
    a.write_text("one")
    first = data.fingerprint([a])
    assert first == data.fingerprint([a])
    a.write_text("two")
    assert data.fingerprint([a]) != first


@settings(max_examples=15, deadline=None)
@given(task=st.sampled_from([1, 2, 12]), seed=st.integers(0, 10_000))
def test_generated_qa_round_trips(task, seed):
    exs = data.parse_babi_qa(generate_qa(task, 6, seed=seed), task_id=task)
    assert len(exs) == 6
    assert data.parse_babi_qa(data.format_babi_qa(exs), task_id=task) == exs
    assert data.load_records(data.dump_records(exs)) == exs
    for ex in exs:
        assert ex.supporting_ids and min(ex.supporting_ids) >= 1


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_generated_dialogs_answer_from_candidates(seed):
    cands = dialog_candidates()
    exs = data.parse_babi_dialog(generate_dialog(3, seed), cands)
    assert exs and all(ex.answer in cands for ex in exs)
    assert exs[-1].answer.startswith("api_call")
