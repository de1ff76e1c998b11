"""Parsers for bAbI story QA and bAbI dialog files, plus dataset assembly.

QA files number each line; numbering restarting at 1 begins a new story.
Statement lines are ``<n> <sentence>``; question lines are
``<n> <question>\\t<answer>\\t<supporting ids>``.

Dialog files hold turns ``<n> <user utterance>\\t<system response>``;
lines without a tab are knowledge-base facts (``<n> <entity> R_<rel> <value>``).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .encoding import NIL, InputError, Vocabulary, build_vocabulary

DEFAULT_MAX_CONTEXT = 200
_NUMBERED = re.compile(r"^(\d+) (.*)$")


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Example:
    context: list[str]
    question: str
    answer: str
    supporting_ids: list[int] | None = None
    task_id: int = 0
    candidates: list[str] | None = None

    def __post_init__(self):
        if not self.context:
            raise InputError("Example: context must be non-empty")
        if not self.answer:
            raise InputError("Example: answer must be non-empty")


@dataclass
class DatasetSplit:
    train: list[Example]
    dev: list[Example]
    test: list[Example]
    vocab: Vocabulary
    candidates: list[str] | None = None
    meta: dict = field(default_factory=dict)


def _lines(text) -> Iterable[str]:
    if isinstance(text, str):
        return text.splitlines()
    return (line.rstrip("\n") for line in text)


def _numbered(lineno: int, line: str) -> tuple[int, str]:
    m = _NUMBERED.match(line.strip())
    if m is None:
        raise ParseError(lineno, f"expected a leading line number: {line!r}")
    return int(m.group(1)), m.group(2)


def parse_babi_qa(text, task_id: int = 0, max_context: int = DEFAULT_MAX_CONTEXT) -> list[Example]:
    examples = []
    story: list[str] = []
    for lineno, line in enumerate(_lines(text), 1):
        if not line.strip():
            continue
        n, rest = _numbered(lineno, line)
        if n == 1:
            story = []
        if "\t" in rest:
            fields = rest.split("\t")
            if len(fields) < 2 or not fields[1].strip():
                raise ParseError(lineno, "question line without an answer")
            question, answer = fields[0].strip(), fields[1].strip()
            support = [int(s) for s in fields[2].split()] if len(fields) > 2 and fields[2].strip() else []
            if not story:
                raise ParseError(lineno, "question before any statement")
            examples.append(Example(list(story[-max_context:]), question, answer, support, task_id))
        else:
            story.append(rest.strip())
    return examples


def _strip_number(line: str) -> str:
    m = _NUMBERED.match(line.strip())
    return m.group(2).strip() if m else line.strip()


def parse_candidates(text) -> list[str]:
    return [_strip_number(line) for line in _lines(text) if line.strip()]


def is_kb_fact(rest: str) -> bool:
    parts = rest.split()
    return len(parts) >= 3 and parts[1].startswith("R_")


def parse_babi_dialog(text, candidates, task_id: int = 0,
                      max_context: int = DEFAULT_MAX_CONTEXT) -> list[Example]:
    """One example per turn: the prior utterances are the context, the user
    utterance the question, the system response the answer."""
    cands = candidates if isinstance(candidates, list) else parse_candidates(candidates)
    examples = []
    history: list[str] = []
    for lineno, line in enumerate(_lines(text), 1):
        if not line.strip():
            continue
        n, rest = _numbered(lineno, line)
        if n == 1:
            history = []
        if "\t" not in rest:
            if not is_kb_fact(rest):
                raise ParseError(lineno, f"turn without a tab-separated response: {line!r}")
            history.append(rest.strip())
            continue
        user, system = (s.strip() for s in rest.split("\t", 1))
        context = history[-max_context:] if history else [NIL]
        examples.append(Example(list(context), user, system, None, task_id, cands))
        history.extend([user, system])
    return examples


def split_dev(train: list[Example], fraction: float = 0.1, seed: int = 0):
    if not 0 < fraction < 1:
        raise InputError(f"split_dev: fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(train))
    n_dev = math.ceil(fraction * len(train))
    keep = [train[i] for i in order[:len(train) - n_dev]]
    dev = [train[i] for i in order[len(train) - n_dev:]]
    return keep, dev


# -- serialisation ------------------------------------------------------------

def format_babi_qa(examples: list[Example]) -> str:
    """Write each example as its own story; parses back to the same examples."""
    out = []
    for ex in examples:
        for i, s in enumerate(ex.context, 1):
            out.append(f"{i} {s}")
        support = " ".join(str(s) for s in ex.supporting_ids or [])
        out.append(f"{len(ex.context) + 1} {ex.question}\t{ex.answer}\t{support}")
    return "\n".join(out) + "\n"


def dump_records(examples: list[Example]) -> str:
    """One example per line: task, context (" | "-joined), question, answer,
    supporting ids. Candidates are not repeated per line."""
    out = []
    for ex in examples:
        support = " ".join(str(s) for s in ex.supporting_ids) if ex.supporting_ids is not None else "-"
        out.append("\t".join([str(ex.task_id), " | ".join(ex.context), ex.question, ex.answer, support]))
    return "\n".join(out) + "\n"


def load_records(text, candidates: list[str] | None = None) -> list[Example]:
    examples = []
    for lineno, line in enumerate(_lines(text), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ParseError(lineno, f"expected 5 tab-separated fields, got {len(fields)}")
        task, context, question, answer, support = fields
        ids = None if support == "-" else [int(s) for s in support.split()]
        examples.append(Example(context.split(" | "), question, answer, ids, int(task),
                                candidates))
    return examples


# -- dataset layout -----------------------------------------------------------

def _find(root: Path, pattern: str) -> Path:
    hits = sorted(root.rglob(pattern))
    if not hits:
        raise FileNotFoundError(f"no file matching {pattern!r} under {root}")
    return hits[0]


def load_qa_task(root, task_id: int, dev_fraction: float = 0.1, seed: int = 0,
                 max_context: int = DEFAULT_MAX_CONTEXT) -> DatasetSplit:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    train_path = _find(root, f"qa{task_id}_*_train.txt")
    test_path = _find(root, f"qa{task_id}_*_test.txt")
    train = parse_babi_qa(train_path.read_text(encoding="utf-8"), task_id, max_context)
    test = parse_babi_qa(test_path.read_text(encoding="utf-8"), task_id, max_context)
    train, dev = split_dev(train, dev_fraction, seed)
    vocab = build_vocabulary(train + dev + test)
    return DatasetSplit(train, dev, test, vocab,
                        meta={"kind": "qa", "task": task_id, "files": [str(train_path), str(test_path)]})


def load_dialog_task(root, task_id: int, oov: bool = False, dev_fraction: float = 0.1,
                     seed: int = 0, max_context: int = DEFAULT_MAX_CONTEXT) -> DatasetSplit:
    """Load ``dialog-babi-task<N>-*-trn.txt`` and ``-tst[-OOV].txt``.

    Training data gets the usual 10% development hold-out; the shipped dev
    file is not used.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    train_path = _find(root, f"dialog-babi-task{task_id}-*-trn.txt")
    test_path = _find(root, f"dialog-babi-task{task_id}-*-tst{'-OOV' if oov else ''}.txt")
    cand_name = "dialog-babi-task6-dstc2-candidates.txt" if task_id == 6 else "dialog-babi-candidates.txt"
    cands = parse_candidates(_find(root, cand_name).read_text(encoding="utf-8"))
    train = parse_babi_dialog(train_path.read_text(encoding="utf-8"), cands, task_id, max_context)
    test = parse_babi_dialog(test_path.read_text(encoding="utf-8"), cands, task_id, max_context)
    train, dev = split_dev(train, dev_fraction, seed)
    # OOV words in the test set must stay out of the vocabulary.
    vocab = build_vocabulary(train + dev)
    return DatasetSplit(train, dev, test, vocab, candidates=cands,
                        meta={"kind": "dialog", "task": task_id, "oov": oov,
                              "files": [str(train_path), str(test_path)]})


def fingerprint(paths) -> str:
    import hashlib

    h = hashlib.sha256()
    for p in sorted(str(p) for p in paths):
        h.update(Path(p).read_bytes())
    return h.hexdigest()
