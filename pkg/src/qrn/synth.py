"""Generators writing bAbI-format files for offline use.

They simulate the same small worlds as the original tasks (people moving
between rooms, picking up objects, conjunctions, restaurant booking
dialogs) and emit text in the exact line formats :mod:`qrn.data` parses.
Output is fully determined by the seed.
"""
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

PEOPLE = ["mary", "john", "daniel", "sandra"]
PLACES = ["bathroom", "bedroom", "garden", "hallway", "kitchen", "office"]
OBJECTS = ["football", "apple", "milk"]
MOVES = ["moved to the", "went to the", "journeyed to the", "travelled to the", "went back to the"]
GETS = ["picked up the {} there", "got the {} there", "grabbed the {} there", "took the {} there"]
DROPS = ["dropped the {}", "discarded the {}", "put down the {}", "left the {}"]

QA_NAMES = {1: "single-supporting-fact", 2: "two-supporting-facts", 12: "conjunction"}


def _cap(s: str) -> str:
    return s[0].upper() + s[1:]


def _choice(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _story_task1(rng, n_questions: int):
    lines, where, last = [], {}, {}
    for _ in range(n_questions):
        for _ in range(2):
            p, loc = _choice(rng, PEOPLE), _choice(rng, PLACES)
            lines.append(f"{_cap(p)} {_choice(rng, MOVES)} {loc}.")
            where[p], last[p] = loc, len(lines)
        p = _choice(rng, sorted(where))
        lines.append((f"Where is {_cap(p)}? ", where[p], [last[p]]))
    return lines


def _story_task12(rng, n_questions: int):
    lines, where, last = [], {}, {}
    for _ in range(n_questions):
        for _ in range(2):
            a, b = rng.choice(len(PEOPLE), 2, replace=False)
            a, b = PEOPLE[a], PEOPLE[b]
            loc = _choice(rng, PLACES)
            lines.append(f"{_cap(a)} and {_cap(b)} {_choice(rng, MOVES)} {loc}.")
            for p in (a, b):
                where[p], last[p] = loc, len(lines)
        p = _choice(rng, sorted(where))
        lines.append((f"Where is {_cap(p)}? ", where[p], [last[p]]))
    return lines


def _story_task2(rng, n_questions: int):
    lines = []
    where, moved = {}, {}
    holder, obj_loc, obj_line = {}, {}, {}
    asked = 0
    while asked < n_questions:
        for _ in range(int(rng.integers(1, 7))):
            p = _choice(rng, PEOPLE)
            held = [o for o, h in holder.items() if h == p]
            free = [o for o in OBJECTS if o not in holder and (o not in obj_loc or obj_loc[o] == where.get(p))]
            r = rng.random()
            if p in where and held and r < 0.2:
                o = _choice(rng, held)
                lines.append(f"{_cap(p)} {_choice(rng, DROPS).format(o)}.")
                del holder[o]
                obj_loc[o] = where[p]
                obj_line[o] = [len(lines), moved[p]]
            elif p in where and free and r < 0.45:
                o = _choice(rng, free)
                lines.append(f"{_cap(p)} {_choice(rng, GETS).format(o)}.")
                holder[o] = p
                obj_line[o] = [len(lines)]
            else:
                loc = _choice(rng, PLACES)
                lines.append(f"{_cap(p)} {_choice(rng, MOVES)} {loc}.")
                where[p], moved[p] = loc, len(lines)
        known = [o for o in OBJECTS if (o in holder and holder[o] in where) or o in obj_loc and o not in holder]
        if not known:
            continue
        o = _choice(rng, known)
        if o in holder:
            p = holder[o]
            loc, support = where[p], [obj_line[o][0], moved[p]]
        else:
            loc, support = obj_loc[o], obj_line[o]
        lines.append((f"Where is the {o}? ", loc, sorted(support)))
        asked += 1
    return lines


_QA_STORIES = {1: _story_task1, 2: _story_task2, 12: _story_task12}


def generate_qa(task_id: int, n_examples: int, seed: int = 0, questions_per_story: int = 5) -> str:
    """bAbI QA text with ``n_examples`` questions."""
    if task_id not in _QA_STORIES:
        raise ValueError(f"no generator for QA task {task_id}; available: {sorted(_QA_STORIES)}")
    rng = np.random.default_rng(seed)
    out, count = [], 0
    while count < n_examples:
        k = min(questions_per_story, n_examples - count)
        for i, line in enumerate(_QA_STORIES[task_id](rng, k), 1):
            if isinstance(line, tuple):
                q, a, support = line
                out.append(f"{i} {q.strip()}\t{a}\t{' '.join(map(str, support))}")
                count += 1
            else:
                out.append(f"{i} {line}")
    return "\n".join(out) + "\n"


# -- dialog task 1: issuing API calls ----------------------------------------

CUISINES = ["british", "cantonese", "french", "indian", "italian", "japanese", "korean",
            "spanish", "thai", "vietnamese"]
LOCATIONS = ["bangkok", "beijing", "bombay", "hanoi", "london", "madrid", "paris", "rome",
             "seoul", "tokyo"]
PARTY = ["two", "four", "six", "eight"]
PRICES = ["cheap", "moderate", "expensive"]
SLOTS = ["cuisine", "location", "party", "price"]

GREETINGS = ["hi", "hello", "good morning", "hey there"]
ASK = {
    "cuisine": "any preference on a type of cuisine",
    "location": "where should it be",
    "party": "how many people would be in your party",
    "price": "which price range are looking for",
}
ANSWER = {
    "cuisine": ["with {} food", "i love {} food", "{} cuisine please"],
    "location": ["{} please", "in {}", "somewhere in {}"],
    "party": ["for {} people please", "we will be {}", "{} people"],
    "price": ["in a {} price range please", "i am looking for a {} restaurant", "{} please"],
}
MENTION = {
    "cuisine": "with {} cuisine",
    "location": "in {}",
    "party": "for {} people",
    "price": "in a {} price range",
}
FIXED_RESPONSES = ["hello what can i help you with today", "i'm on it",
                   "ok let me look into some options for you"] + list(ASK.values())


def dialog_candidates() -> list[str]:
    calls = [f"api_call {c} {l} {p} {r}" for c, l, p, r in
             itertools.product(CUISINES, LOCATIONS, PARTY, PRICES)]
    return FIXED_RESPONSES + calls


def _dialog(rng):
    goal = {"cuisine": _choice(rng, CUISINES), "location": _choice(rng, LOCATIONS),
            "party": _choice(rng, PARTY), "price": _choice(rng, PRICES)}
    given = [s for s in SLOTS if rng.random() < 0.5]
    order = [SLOTS[i] for i in rng.permutation(len(SLOTS))]
    request = "can you book a table" + "".join(
        " " + MENTION[s].format(goal[s]) for s in order if s in given)
    turns = [(_choice(rng, GREETINGS), "hello what can i help you with today"),
             (request, "i'm on it")]
    user = "<SILENCE>"
    for s in SLOTS:
        if s not in given:
            turns.append((user, ASK[s]))
            user = _choice(rng, ANSWER[s]).format(goal[s])
    turns.append((user, "ok let me look into some options for you"))
    turns.append(("<SILENCE>", "api_call " + " ".join(goal[s] for s in SLOTS)))
    return turns


def generate_dialog(n_dialogs: int, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_dialogs):
        for i, (u, s) in enumerate(_dialog(rng), 1):
            out.append(f"{i} {u}\t{s}")
        out.append("")
    return "\n".join(out) + "\n"


def write_qa_dataset(root, tasks=(1, 2, 12), n_train: int = 1000, n_test: int = 1000,
                     seed: int = 0) -> Path:
    root = Path(root)
    (root / "en").mkdir(parents=True, exist_ok=True)
    for task in tasks:
        stem = f"qa{task}_{QA_NAMES[task]}"
        (root / "en" / f"{stem}_train.txt").write_text(generate_qa(task, n_train, seed + 1000 * task))
        (root / "en" / f"{stem}_test.txt").write_text(generate_qa(task, n_test, seed + 1000 * task + 1))
    return root


def write_dialog_dataset(root, n_train: int = 1000, n_test: int = 1000, seed: int = 0) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "dialog-babi-candidates.txt").write_text(
        "\n".join(f"1 {c}" for c in dialog_candidates()) + "\n")
    (root / "dialog-babi-task1-API-calls-trn.txt").write_text(generate_dialog(n_train, seed + 1))
    (root / "dialog-babi-task1-API-calls-tst.txt").write_text(generate_dialog(n_test, seed + 2))
    return root
