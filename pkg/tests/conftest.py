import pytest

from qrn.synth import write_dialog_dataset, write_qa_dataset

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> str:
    line = f"{criterion} {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return line


@pytest.fixture(scope="session")
def babi_root(tmp_path_factory):
    """Generated bAbI-format data: QA tasks 1, 2, 12 (1k train / 1k test) and dialog task 1."""
    root = tmp_path_factory.mktemp("babi")
    write_qa_dataset(root, tasks=(1, 2, 12), n_train=1000, n_test=1000, seed=0)
    write_dialog_dataset(root / "dialog", n_train=1000, n_test=1000, seed=0)
    return root


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
