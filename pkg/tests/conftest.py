import re

import pytest

CRITERIA = {
    1: "push-sum mass conservation",
    2: "ball containment",
    3: "eps-consensus correctness",
    4: "O(1/k) objective gap",
    5: "vanishing constraint residual",
    6: "linear rate",
    7: "paper-scale residual milestones",
    8: "comparative ordering vs baselines",
    9: "communication rounds ordering",
    10: "subproblem oracles",
}

_outcomes: dict[int, str] = {}
_notes: dict[int, list[str]] = {}


@pytest.fixture
def note(request):
    """Record a line printed under the criterion in the terminal summary."""
    match = re.search(r"criterion_(\d+)", request.node.name)
    idx = int(match.group(1)) if match else 0

    def _note(text: str) -> None:
        _notes.setdefault(idx, []).append(text)

    return _note


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    idx = int(match.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _outcomes.get(idx)
        if prev != "FAIL":
            _outcomes[idx] = "PASS" if report.outcome == "passed" else (
                "SKIP" if report.outcome == "skipped" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for idx in sorted(CRITERIA):
        status = _outcomes.get(idx, "NOT RUN")
        terminalreporter.write_line(f"criterion {idx:>2} {CRITERIA[idx]:<38} {status}")
        for line in _notes.get(idx, []):
            terminalreporter.write_line(f"             {line}")
