import re

CRITERION_TITLES = {
    1: "entropy math suite",
    2: "temperature regulation",
    3: "stagnation escape",
    4: "transition semantics",
    5: "compression",
    6: "retrieval oracle",
    7: "golden run determinism",
    8: "parser round-trip",
    9: "barrier ordering",
}


def _criterion_number(nodeid: str) -> int | None:
    match = re.search(r"::test_criterion_(\d+)", nodeid)
    return int(match.group(1)) if match else None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    outcomes: dict[int, str] = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            number = _criterion_number(nodeid)
            if number is not None:
                outcomes[number] = label
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(outcomes):
        title = CRITERION_TITLES.get(number, "")
        terminalreporter.write_line(f"criterion {number}: {outcomes[number]} - {title}")
