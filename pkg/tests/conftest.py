import pytest

# criterion id -> (verdict, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def record():
    def _record(criterion: int, ok: bool, detail: str, report_only: bool = False):
        verdict = "PASS" if ok else ("REPORT" if report_only else "FAIL")
        ACCEPTANCE[criterion] = (verdict, detail)
        print(f"criterion {criterion}: {verdict} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{verdict}] criterion {k}: {detail}")
