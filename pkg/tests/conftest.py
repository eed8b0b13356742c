import pytest

_ACCEPTANCE: dict[int, list[tuple[str, bool]]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(n, what, ok)`` records one sub-check of acceptance criterion ``n``."""

    def record(n: int, what: str, ok: bool) -> None:
        _ACCEPTANCE.setdefault(n, []).append((what, bool(ok)))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[n]
        failed = [w for w, ok in checks if not ok]
        verdict = "FAIL" if failed else "PASS"
        detail = "; ".join(failed) if failed else f"{len(checks)} checks"
        terminalreporter.write_line(f"ACCEPTANCE {n} {verdict} ({detail})")
