import pytest

N_CRITERIA = 10


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def criterion(request):
    """record(n, part, ok, detail) stores one part of an acceptance criterion."""
    store = request.config._acceptance

    def record(n: int, part: str, ok: bool, detail: str = ""):
        store.setdefault(n, []).append((part, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        parts = store.get(n)
        if not parts:
            tr.write_line(f"criterion {n:2d}: FAIL (not run or did not complete)")
            continue
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'FAILED'} {p[2]}".rstrip() for p in parts)
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  [{detail}]")
