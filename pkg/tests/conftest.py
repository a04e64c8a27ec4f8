import functools

# (criterion number, passed, description, detail) filled in by test_acceptance
ACCEPTANCE_RESULTS = []


def criterion(number, description):
    """Record a PASS/FAIL line for an acceptance test, then re-raise any failure."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE_RESULTS.append((number, False, description, f"{type(exc).__name__}: {exc}"))
                raise
            ACCEPTANCE_RESULTS.append((number, True, description, detail or ""))
        return run
    return wrap


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, description, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {description}"
        if detail:
            line += f" -- {str(detail).splitlines()[0][:200]}"
        terminalreporter.write_line(line)
