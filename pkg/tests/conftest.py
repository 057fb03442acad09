import time

import pytest

ACCEPTANCE = {}


class _Recorder:
    def __init__(self):
        self.t0 = time.perf_counter()

    def restart(self):
        self.t0 = time.perf_counter()

    def __call__(self, n, checks, budget, detail=""):
        """Record criterion ``n``: every entry of ``checks`` must hold within ``budget`` seconds."""
        elapsed = time.perf_counter() - self.t0
        failed = [name for name, ok in checks.items() if not ok]
        if elapsed > budget:
            failed.append(f"runtime {elapsed:.0f}s > {budget:.0f}s")
        status = "FAIL" if failed else "PASS"
        line = f"criterion {n:>2}: {status}  ({elapsed:.1f}s) {detail}"
        if failed:
            line += f"  failed: {', '.join(failed)}"
        ACCEPTANCE[n] = line
        print(line)
        assert not failed, line


@pytest.fixture
def criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
