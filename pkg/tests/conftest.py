import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Context factory: ``with criterion(n, budget) as rec: ...; rec.check(ok, detail)``."""

    class Record:
        def __init__(self, n, budget):
            self.n, self.budget, self.checks = n, budget, []

        def check(self, ok, detail):
            self.checks.append((bool(ok), detail))

        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            dt = time.perf_counter() - self.t0
            if exc_type is not None:
                self.checks.append((False, f"{exc_type.__name__}: {exc}"))
            self.checks.append((dt < self.budget, f"runtime {dt:.2f}s < {self.budget:g}s"))
            ok = all(c for c, _ in self.checks)
            failed = [d for c, d in self.checks if not c]
            detail = "; ".join(failed) if failed else "; ".join(d for _, d in self.checks)
            line = f"criterion {self.n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
            print(line)
            request.config.stash[_LINES].append(line)
            if exc_type is None:
                assert ok, line
            return False

    return Record
