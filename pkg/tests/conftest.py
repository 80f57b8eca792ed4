import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_polytope(gen: np.random.Generator, d: int, m: int, radius: float = 1.0):
    """Ball plus m random cuts that keep the origin strictly inside."""
    A = gen.standard_normal((m, d))
    b = gen.uniform(0.1, 0.8, m) * np.linalg.norm(A, axis=1) * radius
    return A, b


# acceptance results: criterion -> [(check, passed, detail)], printed after the run
ACCEPTANCE: dict = {}


def record(criterion: int, check: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        ok = all(p for _, p, _ in checks)
        detail = "; ".join(f"{name} {'ok' if p else 'FAIL'} ({d})" for name, p, d in checks)
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'} - {detail}")
