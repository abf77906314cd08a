import numpy as np
import pytest

from oblique_switch.markov import irreducible


def random_chain(rng, d, alpha=1.0):
    """Irreducible stochastic matrix with zero diagonal and Dirichlet rows."""
    while True:
        P = np.zeros((d, d))
        for i in range(d):
            others = [j for j in range(d) if j != i]
            P[i, others] = rng.dirichlet(np.full(d - 1, alpha))
        if irreducible(P):
            return P


def random_interior_instance(rng, d):
    """Uncontrolled chain with positive mean cost (nonempty interior)."""
    P = random_chain(rng, d)
    c = rng.uniform(0.2, 2.0, size=d)
    return P, c


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance reporting

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store ``(passed, detail)`` for an acceptance criterion."""
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
