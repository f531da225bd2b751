from collections import defaultdict

import numpy as np
import pytest

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE = []


def random_state(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_hermitian(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def bell():
    v = np.zeros(4)
    v[0] = v[3] = 1 / np.sqrt(2)
    return np.outer(v, v).astype(complex)


def hmm_words(length):
    """Brute-force word distribution of the even process: walk every path of
    the two-state machine from the stationary mix (A: 2/3, B: 1/3)."""
    out = defaultdict(float)

    def walk(state, word, p):
        if len(word) == length:
            out[word] += p
            return
        if state == "A":
            walk("A", word + "0", p / 2)
            walk("B", word + "1", p / 2)
        else:
            walk("A", word + "1", p)

    walk("A", "", 2 / 3)
    walk("B", "", 1 / 3)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
