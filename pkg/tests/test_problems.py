import json
from collections import defaultdict

import numpy as np
import pytest

from qib.errors import ChannelError, SchemaError
from qib.measures import bounds, entropy_bits
from qib.problems import (
    amplitude_damping_problem, bundled, classical_problem, even_process, load_problem, load_problem_file,
    phase_damping_problem, problem_to_json,
)
from qib.states import classical_channel

from conftest import hmm_words, random_state


def test_even_process_matches_enumeration():
    words = hmm_words(5)
    p_x = defaultdict(float)
    for w, p in words.items():
        p_x[w[:3]] += p
    prob = even_process()
    px = np.real(np.diag(prob.rho_x.mat))
    pyx = np.array([[prob.relevance(np.diag(np.eye(8)[x]))[y, y].real for x in range(8)] for y in range(4)])
    for x in range(8):
        key = format(x, "03b")
        assert abs(px[x] - p_x[key]) < 1e-12
        if p_x[key] > 0:
            for y in range(4):
                assert abs(pyx[y, x] - words.get(key + format(y, "02b"), 0.0) / p_x[key]) < 1e-12


def test_even_process_examples():
    px = np.real(np.diag(even_process().rho_x.mat))
    assert px[0b010] == 0
    assert np.isclose(px[0b111], 1 / 3)
    for w in (0b000, 0b001, 0b100, 0b101):
        assert np.isclose(px[w], 1 / 12)
    assert np.isclose(px[0b011], 1 / 6) and np.isclose(px[0b110], 1 / 6)
    assert abs(entropy_bits(even_process().rho_x) - 2.585) < 1e-3
    prob = even_process()
    col = np.real(np.diag(prob.relevance(np.diag(np.eye(8)[0b111]))))
    assert np.allclose(col, [1 / 8, 1 / 8, 1 / 4, 1 / 2])


def test_even_process_invariants():
    prob = even_process()
    px = np.real(np.diag(prob.rho_x.mat))
    assert np.isclose(px.sum(), 1)
    for x in range(8):
        bits = format(x, "03b")
        # a run of ones enclosed by zeros on both sides must be even
        if "010" in bits:
            assert px[x] == 0
    assert prob.d_x == 8 and prob.d_y == 4


def test_phase_damping_examples():
    prob = phase_damping_problem(lam=0.0)
    b = bounds(prob)
    assert abs(b["pred_max"] - b["mem_max_quantum"]) < 1e-9
    prob = phase_damping_problem(p=0.0)
    assert abs(bounds(prob)["mem_max_quantum"]) < 1e-9
    b = bounds(phase_damping_problem())
    assert abs(b["mem_max_quantum"] - 1.2197) < 1e-4
    with pytest.raises(ValueError):
        phase_damping_problem(lam=1.5)


def test_amplitude_damping_examples(rng):
    prob = amplitude_damping_problem()
    out = prob.relevance(prob.rho_x.mat)
    assert out.shape == (2, 2) and abs(np.trace(out) - 1) < 1e-12
    assert np.min(np.linalg.eigvalsh(out)) >= -1e-12
    assert abs(bounds(prob)["mem_max_classical"] - (0.60984 + 1)) < 1e-4
    full = amplitude_damping_problem(lam=1.0)
    assert np.allclose(full.relevance(random_state(rng, 4)), np.diag([1, 0]))
    assert abs(bounds(full)["pred_max"]) < 1e-9


def test_amplitude_damping_second_qubit_irrelevant(rng):
    prob = amplitude_damping_problem()
    first = np.full((2, 2), 0.35) + 0.15 * np.eye(2)
    base = prob.relevance(np.kron(first, np.eye(2) / 2))
    for _ in range(5):
        assert np.max(np.abs(prob.relevance(np.kron(first, random_state(rng, 2))) - base)) < 1e-12


def test_bundled_lookup():
    assert bundled("even").label == "even"
    with pytest.raises(SchemaError):
        bundled("nope")


@pytest.mark.parametrize("name", ["even", "phase-damping", "amplitude-damping"])
def test_round_trip_json(name):
    prob = bundled(name)
    back = load_problem(json.dumps(problem_to_json(prob)))
    assert np.array_equal(back.rho_x.mat, prob.rho_x.mat)
    assert len(back.relevance.kraus) == len(prob.relevance.kraus)
    for a, b in zip(back.relevance.kraus, prob.relevance.kraus):
        assert np.array_equal(a, b)


def test_non_trace_preserving_document():
    doc = problem_to_json(phase_damping_problem())
    doc["relevance"]["kraus"] = doc["relevance"]["kraus"][:1]
    with pytest.raises(ChannelError, match="trace preserving"):
        load_problem(doc)


def test_schema_errors(tmp_path):
    with pytest.raises(SchemaError):
        load_problem("{not json")
    with pytest.raises(SchemaError):
        load_problem({"label": "x"})
    with pytest.raises(SchemaError):
        load_problem({"rho_X": {"matrix": [[1, 0]]}, "relevance": {}})
    with pytest.raises(SchemaError):
        load_problem_file(tmp_path / "missing.json")


def test_classical_shorthand():
    p_x = [0.2, 0.3, 0.5]
    pyx = [[0.1, 0.6, 0.5], [0.9, 0.4, 0.5]]
    prob = load_problem({"p_x": p_x, "p_y_given_x": pyx, "label": "c"})
    assert np.allclose(prob.rho_x.mat, np.diag(p_x))
    ref = classical_channel(pyx)
    for x in range(3):
        e = np.diag(np.eye(3)[x])
        assert np.allclose(prob.relevance(e), ref(e))
    assert classical_problem(p_x, pyx).d_y == 2
