"""Property-based checks of the structural invariants on random inputs."""
import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from qib.linalg import partial_trace
from qib.measures import LN2, report
from qib.problems import Problem
from qib.solver import CLASSICAL, QUANTUM, MemoryKind, SolverConfig, h_operator, quantum_step, solve
from qib.states import (
    QuantumChannel, apply_conditional, channel_from_state, channel_to_conditional, conditional_to_channel,
    state_from_channel, validate_state,
)

from conftest import random_state

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2 ** 32 - 1)


def trace_norm(a):
    return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))


def random_channel(rng, din, dout, n_kraus):
    """Kraus operators cut from a random isometry din -> dout * n_kraus."""
    n_kraus = max(n_kraus, -(-din // dout))
    g = rng.normal(size=(dout * n_kraus, din)) + 1j * rng.normal(size=(dout * n_kraus, din))
    q, _ = np.linalg.qr(g)
    return QuantumChannel(tuple(q[k * dout:(k + 1) * dout] for k in range(n_kraus)), din, dout)


def random_problem(rng, dx, dy):
    return Problem(validate_state(random_state(rng, dx)), random_channel(rng, dx, dy, int(rng.integers(1, 4))))


@SETTINGS
@given(seeds, st.integers(2, 4), st.integers(2, 3), st.integers(1, 3), st.floats(0.05, 5.0))
def test_update_keeps_marginal_and_positivity(seed, dx, dy, d_m, alpha):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, dx, dy)
    s = random_state(rng, d_m * dx)
    for _ in range(3):
        s = quantum_step(s, prob.rho_x, prob.relevance, SolverConfig(alpha=alpha)).mat
        assert trace_norm(partial_trace(s, (d_m, dx), 1) - prob.rho_r) <= 1e-8
        assert np.min(np.linalg.eigvalsh(s)) >= -1e-9


@SETTINGS
@given(seeds, st.integers(2, 4), st.integers(2, 3), st.integers(1, 3))
def test_data_processing_and_energy_identity(seed, dx, dy, d_m):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, dx, dy)
    s = random_state(rng, d_m * dx, rank=int(rng.integers(1, d_m * dx + 1)))
    r = report(s, prob.relevance, 1.0)
    assert r.i_pred <= r.i_mem + 1e-7
    h = h_operator(s, prob.relevance)
    assert abs(np.real(np.trace(s @ h)) / LN2 + r.i_pred) <= 1e-7


@SETTINGS
@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_channel_state_round_trips(seed, din, dout):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, din, dout, int(rng.integers(1, 4)))
    cop = channel_to_conditional(ch)
    back = conditional_to_channel(cop)
    rho = random_state(rng, din)
    assert trace_norm(back(rho) - ch(rho)) <= 1e-8
    assert trace_norm(apply_conditional(cop, rho) - ch(rho)) <= 1e-8
    joint = state_from_channel(validate_state(rho), cop)
    again = channel_from_state(joint, validate_state(rho))
    assert np.max(np.abs(again.mat - cop.mat)) <= 1e-8 * max(1.0, np.linalg.norm(cop.mat))


@settings(max_examples=8, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(2, 3), st.sampled_from([QUANTUM, CLASSICAL]))
def test_large_alpha_is_product(seed, dx, dy, kind):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, dx, dy)
    sol = solve(prob, MemoryKind(kind, 2), SolverConfig(alpha=10.0, seed=seed % 1000))
    assert sol.report.i_mem + sol.report.i_pred <= 1e-6


@settings(max_examples=8, deadline=None)
@given(seeds, st.floats(0.05, 1.0))
def test_solve_invariants_random(seed, alpha):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, 3, 2)
    sol = solve(prob, MemoryKind(QUANTUM, 2), SolverConfig(alpha=alpha, seed=seed % 1000, max_iters=3000))
    assert sol.max_marginal_error <= 1e-8
    assert sol.min_eigenvalue >= -1e-9
    assert sol.max_energy_residual <= 1e-7
    assert sol.report.i_pred <= sol.report.i_mem + 1e-7
    if sol.converged:
        assert sol.fixed_point_residual <= 1e-7
