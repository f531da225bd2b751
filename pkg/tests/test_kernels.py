"""The compiled kernels must agree with the numpy fallback."""
import numpy as np
import pytest

from qib import _kernels_py as py
from qib._backend import NAME

from conftest import random_hermitian, random_state

cy = pytest.importorskip("qib._kernels")


def test_backend_selected():
    assert NAME in ("cython", "python")


@pytest.mark.parametrize("d", [1, 2, 5, 16])
def test_eigh_agrees(rng, d):
    h = random_hermitian(rng, d)
    w1, v1 = cy.eigh(h)
    w2, _ = py.eigh(h)
    assert np.allclose(w1, w2, atol=1e-12)
    assert np.allclose((v1 * w1) @ v1.conj().T, h, atol=1e-12)


def test_spectral_functions_agree(rng):
    s = random_state(rng, 8)
    assert np.allclose(cy.herm_log_floor(s), py.herm_log_floor(s), atol=1e-10)
    h = random_hermitian(rng, 8)
    e1, s1 = cy.herm_exp_normalized(h)
    e2, s2 = py.herm_exp_normalized(h)
    assert np.isclose(s1, s2) and np.allclose(e1, e2, atol=1e-12)
    assert abs(cy.entropy_nats(s) - py.entropy_nats(s)) < 1e-12
    w, v = py.eigh(h)
    fw = rng.normal(size=8)
    assert np.allclose(cy.spectral(w, v, fw), py.spectral(w, v, fw), atol=1e-12)


def test_log_floor_on_singular(rng):
    p = np.diag([1.0, 0.0]).astype(complex)
    out = cy.herm_log_floor(p)
    assert np.isclose(out[1, 1].real, np.log(1e-300))


def test_partial_traces_agree(rng):
    m = random_state(rng, 12)
    assert np.allclose(cy.ptrace_first(m, 3, 4), py.ptrace_first(m, 3, 4), atol=1e-14)
    assert np.allclose(cy.ptrace_second(m, 3, 4), py.ptrace_second(m, 3, 4), atol=1e-14)
    ro = m.copy()
    ro.flags.writeable = False
    assert np.allclose(cy.ptrace_second(ro, 3, 4), py.ptrace_second(m, 3, 4))


def test_hestenes_agree(rng):
    g = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
    for k in (cy, py):
        gv, v = k.hestenes(g)
        assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
        assert np.allclose(g @ v, gv, atol=1e-12)
        gram = gv.conj().T @ gv
        assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-10
    s1 = np.sort(np.linalg.norm(cy.hestenes(g)[0], axis=0))
    s2 = np.sort(np.linalg.norm(py.hestenes(g)[0], axis=0))
    assert np.allclose(s1, s2, atol=1e-12)
    assert np.allclose(s1, np.sort(np.linalg.svd(g, compute_uv=False)), atol=1e-12)
