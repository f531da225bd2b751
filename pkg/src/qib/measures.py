"""Entropic and correlation functionals.

Entropies and mutual informations are returned in bits. Internally the
solver works in nats; ``LN2`` converts.
"""
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from qib.errors import DimensionError
from qib.linalg import hermitize, matrix_function, partial_trace
from qib.states import DensityMatrix, QuantumChannel, as_state, purify

LN2 = np.log(2.0)
EIG_CLIP = 1e-14

_SY = np.array([[0, -1j], [1j, 0]])
_SYSY = np.kron(_SY, _SY)


def _mat(rho):
    return np.asarray(rho.mat if isinstance(rho, DensityMatrix) else rho)


def entropy_of_spectrum(w):
    w = np.asarray(w, dtype=float)
    w = w[w > EIG_CLIP]
    return float(-np.sum(w * np.log2(w)))


def entropy_bits(rho) -> float:
    """Von Neumann entropy in bits, with 0 log 0 = 0."""
    return entropy_of_spectrum(np.linalg.eigvalsh(hermitize(_mat(rho))))


def purity(rho) -> float:
    m = _mat(rho)
    return float(np.real(np.trace(m @ m)))


def mutual_information_bits(rho_ab, cut=None) -> float:
    """``S(A) + S(B) - S(AB)`` for the bipartition ``cut = (d_A, d_B)``.

    With a DensityMatrix of exactly two factors the cut defaults to its dims.
    """
    if cut is None:
        if not isinstance(rho_ab, DensityMatrix) or len(rho_ab.dims) != 2:
            raise DimensionError("mutual information needs a bipartition")
        cut = rho_ab.dims
    m = _mat(rho_ab)
    da, db = cut
    if da * db != m.shape[0]:
        raise DimensionError(f"cut {cut} does not match dimension {m.shape[0]}")
    sa = entropy_bits(partial_trace(m, cut, 0))
    sb = entropy_bits(partial_trace(m, cut, 1))
    return sa + sb - entropy_bits(m)


def conditional_entropy_bits(rho_ab, cut, given: int) -> float:
    """``S[other | given] = S(AB) - S(given)``."""
    m = _mat(rho_ab)
    return entropy_bits(m) - entropy_bits(partial_trace(m, cut, given))


def concurrence(rho) -> float:
    """Two-qubit concurrence from the spin-flipped spectrum."""
    m = _mat(rho)
    if m.shape != (4, 4):
        raise DimensionError(f"concurrence is defined for two qubits, got dimension {m.shape[0]}")
    m = hermitize(m)
    s = matrix_function(m, "sqrt")
    tilde = _SYSY @ m.conj() @ _SYSY
    w = np.linalg.eigvalsh(hermitize(s @ tilde @ s))
    lam = np.sort(np.sqrt(np.clip(w, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


# --- discord -------------------------------------------------------------

def _measured_entropy(blocks, basis):
    """sum_m p(m) S(rho_{A|m}) in bits for a projective measurement on M.

    ``blocks[a, b]`` is the (d_A x d_A) block <a|rho|b> of rho_{MA}; ``basis``
    has the measurement vectors as columns.
    """
    # rho_{A|m} p(m) = sum_ab conj(u_a) u_b <a|rho|b>
    cond = np.einsum("am,bm,abij->mij", basis.conj(), basis, blocks)
    total = 0.0
    for c in cond:
        w = np.linalg.eigvalsh(hermitize(c))
        w = w[w > EIG_CLIP]
        total -= float(np.sum(w * np.log2(w / max(np.sum(w), EIG_CLIP)))) if w.size else 0.0
    return total


def _bloch_basis(theta, phi):
    u0 = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    u1 = np.array([-np.exp(-1j * phi) * np.sin(theta / 2), np.cos(theta / 2)])
    return np.stack([u0, u1], axis=1)


def _givens(d, i, j, theta, phi):
    g = np.eye(d, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    g[i, i] = c
    g[j, j] = c
    g[i, j] = -np.exp(1j * phi) * s
    g[j, i] = np.exp(-1j * phi) * s
    return g


def discord(rho_ma, dims, measured: int = 0, restarts: int = 50, refine_iters: int = 200, seed: int = 0) -> float:
    """Quantum discord ``D[A|M]`` in bits, measuring factor ``measured``.

    The minimisation over rank-one projective measurements is a local search,
    so the result is an upper bound on the true discord (tight for the two
    qubit cases used here, where a dense Bloch grid seeds the search).
    """
    m = _mat(rho_ma)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or dims[0] * dims[1] != m.shape[0]:
        raise DimensionError(f"discord needs a bipartite state, dims {dims} vs dimension {m.shape[0]}")
    if measured == 1:
        # move the measured factor first
        d0, d1 = dims
        m = m.reshape(d0, d1, d0, d1).transpose(1, 0, 3, 2).reshape(d0 * d1, d0 * d1)
        dims = (d1, d0)
    dm, da = dims
    base = entropy_bits(partial_trace(m, dims, 0)) - entropy_bits(m)
    blocks = m.reshape(dm, da, dm, da).transpose(0, 2, 1, 3)

    if dm == 1:
        return 0.0
    if dm == 2:
        best = _discord_qubit(blocks, refine_iters)
    else:
        best = _discord_general(blocks, dm, restarts, refine_iters, np.random.default_rng(seed))
    return max(0.0, base + best)


def _discord_qubit(blocks, refine_iters, grid=64):
    thetas = np.linspace(0.0, np.pi, grid)
    phis = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    best, bt, bp = np.inf, 0.0, 0.0
    for t in thetas:
        for p in phis:
            v = _measured_entropy(blocks, _bloch_basis(t, p))
            if v < best:
                best, bt, bp = v, t, p
    step = np.pi / grid
    for _ in range(refine_iters):
        improved = False
        for dt, dp in ((step, 0), (-step, 0), (0, step), (0, -step)):
            v = _measured_entropy(blocks, _bloch_basis(bt + dt, bp + dp))
            if v < best - 1e-15:
                best, bt, bp = v, bt + dt, bp + dp
                improved = True
        if not improved:
            step /= 2
            if step < 1e-9:
                break
    return best


def _discord_general(blocks, dm, restarts, refine_iters, rng):
    best = _measured_entropy(blocks, np.eye(dm))
    for _ in range(restarts):
        z = rng.normal(size=(dm, dm)) + 1j * rng.normal(size=(dm, dm))
        q, r = np.linalg.qr(z)
        u = q * (np.diag(r) / np.abs(np.diag(r)))
        val = _measured_entropy(blocks, u)
        step = 0.3
        for _ in range(refine_iters):
            improved = False
            for i in range(dm):
                for j in range(i + 1, dm):
                    for th, ph in ((step, 0.0), (-step, 0.0), (step, np.pi / 2), (-step, np.pi / 2)):
                        cand = u @ _givens(dm, i, j, th, ph)
                        v = _measured_entropy(blocks, cand)
                        if v < val - 1e-15:
                            u, val, improved = cand, v, True
            if not improved:
                step /= 2
                if step < 1e-7:
                    break
        best = min(best, val)
    return best


# --- report --------------------------------------------------------------

@dataclass
class InfoReport:
    i_mem: float
    i_pred: float
    s_m: float
    s_r: float
    s_mr: float
    s_cond_r_given_m: float
    purity: float
    lagrangian: float
    concurrence_mr: Optional[float] = None
    concurrence_my: Optional[float] = None
    discord_r_given_m: Optional[float] = None
    discord_y_given_m: Optional[float] = None

    def as_dict(self):
        return asdict(self)


def relevance_output(sigma_mr, d_m: int, relevance: QuantumChannel):
    """``sigma_MY = (I_M x R)(sigma_MR)``."""
    return relevance.apply_right(_mat(sigma_mr), d_m)


def report(sigma_mr, relevance: QuantumChannel, alpha: float, with_correlations=False,
           correlation_reduce=None, seed=0) -> InfoReport:
    """Memory, predictive power and diagnostics of an M x R state.

    ``correlation_reduce``, when given, maps the M x R matrix to an
    M x R_1 two-qubit matrix before concurrence/discord are evaluated
    (used to drop an irrelevant reference factor).
    """
    m = _mat(sigma_mr)
    d_r = relevance.din
    if m.shape[0] % d_r:
        raise DimensionError(f"state dimension {m.shape[0]} is not a multiple of the relevance input {d_r}")
    d_m = m.shape[0] // d_r
    cut = (d_m, d_r)
    s_m = entropy_bits(partial_trace(m, cut, 0))
    s_r = entropy_bits(partial_trace(m, cut, 1))
    s_mr = entropy_bits(m)
    my = relevance_output(m, d_m, relevance)
    i_pred = mutual_information_bits(my, (d_m, relevance.dout))
    i_mem = s_m + s_r - s_mr
    rep = InfoReport(
        i_mem=i_mem, i_pred=i_pred, s_m=s_m, s_r=s_r, s_mr=s_mr,
        s_cond_r_given_m=s_mr - s_m, purity=purity(m), lagrangian=i_pred - alpha * i_mem,
    )
    if with_correlations:
        mr = correlation_reduce(m) if correlation_reduce is not None else m
        if mr.shape == (4, 4) and d_m == 2:
            rep.concurrence_mr = concurrence(mr)
            rep.discord_r_given_m = discord(mr, (2, 2), 0, seed=seed)
        if d_m == 2 and relevance.dout == 2:
            rep.concurrence_my = concurrence(my)
            rep.discord_y_given_m = discord(my, (2, 2), 0, seed=seed)
    return rep


def bounds(problem) -> dict:
    """Information-plane bounds: quantum memory 2 S[X], classical memory
    S[X], predictive power of the purification."""
    s_x = entropy_bits(problem.rho_x)
    psi = purify(problem.rho_x).density()
    pred = mutual_information_bits(relevance_output(psi.mat, problem.d_x, problem.relevance),
                                   (problem.d_x, problem.relevance.dout))
    return {"mem_max_quantum": 2 * s_x, "mem_max_classical": s_x, "pred_max": pred}
