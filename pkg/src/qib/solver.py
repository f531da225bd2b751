"""Self-consistent iterative solver for optimal encodings.

A quantum-memory iterate is a state ``sigma`` on M x R (M first). One update
maps it to

    rho_R^{1/2} Z^{-1/2} exp(log sigma_M - H / alpha) Z^{-1/2} rho_R^{1/2},
    H = R^dag(log sigma_M + log sigma_Y - log sigma_MY),
    Z = tr_M exp(log sigma_M - H / alpha),

which satisfies ``tr_M sigma = rho_R`` by construction. A classical-memory
iterate is an ensemble ``W_m = p_m sigma_{R|m}`` and follows the same map
restricted to block-diagonal states.

All logarithms are natural; information quantities are converted to bits
only when reported.
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from qib._backend import kernels
from qib.errors import DimensionError, NumericalError, QIBError
from qib.linalg import graded_polar, hermitize, matrix_function
from qib.measures import LN2, InfoReport, report
from qib.states import ConditionalOperator, DensityMatrix, QuantumChannel, channel_from_state

QUANTUM = "quantum"
CLASSICAL = "classical"

# relative size below which a memory direction or a branch weight is dropped
PRUNE = 1e-12
# off-diagonal couplings smaller than this (relative) do not join R blocks
BLOCK_TOL = 1e-14
# damping of the fixed-point map: the step is halved (down to MIN_DAMPING)
# after two consecutive updates whose directions have cosine < -OSCILLATION_COS
OSCILLATION_COS = 0.5
MIN_DAMPING = 1.0 / 64
# below this ratio of extreme eigenvalues Z is normalised through graded_polar
Z_COND = 1e-7
# polar steps of the memory alignment per solver update
ALIGN_STEPS = 4


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    tol_L: float = 1e-10
    tol_state: float = 1e-9
    max_iters: int = 5000
    support_cutoff: float = 1e-12
    perturb_scale: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise QIBError(f"alpha must be > 0, got {self.alpha}")
        if not self.tol_L > 0:
            raise QIBError(f"tol_L must be > 0, got {self.tol_L}")
        if self.max_iters < 1:
            raise QIBError("max_iters must be >= 1")


@dataclass(frozen=True)
class MemoryKind:
    tag: str
    d_m: int

    def __post_init__(self):
        if self.tag not in (QUANTUM, CLASSICAL):
            raise QIBError(f"memory kind must be 'quantum' or 'classical', got {self.tag!r}")
        if self.d_m < 1:
            raise QIBError("memory dimension must be >= 1")

    def with_dim(self, d_m):
        return replace(self, d_m=d_m)


@dataclass
class EncodingSolution:
    kind: MemoryKind
    sigma_mr: DensityMatrix
    report: InfoReport
    iterations: int
    converged: bool
    final_delta_L: float
    h_expectation: float
    # classical memory only: branch weights and conditional states
    weights: Optional[np.ndarray] = None
    conditionals: Optional[np.ndarray] = None
    # worst values seen over all iterations
    max_energy_residual: float = 0.0
    max_marginal_error: float = 0.0
    min_eigenvalue: float = 0.0
    fixed_point_residual: float = float("nan")
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def d_m(self):
        return self.sigma_mr.dims[0]

    @property
    def lagrangian(self):
        return self.report.lagrangian


# --------------------------------------------------------------------------
# helpers


def _trace_norm(a):
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(a)))))


def align_memory(target, moved, d_m, d_r, u=None, iters=200):
    """Rotate ``moved`` by the unitary on M that brings it closest to ``target``.

    The objective is invariant under ``sigma -> (U x I) sigma (U x I)^dag``,
    so the update can drift along that orbit without changing anything
    physical. Maximises ``f(U) = Re tr[target (U x I) moved (U x I)^dag]`` by
    the fixed-point iteration ``U <- polar(tr_R[target (U x I) moved])``.
    Returns the rotated state and ``U`` (use it to warm-start the next call).
    """
    if d_m == 1:
        return moved, np.eye(1, dtype=complex)
    t = np.asarray(target).reshape(d_m, d_r, d_m, d_r)
    m = np.asarray(moved).reshape(d_m, d_r, d_m, d_r)
    # tr_R[target (U x I) moved] = sum_{c,m} U[c, m] k[a, c, m, b]
    k = np.einsum("arcs,msbr->acmb", t, m, optimize=True)
    eye = np.eye(d_m, dtype=complex)

    def grad(v):
        return np.einsum("cm,acmb->ab", v, k)

    u = eye if u is None else u
    for _ in range(iters):
        x, _, yh = np.linalg.svd(grad(u))
        new = x @ yh
        done = np.max(np.abs(new - u)) < 1e-13
        u = new
        if done:
            break
    # keep the identity when it is at least as good (f(U) = Re <U, grad(U)>)
    if np.vdot(u, grad(u)).real <= np.vdot(eye, grad(eye)).real:
        return moved, eye
    big = np.kron(u, np.eye(d_r))
    return hermitize(big @ moved @ big.conj().T), u


def _sandwich(x, e, d_m):
    """``(I_{d_m} x x) e (I_{d_m} x x)`` without forming the Kronecker products."""
    n = x.shape[0]
    dim = e.shape[0]
    e = (e.reshape(dim * d_m, n) @ x).reshape(dim, dim)
    return np.matmul(x, e.reshape(d_m, n, dim)).reshape(dim, dim)


def _log_floor(h):
    return kernels.herm_log_floor(hermitize(h))


def _entropy_from_eigs(w):
    w = w[w > 1e-14]
    return float(-np.sum(w * np.log(w)))


def _components(coupling):
    """Connected components of a symmetric boolean adjacency matrix."""
    n = coupling.shape[0]
    reach = coupling | np.eye(n, dtype=bool)
    while True:
        nxt = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    groups, seen = [], np.zeros(n, dtype=bool)
    for i in range(n):
        if not seen[i]:
            idx = np.flatnonzero(reach[i])
            seen[idx] = True
            groups.append(idx)
    return groups


def _r_blocks(k, d_m, d_r):
    """Groups of R indices that the operator ``k`` on M x R does not couple."""
    t = np.abs(k.reshape(d_m, d_r, d_m, d_r))
    scale = t.max() if t.size else 0.0
    return _components(t.max(axis=(0, 2)) > BLOCK_TOL * scale)


def _graded(log_w, cols):
    try:
        return graded_polar(log_w, cols)
    except ValueError as exc:
        raise NumericalError(f"normalisation operator Z is singular: {exc}") from None


def _normalized_exp(k, d_m, d_r):
    """``Z^{-1/2} exp(k) Z^{-1/2}`` with ``Z = tr_M exp(k)``.

    Blocks of R that ``k`` does not couple are normalised separately, which
    is exact and keeps per-block shifts from under/overflowing. When Z is
    too ill-conditioned for a direct inverse square root the result is
    assembled from the graded polar factor instead.
    """
    out = np.zeros_like(k, dtype=complex)
    t_out = out.reshape(d_m, d_r, d_m, d_r)
    t_k = k.reshape(d_m, d_r, d_m, d_r)
    for idx in _r_blocks(k, d_m, d_r):
        nb = len(idx)
        kb = t_k[:, idx][:, :, :, idx].reshape(d_m * nb, d_m * nb)
        lam, vec = kernels.eigh(hermitize(kb))
        e = kernels.spectral(lam, vec, np.exp(lam - lam[-1]))
        z = kernels.ptrace_first(e, d_m, nb)
        w, v = kernels.eigh(hermitize(z))
        if w[0] > Z_COND * w[-1]:
            zis = kernels.spectral(w, v, 1.0 / np.sqrt(w))
            fb = _sandwich(zis, e, d_m)
        else:
            # columns x_(j,m) = <m| v_j, weight exp(lam_j)
            cols = vec.reshape(d_m, nb, -1).transpose(1, 2, 0).reshape(nb, -1)
            u = _graded(np.repeat(lam, d_m), cols)
            wmat = u.reshape(nb, -1, d_m).transpose(2, 0, 1).reshape(d_m * nb, -1)
            fb = wmat @ wmat.conj().T
        t_out[np.ix_(range(d_m), idx, range(d_m), idx)] = fb.reshape(d_m, nb, d_m, nb)
    return out


class _Context:
    """Problem data shared by every iteration."""

    def __init__(self, rho_r, relevance: QuantumChannel, alpha: float):
        self.rho_r = np.asarray(rho_r, dtype=complex)
        self.d_r = self.rho_r.shape[0]
        if relevance.din != self.d_r:
            raise DimensionError(f"relevance takes dimension {relevance.din}, rho_R has {self.d_r}")
        self.relevance = relevance
        self.d_y = relevance.dout
        self.alpha = float(alpha)
        self.sqrt_rho = matrix_function(self.rho_r, "sqrt")
        self.s_r = _entropy_from_eigs(np.linalg.eigvalsh(self.rho_r))


# --------------------------------------------------------------------------
# quantum memory


@dataclass
class _Diag:
    i_mem: float
    i_pred: float
    lagrangian: float
    energy_residual: float
    h_expectation: float
    marginal_error: float
    min_eig: float


def _support_compress(sigma, d_m, d_r):
    """Restrict M to the support of sigma_M. Returns (compressed sigma, V)."""
    s_m = kernels.ptrace_second(sigma, d_m, d_r)
    w, v = kernels.eigh(hermitize(s_m))
    keep = w > PRUNE * max(w[-1], 0.0)
    if keep.all():
        return sigma, None
    vs = v[:, keep]
    big = np.kron(vs, np.eye(d_r))
    return big.conj().T @ sigma @ big, vs


def _h_pieces(sigma, ctx: _Context, d_m):
    """Logs and H for an M x R state whose M marginal has full rank."""
    d_r, d_y = ctx.d_r, ctx.d_y
    s_m = hermitize(kernels.ptrace_second(sigma, d_m, d_r))
    s_my = hermitize(ctx.relevance.apply_right(sigma, d_m))
    s_y = hermitize(kernels.ptrace_first(s_my, d_m, d_y))
    wm, vm = kernels.eigh(s_m)
    wy, vy = kernels.eigh(s_y)
    wmy, vmy = kernels.eigh(s_my)
    log_m = kernels.spectral(wm, vm, np.log(np.maximum(wm, kernels.LOG_FLOOR)))
    log_y = kernels.spectral(wy, vy, np.log(np.maximum(wy, kernels.LOG_FLOOR)))
    log_my = kernels.spectral(wmy, vmy, np.log(np.maximum(wmy, kernels.LOG_FLOOR)))
    inner = np.kron(log_m, np.eye(d_y)) + np.kron(np.eye(d_m), log_y) - log_my
    h = hermitize(ctx.relevance.dual_right(inner, d_m))
    i_pred = _entropy_from_eigs(wm) + _entropy_from_eigs(wy) - _entropy_from_eigs(wmy)
    return h, log_m, i_pred, _entropy_from_eigs(wm)


def h_operator(sigma_mr, relevance: QuantumChannel):
    """``H_MR = R^dag(log sigma_M + log sigma_Y - log sigma_MY)`` (natural log).

    Computed on the support of sigma_M and embedded back with zeros on its
    kernel. Logs of sigma_Y and sigma_MY clamp zero eigenvalues to a tiny
    floor so that impossible (memory, output) pairs are penalised.
    """
    m = np.asarray(sigma_mr.mat if isinstance(sigma_mr, DensityMatrix) else sigma_mr, dtype=complex)
    d_r = relevance.din
    if m.shape[0] % d_r:
        raise DimensionError(f"state dimension {m.shape[0]} incompatible with relevance input {d_r}")
    d_m = m.shape[0] // d_r
    ctx = _Context(np.eye(d_r) / d_r, relevance, 1.0)
    sc, vs = _support_compress(m, d_m, d_r)
    r = d_m if vs is None else vs.shape[1]
    h, _, _, _ = _h_pieces(sc, ctx, r)
    if vs is None:
        return h
    big = np.kron(vs, np.eye(d_r))
    return big @ h @ big.conj().T


def _quantum_update(sigma, ctx: _Context, d_m):
    """One update; also returns diagnostics of the *input* state."""
    d_r = ctx.d_r
    sc, vs = _support_compress(sigma, d_m, d_r)
    r = d_m if vs is None else vs.shape[1]
    h, log_m, i_pred, s_m = _h_pieces(sc, ctx, r)
    # diagnostics of the input
    w_full = np.linalg.eigvalsh(hermitize(sigma))
    s_mr = _entropy_from_eigs(w_full)
    i_mem = s_m + ctx.s_r - s_mr
    h_exp = float(np.real(np.vdot(sc.conj().T, h)))
    marg = _trace_norm(kernels.ptrace_first(sigma, d_m, d_r) - ctx.rho_r)
    diag = _Diag(
        i_mem=i_mem / LN2, i_pred=i_pred / LN2, lagrangian=(i_pred - ctx.alpha * i_mem) / LN2,
        energy_residual=abs(h_exp + i_pred) / LN2, h_expectation=h_exp / LN2,
        marginal_error=marg, min_eig=float(w_full[0]),
    )
    k = np.kron(log_m, np.eye(d_r)) - h / ctx.alpha
    f = _normalized_exp(hermitize(k), r, d_r)
    if vs is not None:
        big = np.kron(vs, np.eye(d_r))
        f = big @ f @ big.conj().T
    new = hermitize(_sandwich(ctx.sqrt_rho, f, d_m))
    return new, diag


def quantum_step(sigma_k, rho_r, relevance: QuantumChannel, cfg: SolverConfig) -> DensityMatrix:
    """Single quantum-memory update of an M x R state."""
    m = np.asarray(sigma_k.mat if isinstance(sigma_k, DensityMatrix) else sigma_k, dtype=complex)
    rho = np.asarray(rho_r.mat if isinstance(rho_r, DensityMatrix) else rho_r, dtype=complex)
    ctx = _Context(rho, relevance, cfg.alpha)
    d_m = m.shape[0] // ctx.d_r
    new, _ = _quantum_update(m, ctx, d_m)
    return DensityMatrix(new, (d_m, ctx.d_r))


# --------------------------------------------------------------------------
# classical memory


def _classical_update(branches, ctx: _Context):
    """One ensemble update. ``branches`` has shape (d_m, d_r, d_r), W_m = p_m sigma_{R|m}."""
    d_r, d_y, alpha = ctx.d_r, ctx.d_y, ctx.alpha
    p = np.real(np.einsum("mii->m", branches))
    keep = p > PRUNE * p.max()
    branches, p = branches[keep], p[keep]
    d_m = len(p)
    outs = np.stack([ctx.relevance(b) for b in branches])  # p_m sigma_{Y|m}
    s_y = hermitize(outs.sum(axis=0))
    log_y = _log_floor(s_y)
    wy = np.linalg.eigvalsh(s_y)
    s_my_total = 0.0
    s_mr_total = 0.0
    ks = np.empty((d_m, d_r, d_r), dtype=complex)
    h_exp = 0.0
    for m in range(d_m):
        cond_y = hermitize(outs[m] / p[m])
        wcy = np.linalg.eigvalsh(cond_y)
        s_my_total += p[m] * _entropy_from_eigs(wcy)
        s_mr_total += p[m] * _entropy_from_eigs(np.linalg.eigvalsh(hermitize(branches[m] / p[m])))
        g = ctx.relevance.dual_right(_log_floor(cond_y) - log_y, 1)
        # H block for branch m is -g; its expectation contributes to <H>
        h_exp -= float(np.real(np.vdot(branches[m].conj().T, g)))
        ks[m] = np.log(p[m]) * np.eye(d_r) + g / alpha
    s_m = _entropy_from_eigs(p)
    i_pred = _entropy_from_eigs(wy) - s_my_total
    i_mem = ctx.s_r - s_mr_total
    marg = _trace_norm(branches.sum(axis=0) - ctx.rho_r)
    min_eig = min(float(np.linalg.eigvalsh(hermitize(b))[0]) for b in branches)
    diag = _Diag(
        i_mem=i_mem / LN2, i_pred=i_pred / LN2, lagrangian=(i_pred - alpha * i_mem) / LN2,
        energy_residual=abs(h_exp + i_pred) / LN2, h_expectation=h_exp / LN2,
        marginal_error=marg, min_eig=min_eig,
    )
    f = _classical_normalized_exp(ks)
    new = np.stack([hermitize(ctx.sqrt_rho @ f[m] @ ctx.sqrt_rho) for m in range(d_m)])
    return new, diag, s_m


def _classical_normalized_exp(ks):
    """Branchwise ``Z^{-1/2} exp(K_m) Z^{-1/2}``, ``Z = sum_m exp(K_m)``."""
    d_m, d_r, _ = ks.shape
    # R blocks: union of couplings over all branches
    t = np.abs(ks).max(axis=0)
    out = np.zeros_like(ks)
    for idx in _components(t > BLOCK_TOL * t.max()):
        eigs = [kernels.eigh(hermitize(ks[m][np.ix_(idx, idx)])) for m in range(d_m)]
        shift = max(w[-1] for w, _ in eigs)
        es = [kernels.spectral(w, v, np.exp(w - shift)) for w, v in eigs]
        z = hermitize(sum(es))
        w, v = kernels.eigh(z)
        if w[0] > Z_COND * w[-1]:
            zis = kernels.spectral(w, v, 1.0 / np.sqrt(w))
            for m in range(d_m):
                out[m][np.ix_(idx, idx)] = zis @ es[m] @ zis
        else:
            nb = len(idx)
            u = _graded(np.concatenate([lam for lam, _ in eigs]), np.hstack([vec for _, vec in eigs]))
            for m in range(d_m):
                um = u[:, m * nb:(m + 1) * nb]
                out[m][np.ix_(idx, idx)] = um @ um.conj().T
    return out


def classical_step(pm_sigma_r, rho_r, relevance: QuantumChannel, cfg: SolverConfig):
    """Single classical-memory update.

    ``pm_sigma_r`` is a list of ``(p_m, sigma_{R|m})`` pairs; the result has
    the same shape with updated weights and (normalised) conditionals.
    """
    if not pm_sigma_r:
        raise QIBError("classical step needs at least one branch")
    rho = np.asarray(rho_r.mat if isinstance(rho_r, DensityMatrix) else rho_r, dtype=complex)
    ctx = _Context(rho, relevance, cfg.alpha)
    branches = np.stack([w * np.asarray(s, dtype=complex) for w, s in pm_sigma_r])
    new, _, _ = _classical_update(branches, ctx)
    out = []
    for b in new:
        pm = float(np.real(np.trace(b)))
        out.append((pm, b / pm))
    return out


def ensemble_to_state(branches):
    """Block-diagonal M x R state from ensemble branches W_m."""
    d_m, d_r, _ = branches.shape
    s = np.zeros((d_m * d_r, d_m * d_r), dtype=complex)
    for m in range(d_m):
        s[m * d_r:(m + 1) * d_r, m * d_r:(m + 1) * d_r] = branches[m]
    return s


# --------------------------------------------------------------------------
# initial states


def _random_hermitian(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    g = hermitize(g)
    return g / np.linalg.norm(g, 2)


def _clip_normalize(m):
    w, v = np.linalg.eigh(hermitize(m))
    w = np.clip(w, 0.0, None)
    out = hermitize((v * w) @ v.conj().T)
    return out / np.real(np.trace(out))


def make_initial(kind: MemoryKind, rho_r, cfg: SolverConfig, warm_start: Optional[EncodingSolution] = None):
    """Starting point for the iteration.

    Quantum kind returns an M x R matrix; classical kind returns branches
    of shape (d_m, d_r, d_r). A cold start is ``I/d_m x rho_R``; a warm start
    reuses the previous solution (splitting its heaviest memory direction
    when the dimension grows). Either way, random Hermitian noise of size
    ``perturb_scale`` is added and the result clipped and renormalised.
    """
    rho = np.asarray(rho_r.mat if isinstance(rho_r, DensityMatrix) else rho_r, dtype=complex)
    d_r = rho.shape[0]
    d_m = kind.d_m
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.perturb_scale
    if kind.tag == CLASSICAL:
        if warm_start is not None and warm_start.conditionals is not None:
            branches = warm_start.weights[:, None, None] * warm_start.conditionals
            branches = _grow_branches(branches, d_m, rng)
        else:
            branches = np.stack([rho / d_m for _ in range(d_m)])
        if eps > 0:
            out = []
            for b in branches:
                pm = np.real(np.trace(b)) * (1.0 + eps * rng.uniform(-1, 1))
                cond = _clip_normalize(b / np.real(np.trace(b)) + eps * _random_hermitian(rng, d_r))
                out.append(pm * cond)
            branches = np.stack(out)
            branches /= np.real(np.einsum("mii->", branches))
        return branches
    if warm_start is not None:
        sigma = _grow_state(np.asarray(warm_start.sigma_mr.mat), warm_start.d_m, d_m, d_r, rng)
    else:
        sigma = np.kron(np.eye(d_m) / d_m, rho)
    if eps > 0:
        sigma = _clip_normalize(sigma + eps * _random_hermitian(rng, d_m * d_r))
    return sigma


def _grow_branches(branches, d_m, rng):
    branches = list(branches)
    while len(branches) < d_m:
        j = int(np.argmax([np.real(np.trace(b)) for b in branches]))
        half = branches[j] / 2.0
        branches[j] = half
        branches.append(half.copy())
    while len(branches) > d_m:
        # merge the two lightest
        order = np.argsort([np.real(np.trace(b)) for b in branches])
        a, b = order[0], order[1]
        branches[b] = branches[b] + branches[a]
        branches.pop(a)
    return np.stack(branches)


def _grow_state(sigma, d_old, d_new, d_r, rng):
    if d_new == d_old:
        return sigma
    if d_new < d_old:
        raise QIBError("warm start has a larger memory than requested")
    # eigenbasis of sigma_M; copy the heaviest direction's R-conditional into
    # each new level with half its weight
    s_m = kernels.ptrace_second(sigma, d_old, d_r)
    w, v = np.linalg.eigh(hermitize(s_m))
    big = np.kron(v, np.eye(d_r))
    rot = big.conj().T @ sigma @ big  # M now in eigenbasis, ascending
    out = np.zeros((d_new * d_r, d_new * d_r), dtype=complex)
    out[:d_old * d_r, :d_old * d_r] = rot
    t = out.reshape(d_new, d_r, d_new, d_r)
    for new in range(d_old, d_new):
        j = d_old - 1
        t[new, :, new, :] = t[j, :, j, :] / 2.0
        t[j, :, j, :] = t[j, :, j, :] / 2.0
    return hermitize(out)


# --------------------------------------------------------------------------
# driver


def solve(problem, kind: MemoryKind, cfg: SolverConfig, warm_start: Optional[EncodingSolution] = None,
          initial=None, with_correlations=False, correlation_reduce=None, keep_history=False) -> EncodingSolution:
    """Iterate to a fixed point at ``cfg.alpha``.

    Halts once both ``|L_{k+1} - L_k| <= tol_L`` and the trace-norm change
    under one undamped update is ``<= tol_state``; otherwise stops after
    ``max_iters`` and returns the best iterate seen with ``converged=False``.
    When successive updates point in opposite directions the step is
    halved, ``sigma <- (1 - eta) sigma + eta T(sigma)``; the mixture keeps
    the marginal constraint and has the same fixed points.

    Quantum updates are compared modulo a unitary on M: each update is
    rotated back onto the current iterate before measuring the change, so a
    state that the map only rotates counts as converged. The reported
    ``fixed_point_residual`` uses the same alignment.
    """
    ctx = _Context(problem.rho_r, problem.relevance, cfg.alpha)
    d_r = ctx.d_r
    state = make_initial(kind, ctx.rho_r, cfg, warm_start) if initial is None else initial

    def step(s):
        if kind.tag == CLASSICAL:
            new, diag, _ = _classical_update(s, ctx)
            return new, diag
        return _quantum_update(s, ctx, kind.d_m)

    def as_matrix(s):
        return ensemble_to_state(s) if kind.tag == CLASSICAL else s

    def gauge(s, new, u, iters=ALIGN_STEPS):
        # a quantum update may also rotate the memory, which is physically
        # irrelevant but would keep the state change from ever vanishing.
        # Any U only over-estimates the distance to the orbit, so a few
        # warm-started polar steps per update are enough
        if kind.tag == CLASSICAL or new.shape != s.shape:
            return new, u
        return align_memory(s, new, s.shape[0] // d_r, d_r, u, iters)

    max_res = max_marg = 0.0
    min_eig = np.inf
    history = []
    best = None

    def record(s, diag):
        nonlocal max_res, max_marg, min_eig, best
        max_res = max(max_res, diag.energy_residual)
        max_marg = max(max_marg, diag.marginal_error)
        min_eig = min(min_eig, diag.min_eig)
        if best is None or diag.lagrangian > best[1].lagrangian:
            best = (s, diag)

    converged = False
    delta_l = np.nan
    cur, _ = step(state)  # the first update enforces tr_M sigma = rho_R
    eta = 1.0
    prev_l = None
    prev_dir = None
    flips = 0
    it = 1
    gauge_u = None
    while True:
        raw, diag = step(cur)
        raw, gauge_u = gauge(cur, raw, gauge_u)
        record(cur, diag)
        if keep_history:
            history.append(diag.lagrangian)
        same = raw.shape == cur.shape
        change = _state_change(cur, raw, kind)
        if prev_l is not None:
            delta_l = diag.lagrangian - prev_l
            if abs(delta_l) <= cfg.tol_L and change <= cfg.tol_state:
                converged = True
                break
        if it >= cfg.max_iters:
            break
        direction = raw - cur if same else None
        if direction is not None and prev_dir is not None and prev_dir.shape == direction.shape:
            # successive steps pointing opposite ways: the map overshoots
            # (at small alpha it can settle into a 2-cycle), so damp it
            c = np.vdot(direction, prev_dir).real
            flips = flips + 1 if c < -OSCILLATION_COS * np.linalg.norm(direction) * np.linalg.norm(prev_dir) else 0
            if flips >= 2 and eta > MIN_DAMPING:
                eta = max(eta / 2.0, MIN_DAMPING)
                flips = 0
        prev_dir = direction
        prev_l = diag.lagrangian
        cur = cur + eta * direction if (direction is not None and eta < 1.0) else raw
        it += 1

    final = cur if converged else best[0]
    fp_res = _state_change(final, gauge(final, step(final)[0], gauge_u, 500)[0], kind)
    mat = as_matrix(final)
    d_m = mat.shape[0] // d_r
    sigma = DensityMatrix(mat, (d_m, d_r))
    rep = report(sigma, problem.relevance, cfg.alpha, with_correlations, correlation_reduce, cfg.seed)
    h_exp = _h_expectation(mat, problem.relevance)
    weights = conds = None
    if kind.tag == CLASSICAL:
        weights = np.real(np.einsum("mii->m", final))
        conds = final / weights[:, None, None]
    return EncodingSolution(
        kind=kind.with_dim(d_m), sigma_mr=sigma, report=rep, iterations=it, converged=converged,
        final_delta_L=float(delta_l), h_expectation=h_exp, weights=weights, conditionals=conds,
        max_energy_residual=max_res, max_marginal_error=max_marg, min_eigenvalue=float(min_eig),
        fixed_point_residual=fp_res, history=history,
    )


def _state_change(a, b, kind):
    if kind.tag == CLASSICAL:
        if a.shape != b.shape:
            return np.inf
        return float(sum(_trace_norm(x - y) for x, y in zip(a, b)))
    return _trace_norm(a - b)


def _h_expectation(mat, relevance):
    h = h_operator(mat, relevance)
    return float(np.real(np.vdot(mat.conj().T, h))) / LN2


def extract_encoding(sol: EncodingSolution, rho_r) -> ConditionalOperator:
    """Conditional operator ``E_{M|X} = rho_R^{-1/2} sigma_MR rho_R^{-1/2}``.

    Returned in input x output order (X first), i.e. with the factors of
    sigma_MR swapped.
    """
    rho = np.asarray(rho_r.mat if isinstance(rho_r, DensityMatrix) else rho_r, dtype=complex)
    d_m, d_r = sol.sigma_mr.dims
    swapped = sol.sigma_mr.mat.reshape(d_m, d_r, d_m, d_r).transpose(1, 0, 3, 2).reshape(d_m * d_r, d_m * d_r)
    return channel_from_state(DensityMatrix(swapped, (d_r, d_m)), DensityMatrix(rho, (d_r,)), tol=1e-7)
