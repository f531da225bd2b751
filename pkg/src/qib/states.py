"""Validated quantum states and channels, purification, and the
conditional-operator (Choi) correspondence between channels and states.

Conventions
-----------
* Bipartite matrices are ordered as the tensor product of their factors in
  the order given by ``dims``.
* A conditional operator ``E_{B|A}`` is stored on input (A) times output (B):
  ``E(rho) = tr_A[E^{T_A} (rho x I_B)]``, i.e. it is the Choi matrix
  ``sum_ij |i><j| x E(|i><j|)``.
"""
from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple

import numpy as np

from qib.errors import ChannelError, DimensionError, StateError
from qib.linalg import hermitize, kron, matrix_function, partial_trace, partial_transpose

STATE_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityMatrix:
    mat: np.ndarray
    dims: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mat", _frozen(self.mat))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def dim(self):
        return self.mat.shape[0]

    def reduce(self, keep):
        sub = [self.dims[k] for k in ([keep] if isinstance(keep, int) else sorted(keep))]
        return DensityMatrix(partial_trace(self.mat, self.dims, keep), tuple(sub))


@dataclass(frozen=True)
class PureStateVector:
    amplitudes: np.ndarray
    dims: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-10:
            raise StateError(f"state vector norm {norm:.12g} differs from 1")

    def density(self) -> DensityMatrix:
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()), self.dims)


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map in Kraus form; each Kraus operator is ``dout x din``."""

    kraus: Tuple[np.ndarray, ...]
    din: int
    dout: int
    name: str = "channel"
    _transfer: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = tuple(_frozen(k) for k in self.kraus)
        if not ks:
            raise ChannelError("a channel needs at least one Kraus operator")
        for k in ks:
            if k.shape != (self.dout, self.din):
                raise DimensionError(f"Kraus operator of shape {k.shape}, expected {(self.dout, self.din)}")
        object.__setattr__(self, "kraus", ks)
        deficit = np.linalg.norm(sum(k.conj().T @ k for k in ks) - np.eye(self.din), 2)
        if deficit > STATE_TOL:
            raise ChannelError(f"Kraus set is not trace preserving: ||sum K^H K - I|| = {deficit:.3g}")
        # T[y, z, r, s] = sum_k K[y, r] conj(K[z, s]); used for fast extended application
        stack = np.stack(ks)
        object.__setattr__(self, "_transfer", np.einsum("kyr,kzs->yzrs", stack, stack.conj()))

    def __call__(self, rho):
        rho = np.asarray(rho)
        if rho.shape != (self.din, self.din):
            raise DimensionError(f"channel input must be {self.din}x{self.din}, got {rho.shape}")
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def apply_right(self, m, d_left):
        """Apply ``I_{d_left} x self`` to a matrix on ``d_left * din``."""
        t = np.asarray(m).reshape(d_left, self.din, d_left, self.din)
        out = np.einsum("yzrs,arbs->aybz", self._transfer, t, optimize=True)
        return out.reshape(d_left * self.dout, d_left * self.dout)

    def dual_right(self, a, d_left):
        """Apply the dual of ``I_{d_left} x self`` to an operator on ``d_left * dout``."""
        t = np.asarray(a).reshape(d_left, self.dout, d_left, self.dout)
        out = np.einsum("yzrs,aybz->arbs", self._transfer.conj(), t, optimize=True)
        return out.reshape(d_left * self.din, d_left * self.din)


@dataclass(frozen=True)
class DualMap:
    """Adjoint (Heisenberg-picture) map ``A -> sum_k K_k^H A K_k``."""

    kraus: Tuple[np.ndarray, ...]
    din: int
    dout: int

    def __call__(self, a):
        a = np.asarray(a)
        if a.shape != (self.dout, self.dout):
            raise DimensionError(f"dual map input must be {self.dout}x{self.dout}, got {a.shape}")
        return sum(k.conj().T @ a @ k for k in self.kraus)


@dataclass(frozen=True)
class ConditionalOperator:
    mat: np.ndarray
    dims: Tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "mat", _frozen(self.mat))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 2:
            raise DimensionError("a conditional operator has exactly two factors (input, output)")


def validate_state(mat, dims: Sequence[int] = None, tol=STATE_TOL) -> DensityMatrix:
    """Check Hermiticity, positivity and unit trace; clip tiny negative
    eigenvalues and renormalise."""
    m = np.array(mat, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StateError(f"density matrix must be square, got shape {m.shape}")
    if dims is None:
        dims = (m.shape[0],)
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"dims {dims} do not match matrix dimension {m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise StateError("density matrix has non-finite entries")
    herm_dev = np.max(np.abs(m - m.conj().T))
    if herm_dev > tol:
        raise StateError(f"not Hermitian: max |rho - rho^H| = {herm_dev:.3g}")
    m = hermitize(m)
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol:
        raise StateError(f"trace is {tr:.12g}, expected 1")
    w, v = np.linalg.eigh(m)
    if w[0] < -tol:
        raise StateError(f"negative eigenvalue {w[0]:.3g}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        m = hermitize((v * w) @ v.conj().T)
    return DensityMatrix(m / np.trace(m).real, dims)


def as_state(rho, dims=None) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    return validate_state(rho, dims)


def _phase_fix(v):
    """Make the first non-negligible component of each column real positive."""
    v = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            c = col[idx[0]]
            v[:, j] = col * (abs(c) / c)
    return v


def purify(rho) -> PureStateVector:
    """Canonical purification ``sum_i sqrt(p_i) |i>|i'>`` on A x R, d_R = d_A.

    The R basis is a copy of the eigenbasis of ``rho`` (ascending
    eigenvalues, first non-zero component of each eigenvector real positive).
    """
    rho = as_state(rho)
    w, v = np.linalg.eigh(rho.mat)
    w = np.clip(w, 0.0, None)
    v = _phase_fix(v)
    d = rho.dim
    psi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        psi += np.sqrt(w[i]) * np.kron(v[:, i], v[:, i])
    psi /= np.linalg.norm(psi)
    return PureStateVector(psi, (d, d))


def apply_channel(ch: QuantumChannel, rho) -> DensityMatrix:
    rho = as_state(rho)
    if rho.dim != ch.din:
        raise DimensionError(f"channel {ch.name} expects dimension {ch.din}, state has {rho.dim}")
    return validate_state(hermitize(ch(rho.mat)), (ch.dout,))


def extend_channel(ch: QuantumChannel, ancilla_dim: int, side: str = "right") -> QuantumChannel:
    """Tensor ``ch`` with the identity channel on an ancilla.

    ``side="right"`` gives ``ch x I_C``; ``side="left"`` gives ``I_C x ch``.
    """
    eye = np.eye(ancilla_dim)
    if side == "right":
        ks = [np.kron(k, eye) for k in ch.kraus]
    elif side == "left":
        ks = [np.kron(eye, k) for k in ch.kraus]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return QuantumChannel(tuple(ks), ch.din * ancilla_dim, ch.dout * ancilla_dim, f"{ch.name}+id{ancilla_dim}")


def dual_channel(ch: QuantumChannel) -> DualMap:
    return DualMap(ch.kraus, ch.din, ch.dout)


def compose(second: QuantumChannel, first: QuantumChannel, name=None) -> QuantumChannel:
    """Channel ``second o first`` as a single Kraus family."""
    if first.dout != second.din:
        raise DimensionError(f"cannot compose: {first.name} outputs {first.dout}, {second.name} takes {second.din}")
    ks = [b @ a for b in second.kraus for a in first.kraus]
    ks = [k for k in ks if np.linalg.norm(k) > 0]
    return QuantumChannel(tuple(ks), first.din, second.dout, name or f"{second.name}*{first.name}")


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel((np.eye(d),), d, d, "identity")


def replacement_channel(omega, din: int) -> QuantumChannel:
    """Constant channel ``rho -> tr(rho) omega``."""
    omega = as_state(omega)
    w, v = np.linalg.eigh(omega.mat)
    ks = []
    for i in range(omega.dim):
        if w[i] <= 0:
            continue
        for j in range(din):
            k = np.zeros((omega.dim, din), dtype=complex)
            k[:, j] = np.sqrt(w[i]) * v[:, i]
            ks.append(k)
    return QuantumChannel(tuple(ks), din, omega.dim, "replacement")


def partial_trace_channel(dims: Sequence[int], keep: int) -> QuantumChannel:
    """Channel discarding every factor of ``dims`` except ``keep``."""
    dims = tuple(dims)
    dk = dims[keep]
    others = [d for i, d in enumerate(dims) if i != keep]
    ks = []
    for idx in np.ndindex(*others):
        k = np.zeros((dk, int(np.prod(dims))), dtype=complex)
        for a in range(dk):
            full = list(idx)
            full.insert(keep, a)
            k[a, np.ravel_multi_index(full, dims)] = 1.0
        ks.append(k)
    return QuantumChannel(tuple(ks), int(np.prod(dims)), dk, f"trace_out_all_but_{keep}")


def phase_damping(lam: float) -> QuantumChannel:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"damping parameter must lie in [0, 1], got {lam}")
    k1 = np.diag([1.0, np.sqrt(1.0 - lam)])
    k2 = np.diag([0.0, np.sqrt(lam)])
    return QuantumChannel((k1, k2), 2, 2, f"phase_damping({lam:g})")


def amplitude_damping(lam: float) -> QuantumChannel:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"damping parameter must lie in [0, 1], got {lam}")
    k1 = np.diag([1.0, np.sqrt(1.0 - lam)])
    k2 = np.array([[0.0, np.sqrt(lam)], [0.0, 0.0]])
    return QuantumChannel((k1, k2), 2, 2, f"amplitude_damping({lam:g})")


def classical_channel(p_y_given_x, tol=1e-12) -> QuantumChannel:
    """Classical channel with Kraus set ``sqrt(p(y|x)) |y><x|``.

    ``p_y_given_x[y, x]``: columns indexed by the input symbol sum to one.
    """
    p = np.asarray(p_y_given_x, dtype=float)
    if p.ndim != 2:
        raise ChannelError("p(y|x) must be a 2-d array indexed [y, x]")
    if np.any(p < 0):
        raise ChannelError("p(y|x) has negative entries")
    colsum = p.sum(axis=0)
    if np.max(np.abs(colsum - 1.0)) > tol:
        raise ChannelError(f"columns of p(y|x) must sum to 1 (worst deviation {np.max(np.abs(colsum - 1.0)):.3g})")
    dy, dx = p.shape
    ks = []
    for y in range(dy):
        for x in range(dx):
            if p[y, x] > 0:
                k = np.zeros((dy, dx))
                k[y, x] = np.sqrt(p[y, x])
                ks.append(k)
    return QuantumChannel(tuple(ks), dx, dy, "classical")


def channel_to_conditional(ch: QuantumChannel) -> ConditionalOperator:
    d = ch.din
    j = np.zeros((d * ch.dout, d * ch.dout), dtype=complex)
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d))
            e[a, b] = 1.0
            j += np.kron(e, ch(e))
    return ConditionalOperator(hermitize(j), (d, ch.dout))


def apply_conditional(cop: ConditionalOperator, rho):
    """``tr_A[E^{T_A} (rho x I_B)]`` evaluated literally."""
    da, db = cop.dims
    rho = np.asarray(rho.mat if isinstance(rho, DensityMatrix) else rho)
    pt = partial_transpose(cop.mat, cop.dims, 0)
    return partial_trace(pt @ np.kron(rho, np.eye(db)), cop.dims, 1)


def conditional_to_channel(cop: ConditionalOperator, tol=STATE_TOL) -> QuantumChannel:
    """Kraus form of the channel represented by a conditional operator."""
    da, db = cop.dims
    w, v = np.linalg.eigh(hermitize(cop.mat))
    if w[0] < -tol:
        raise ChannelError(f"conditional operator is not positive (eigenvalue {w[0]:.3g})")
    dev = np.linalg.norm(partial_trace(cop.mat, cop.dims, 0) - np.eye(da), 2)
    if dev > tol:
        raise ChannelError(f"conditional operator is not trace consistent: ||tr_B E - I|| = {dev:.3g}")
    ks = [np.sqrt(w[i]) * v[:, i].reshape(da, db).T for i in range(len(w)) if w[i] > tol * 1e-3]
    return QuantumChannel(tuple(ks), da, db, "from_conditional")


def state_from_channel(rho_a, cop: ConditionalOperator) -> DensityMatrix:
    """``rho_AB = rho_A^{1/2} E_{B|A} rho_A^{1/2}``."""
    rho_a = as_state(rho_a)
    da, db = cop.dims
    if rho_a.dim != da:
        raise DimensionError(f"state dimension {rho_a.dim} does not match channel input {da}")
    s = np.kron(matrix_function(rho_a.mat, "sqrt"), np.eye(db))
    return validate_state(hermitize(s @ cop.mat @ s), (da, db))


def channel_from_state(rho_ab, rho_a, tol=1e-8) -> ConditionalOperator:
    """``E_{B|A} = rho_A^{-1/2} rho_AB rho_A^{-1/2}`` (pseudo-inverse on the support)."""
    rho_ab = as_state(rho_ab)
    rho_a = as_state(rho_a)
    if len(rho_ab.dims) != 2 or rho_ab.dims[0] != rho_a.dim:
        raise DimensionError(f"joint dims {rho_ab.dims} incompatible with marginal dimension {rho_a.dim}")
    marg = partial_trace(rho_ab.mat, rho_ab.dims, 0)
    dev = np.linalg.norm(marg - rho_a.mat, 2)
    if dev > tol:
        raise StateError(f"marginal mismatch: ||tr_B rho_AB - rho_A|| = {dev:.3g}")
    s = np.kron(matrix_function(rho_a.mat, "inv_sqrt"), np.eye(rho_ab.dims[1]))
    return ConditionalOperator(hermitize(s @ rho_ab.mat @ s), rho_ab.dims)


def fidelity(rho, sigma):
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    a = np.asarray(rho.mat if isinstance(rho, DensityMatrix) else rho)
    b = np.asarray(sigma.mat if isinstance(sigma, DensityMatrix) else sigma)
    s = matrix_function(a, "sqrt")
    w = np.linalg.eigvalsh(hermitize(s @ b @ s))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
