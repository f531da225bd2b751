"""Dense complex matrix primitives over tensor-product spaces.

Matrices are plain ``numpy`` complex arrays. Tensor structure is carried
separately as a tuple of factor dimensions, e.g. ``(2, 4)`` for a qubit
times a ququart.
"""
from typing import NamedTuple, Sequence

import numpy as np

from qib._backend import kernels
from qib.errors import DimensionError, NotHermitianError

SPECTRAL_FUNCTIONS = ("log", "exp", "sqrt", "inv_sqrt")


class HermitianEigen(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_dims(m, dims):
    n = int(np.prod(dims))
    if m.ndim != 2 or m.shape != (n, n):
        raise DimensionError(f"matrix of shape {m.shape} does not match subsystem dims {tuple(dims)}")


def kron(*ms):
    """Kronecker product of any number of matrices (left factor first)."""
    out = np.array([[1.0 + 0j]])
    for m in ms:
        out = np.kron(out, np.asarray(m))
    return out


def partial_trace(m, dims: Sequence[int], keep):
    """Trace out every factor not listed in ``keep``.

    ``keep`` is an index or a collection of factor indices. The kept factors
    stay in their original order. An empty ``keep`` returns the 1x1 trace.
    """
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    _check_dims(m, dims)
    if np.isscalar(keep) or isinstance(keep, (int, np.integer)):
        keep = (int(keep),)
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep={keep} out of range for {n} factors")
    t = m.reshape(dims + dims)
    # einsum labels: row index i_k, column index j_k; traced factors share a label
    row = list(range(n))
    col = [k if k not in keep else n + k for k in range(n)]
    out_labels = [k for k in keep] + [n + k for k in keep]
    r = np.einsum(t, row + col, out_labels)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return np.asarray(r).reshape(d, d)


def partial_transpose(m, dims: Sequence[int], which: int):
    """Transpose the indices of factor ``which`` only."""
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    _check_dims(m, dims)
    n = len(dims)
    if not 0 <= which < n:
        raise DimensionError(f"factor {which} out of range for {n} factors")
    axes = list(range(2 * n))
    axes[which], axes[n + which] = axes[n + which], axes[which]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def hermitize(m):
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def herm_eig(h, tol=1e-9) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises NotHermitianError when ``h`` departs from Hermiticity by more
    than ``tol`` (max-abs entry of ``h - h^H``).
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {h.shape}")
    dev = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if dev > tol:
        raise NotHermitianError(f"matrix is not Hermitian (max |h - h^H| = {dev:.3g})")
    w, v = np.linalg.eigh(hermitize(h))
    return HermitianEigen(w, v)


def matrix_function(h, f: str, support_cutoff=1e-12):
    """Apply a spectral function to a Hermitian matrix.

    ``f`` is one of ``log`` (natural), ``exp``, ``sqrt``, ``inv_sqrt``. For all
    but ``exp`` the function acts on the support only: eigenvalues at or
    below ``support_cutoff * max|eig|`` map to zero, which gives the
    pseudo-inverse reading of ``inv_sqrt`` and a log defined on the support.
    Eigenvalues below ``-10 * support_cutoff * max|eig|`` are rejected.
    """
    if f not in SPECTRAL_FUNCTIONS:
        raise ValueError(f"unknown spectral function {f!r}; expected one of {SPECTRAL_FUNCTIONS}")
    w, v = herm_eig(h)
    if f == "exp":
        fw = np.exp(w)
    else:
        scale = np.max(np.abs(w)) if w.size else 0.0
        cut = support_cutoff * scale
        if w.size and w[0] < -10 * cut:
            raise ValueError(f"negative eigenvalue {w[0]:.3g} in argument of {f}")
        on = w > cut
        fw = np.zeros_like(w)
        if f == "log":
            fw[on] = np.log(w[on])
        elif f == "sqrt":
            fw[on] = np.sqrt(w[on])
        else:
            fw[on] = 1.0 / np.sqrt(w[on])
    out = (v * fw) @ v.conj().T
    return hermitize(out)


# graded normalisation -------------------------------------------------------

# residual below which a direction counts as already spanned
GRADED_SPAN_TOL = 1e-8
# consecutive scale ratios are clipped at exp(-GRADED_CLIP); the polar
# factor only changes at O(exp(-GRADED_CLIP)) from it
GRADED_CLIP = 40.0


def graded_polar(log_w, x):
    """Polar factor ``U = Z^{-1/2} A`` of ``A = [exp(log_w_j / 2) x_j]``.

    ``x`` holds the vectors ``x_j`` as columns and ``Z = A A^dag``. The
    weights may span far more than the double range; the columns are
    orthogonalised in order of decreasing weight and the polar factor is
    taken by one-sided Jacobi, which stays accurate for graded matrices.
    Raises ValueError when the vectors do not span the space.
    """
    x = np.asarray(x, dtype=complex)
    log_w = np.asarray(log_w, dtype=float)
    d, n = x.shape
    norms = np.linalg.norm(x, axis=0)
    live = norms > 0
    lw = np.full(n, -np.inf)
    lw[live] = log_w[live] + 2.0 * np.log(norms[live])
    xs = np.zeros_like(x)
    xs[:, live] = x[:, live] / norms[live]
    order = np.argsort(-lw, kind="stable")
    q = np.zeros((d, d), dtype=complex)
    intro = []
    mu = []
    k = 0
    for j in order:
        if k == d or not np.isfinite(lw[j]):
            break
        r = xs[:, j] - q[:, :k] @ (q[:, :k].conj().T @ xs[:, j])
        r = r - q[:, :k] @ (q[:, :k].conj().T @ r)
        nr = np.linalg.norm(r)
        if nr > GRADED_SPAN_TOL:
            q[:, k] = r / nr
            intro.append(j)
            mu.append(lw[j] / 2.0 + np.log(nr))
            k += 1
    if k < d:
        raise ValueError(f"weighted vectors span only {k} of {d} dimensions")
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    # a_hat[k, j] = <q_k|x_j> exp(lw_j / 2 - mu_k), zero for columns ahead of q_k's introducer
    a_hat = np.zeros((d, n), dtype=complex)
    proj = q.conj().T @ xs
    for kk in range(d):
        cols = (rank >= rank[intro[kk]]) & np.isfinite(lw)
        a_hat[kk, cols] = proj[kk, cols] * np.exp(lw[cols] / 2.0 - mu[kk])
    steps = np.clip(np.diff(mu), -GRADED_CLIP, GRADED_CLIP)
    scale = np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    g, v = kernels.hestenes(np.ascontiguousarray(a_hat.conj().T * scale[None, :]))
    y = g / np.linalg.norm(g, axis=0)[None, :]
    return q @ v @ y.conj().T
