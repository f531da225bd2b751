# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (same API as ``_kernels_py``).

The eigensolver calls LAPACK ``zheevd`` through scipy's Cython bindings;
the rest are plain loops, which beat numpy's per-call overhead at the
small sizes the solver works with.
"""
import numpy as np

from libc.math cimport exp, log, sqrt, fabs
from scipy.linalg.cython_lapack cimport zheevd

LOG_FLOOR = 1e-300
cdef double _LOG_FLOOR = 1e-300


def eigh(h):
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    cdef double complex[::1, :] a = np.array(h, dtype=np.complex128, order="F", copy=True)
    cdef int n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("eigh needs a square matrix")
    w_arr = np.empty(n, dtype=np.float64)
    if n == 0:
        return w_arr, np.asarray(a)
    cdef double[::1] w = w_arr
    cdef char jobz = b"V"
    cdef char uplo = b"L"
    cdef int lda = n, info = 0
    cdef int lwork = -1, lrwork = -1, liwork = -1
    cdef double complex wq
    cdef double rq
    cdef int iq
    zheevd(&jobz, &uplo, &n, &a[0, 0], &lda, &w[0], &wq, &lwork, &rq, &lrwork, &iq, &liwork, &info)
    lwork = <int>wq.real
    lrwork = <int>rq
    liwork = iq
    cdef double complex[::1] work = np.empty(max(lwork, 1), dtype=np.complex128)
    cdef double[::1] rwork = np.empty(max(lrwork, 1), dtype=np.float64)
    cdef int[::1] iwork = np.empty(max(liwork, 1), dtype=np.intc)
    zheevd(&jobz, &uplo, &n, &a[0, 0], &lda, &w[0], &work[0], &lwork, &rwork[0], &lrwork,
           &iwork[0], &liwork, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"zheevd failed with info={info}")
    return w_arr, np.asarray(a)


cdef _spectral(const double complex[:, :] v, const double[:] fw):
    cdef Py_ssize_t n = v.shape[0], r = v.shape[1], i, j, k
    out_arr = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex acc, vik
    for i in range(n):
        for j in range(i, n):
            acc = 0
            for k in range(r):
                vik = v[i, k]
                acc = acc + vik * fw[k] * v[j, k].conjugate()
            out[i, j] = acc
            out[j, i] = acc.conjugate()
    return out_arr


def spectral(w, v, fw):
    """Return ``v @ diag(fw) @ v^H``."""
    return _spectral(np.asarray(v, dtype=np.complex128), np.ascontiguousarray(fw, dtype=np.float64))


def herm_log_floor(h):
    """Natural matrix log with eigenvalues clamped at ``LOG_FLOOR``."""
    w, v = eigh(h)
    cdef double[::1] wv = w
    cdef Py_ssize_t i
    f = np.empty_like(w)
    cdef double[::1] fv = f
    for i in range(wv.shape[0]):
        fv[i] = log(wv[i] if wv[i] > _LOG_FLOOR else _LOG_FLOOR)
    return _spectral(v, f)


def herm_exp_normalized(k):
    """``exp(k - max eig(k))`` together with the shift that was removed."""
    w, v = eigh(k)
    cdef double[::1] wv = w
    cdef Py_ssize_t i, n = wv.shape[0]
    cdef double shift = wv[n - 1]
    f = np.empty_like(w)
    cdef double[::1] fv = f
    for i in range(n):
        fv[i] = exp(wv[i] - shift)
    return _spectral(v, f), shift


def entropy_nats(h):
    """Von Neumann entropy of a (trace-one) Hermitian PSD matrix, in nats."""
    w = np.linalg.eigvalsh(h)
    cdef double[::1] wv = np.ascontiguousarray(w)
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(wv.shape[0]):
        if wv[i] > 1e-14:
            s -= wv[i] * log(wv[i])
    return s


def ptrace_first(m, int d1, int d2):
    """Trace out the first of two tensor factors (keep the second)."""
    cdef const double complex[:, :] a = np.asarray(m, dtype=np.complex128)
    out_arr = np.zeros((d2, d2), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    for i in range(d1):
        for j in range(d2):
            for k in range(d2):
                out[j, k] = out[j, k] + a[i * d2 + j, i * d2 + k]
    return out_arr


def ptrace_second(m, int d1, int d2):
    """Trace out the second of two tensor factors (keep the first)."""
    cdef const double complex[:, :] a = np.asarray(m, dtype=np.complex128)
    out_arr = np.zeros((d1, d1), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    for i in range(d1):
        for k in range(d1):
            for j in range(d2):
                out[i, k] = out[i, k] + a[i * d2 + j, k * d2 + j]
    return out_arr


def hestenes(g, int max_sweeps=60):
    """One-sided Jacobi: returns (G V, V) with orthogonal columns in G V."""
    g_arr = np.array(g, dtype=np.complex128, copy=True)
    cdef double complex[:, :] gm = g_arr
    cdef Py_ssize_t rows = gm.shape[0], d = gm.shape[1]
    v_arr = np.eye(d, dtype=np.complex128)
    cdef double complex[:, :] vm = v_arr
    cdef Py_ssize_t p, q, i, sweep
    cdef double a, b, ac, zeta, t, cs, sn
    cdef double complex c, ph, x, y
    cdef bint rotated
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                a = 0.0
                b = 0.0
                c = 0
                for i in range(rows):
                    a += gm[i, p].real * gm[i, p].real + gm[i, p].imag * gm[i, p].imag
                    b += gm[i, q].real * gm[i, q].real + gm[i, q].imag * gm[i, q].imag
                    c = c + gm[i, p].conjugate() * gm[i, q]
                ac = sqrt(c.real * c.real + c.imag * c.imag)
                if ac == 0.0 or ac <= 1e-15 * sqrt(a * b):
                    continue
                rotated = True
                ph = c.conjugate() / ac
                zeta = (b - a) / (2.0 * ac)
                t = (1.0 if zeta >= 0 else -1.0) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(rows):
                    x = gm[i, p]
                    y = gm[i, q] * ph
                    gm[i, p] = cs * x - sn * y
                    gm[i, q] = sn * x + cs * y
                for i in range(d):
                    x = vm[i, p]
                    y = vm[i, q] * ph
                    vm[i, p] = cs * x - sn * y
                    vm[i, q] = sn * x + cs * y
        if not rotated:
            break
    return g_arr, v_arr
