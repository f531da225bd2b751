"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and semantics; ``qib._backend`` picks one of the two at import time.
"""
import numpy as np

LOG_FLOOR = 1e-300


def eigh(h):
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    return np.linalg.eigh(h)


def spectral(w, v, fw):
    """Return ``v @ diag(fw) @ v^H``."""
    return (v * fw) @ v.conj().T


def herm_log_floor(h):
    """Natural matrix log with eigenvalues clamped at ``LOG_FLOOR``."""
    w, v = np.linalg.eigh(h)
    return spectral(w, v, np.log(np.maximum(w, LOG_FLOOR)))


def herm_exp_normalized(k):
    """``exp(k - max eig(k))`` together with the shift that was removed."""
    w, v = np.linalg.eigh(k)
    shift = w[-1]
    return spectral(w, v, np.exp(w - shift)), shift


def entropy_nats(h):
    """Von Neumann entropy of a (trace-one) Hermitian PSD matrix, in nats."""
    w = np.linalg.eigvalsh(h)
    w = w[w > 1e-14]
    return float(-np.sum(w * np.log(w)))


def ptrace_first(m, d1, d2):
    """Trace out the first of two tensor factors (keep the second)."""
    return np.einsum("ijik->jk", m.reshape(d1, d2, d1, d2))


def ptrace_second(m, d1, d2):
    """Trace out the second of two tensor factors (keep the first)."""
    return np.einsum("ijkj->ik", m.reshape(d1, d2, d1, d2))


def hestenes(g, max_sweeps=60):
    """One-sided Jacobi: returns (G V, V) with orthogonal columns in G V."""
    g = g.astype(complex, copy=True)
    d = g.shape[1]
    v = np.eye(d, dtype=complex)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                a = np.vdot(g[:, p], g[:, p]).real
                b = np.vdot(g[:, q], g[:, q]).real
                c = np.vdot(g[:, p], g[:, q])
                ac = abs(c)
                if ac <= 1e-15 * np.sqrt(a * b) or ac == 0.0:
                    continue
                rotated = True
                ph = np.conj(c) / ac
                g[:, q] *= ph
                v[:, q] *= ph
                zeta = (b - a) / (2.0 * ac)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                gp, gq = g[:, p].copy(), g[:, q].copy()
                g[:, p] = cs * gp - sn * gq
                g[:, q] = sn * gp + cs * gq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
        if not rotated:
            break
    return g, v
