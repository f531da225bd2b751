"""Fully classical Information Bottleneck over probability vectors.

Independent of the density-matrix code path: everything here is plain
probability arithmetic in the log domain. Used as the reference curve for
classical processes.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from qib.errors import QIBError

PROB_FLOOR = 1e-300
PRUNE = 1e-12


@dataclass(frozen=True)
class ClassicalProblem:
    p_x: np.ndarray
    p_y_given_x: np.ndarray  # indexed [y, x]

    def __post_init__(self):
        p_x = np.asarray(self.p_x, dtype=float)
        pyx = np.asarray(self.p_y_given_x, dtype=float)
        if p_x.ndim != 1 or np.any(p_x < 0) or abs(p_x.sum() - 1) > 1e-12:
            raise QIBError("p_x must be a probability vector")
        if pyx.ndim != 2 or pyx.shape[1] != len(p_x) or np.any(pyx < 0):
            raise QIBError("p_y_given_x must be a non-negative [y, x] matrix matching p_x")
        if np.max(np.abs(pyx.sum(axis=0) - 1)) > 1e-12:
            raise QIBError("columns of p_y_given_x must sum to 1")
        object.__setattr__(self, "p_x", p_x)
        object.__setattr__(self, "p_y_given_x", pyx)

    @property
    def p_xy(self):
        return self.p_y_given_x * self.p_x[None, :]

    @property
    def p_y(self):
        return self.p_y_given_x @ self.p_x

    def relevant_information(self):
        """``I[X:Y]`` in bits."""
        return _mi_bits(self.p_xy)


@dataclass(frozen=True)
class ClassicalEncoder:
    p_mx: np.ndarray  # joint p(m, x), shape (d_m, d_x)

    @property
    def p_m(self):
        return self.p_mx.sum(axis=1)

    def p_my(self, prob: ClassicalProblem):
        return self.p_mx @ prob.p_y_given_x.T


def _mi_bits(joint):
    joint = np.asarray(joint, dtype=float)
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])))


def informations(enc: ClassicalEncoder, prob: ClassicalProblem):
    """``(I[M:X], I[M:Y])`` in bits."""
    return _mi_bits(enc.p_mx), _mi_bits(enc.p_my(prob))


def classical_ib_step(enc: ClassicalEncoder, prob: ClassicalProblem, alpha: float) -> ClassicalEncoder:
    """``p(m,x) = p(x) p(m) exp((1/alpha) sum_y p(y|x) log[p(m,y) / (p(m) p(y))]) / Z(x)``.

    Branches with ``p(m) < 1e-12`` are pruned before the update.
    """
    p_mx = enc.p_mx
    p_m = p_mx.sum(axis=1)
    p_mx = p_mx[p_m > PRUNE * p_m.max()]
    p_m = p_mx.sum(axis=1)
    p_my = p_mx @ prob.p_y_given_x.T
    p_y = prob.p_y
    log_ratio = np.log(np.maximum(p_my, PROB_FLOOR)) - np.log(p_m)[:, None] - np.log(np.maximum(p_y, PROB_FLOOR))[None, :]
    # exponent[m, x] = (1/alpha) sum_y p(y|x) log_ratio[m, y]
    expo = np.log(p_m)[:, None] + (log_ratio @ prob.p_y_given_x) / alpha
    log_cond = expo - logsumexp(expo, axis=0, keepdims=True)
    return ClassicalEncoder(np.exp(log_cond) * prob.p_x[None, :])


def random_encoder(prob: ClassicalProblem, d_m: int, rng, scale=1e-3) -> ClassicalEncoder:
    """Uniform ``p(m|x)`` softly perturbed."""
    cond = np.full((d_m, len(prob.p_x)), 1.0 / d_m) * (1.0 + scale * rng.uniform(-1, 1, size=(d_m, len(prob.p_x))))
    cond /= cond.sum(axis=0, keepdims=True)
    return ClassicalEncoder(cond * prob.p_x[None, :])


@dataclass
class ClassicalSolution:
    encoder: ClassicalEncoder
    i_mem: float
    i_pred: float
    lagrangian: float
    iterations: int
    converged: bool


def classical_ib_solve(prob: ClassicalProblem, d_m: int, alpha: float, tol=1e-12, max_iters=5000, seed=0,
                       init: Optional[ClassicalEncoder] = None, perturb_scale=1e-3) -> ClassicalSolution:
    rng = np.random.default_rng(seed)
    if init is None:
        enc = random_encoder(prob, d_m, rng, perturb_scale)
    else:
        enc = _resize(init, d_m, rng, perturb_scale, prob)
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        new = classical_ib_step(enc, prob, alpha)
        i_mem, i_pred = informations(new, prob)
        lag = i_pred - alpha * i_mem
        change = np.inf if new.p_mx.shape != enc.p_mx.shape else np.abs(new.p_mx - enc.p_mx).sum()
        enc = new
        if prev is not None and abs(lag - prev) <= tol and change <= 1e-10:
            converged = True
            break
        prev = lag
    i_mem, i_pred = informations(enc, prob)
    return ClassicalSolution(enc, i_mem, i_pred, i_pred - alpha * i_mem, it, converged)


def _resize(enc, d_m, rng, scale, prob):
    rows = list(enc.p_mx)
    while len(rows) < d_m:
        j = int(np.argmax([r.sum() for r in rows]))
        rows[j] = rows[j] / 2
        rows.append(rows[j].copy())
    while len(rows) > d_m:
        order = np.argsort([r.sum() for r in rows])
        rows[order[1]] = rows[order[1]] + rows[order[0]]
        rows.pop(order[0])
    p_mx = np.array(rows) * (1.0 + scale * rng.uniform(-1, 1, size=(d_m, len(prob.p_x))))
    p_mx = p_mx / np.maximum(p_mx.sum(axis=0, keepdims=True), PROB_FLOOR) * prob.p_x[None, :]
    return ClassicalEncoder(p_mx)


def classical_ib_anneal(prob: ClassicalProblem, alphas, d_max: int, growth_threshold=1e-6, seed=0, tol=1e-12,
                        max_iters=5000):
    """Warm-started sweep over ``alphas`` (descending) with dimension growth.

    Returns a list of ClassicalSolution, one per alpha.
    """
    out = []
    sol = None
    d_m = 1
    for k, alpha in enumerate(alphas):
        init = sol.encoder if sol is not None else None
        cur = classical_ib_solve(prob, d_m, alpha, tol, max_iters, seed + k, init)
        if d_m < d_max:
            probe = classical_ib_solve(prob, d_m + 1, alpha, tol, max_iters, seed + k, init)
            if probe.lagrangian > cur.lagrangian + growth_threshold:
                cur, d_m = probe, d_m + 1
        sol = cur
        out.append(cur)
    return out
