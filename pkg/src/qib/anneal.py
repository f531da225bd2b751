"""Deterministic annealing over the trade-off parameter and the resulting
information-plane curves.

Start at large alpha with the trivial product solution, lower alpha
geometrically, warm-start every solve from the previous one and probe one
extra memory dimension at each step.
"""
from dataclasses import dataclass, field, asdict, replace
import math
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import isotonic_regression

from qib.errors import NumericalError, QIBError
from qib.linalg import partial_trace
from qib.measures import bounds as problem_bounds, report
from qib.solver import CLASSICAL, QUANTUM, EncodingSolution, MemoryKind, SolverConfig, solve

FEASIBILITY_TOL = 1e-3
DELTA_CLIP = 1e-3
# relative eigenvalue size below which a memory direction counts as unused
RANK_TOL = 1e-9


@dataclass(frozen=True)
class AnnealSchedule:
    alpha_start: float = 10.0
    alpha_end: float = 1e-3
    decay: float = 0.95
    d_m_max: Optional[int] = None  # None means d_X + 1
    growth_threshold: float = 1e-6

    def __post_init__(self):
        if not self.alpha_start > self.alpha_end > 0:
            raise QIBError("need alpha_start > alpha_end > 0")
        if not 0 < self.decay < 1:
            raise QIBError("decay must lie in (0, 1)")
        if self.d_m_max is not None and self.d_m_max < 1:
            raise QIBError("d_m_max must be >= 1")

    def alphas(self):
        """Geometric grid from alpha_start down to (at least) alpha_end."""
        n = int(math.floor(math.log(self.alpha_end / self.alpha_start) / math.log(self.decay) + 1e-9))
        return [self.alpha_start * self.decay ** k for k in range(n + 1)]


@dataclass
class InfoPlanePoint:
    alpha: float
    d_m: int
    i_mem: float
    i_pred: float
    lagrangian: float
    s_m: float
    s_cond: float
    purity: float
    concurrence_in: Optional[float] = None
    concurrence_out: Optional[float] = None
    discord_in: Optional[float] = None
    discord_out: Optional[float] = None
    converged: bool = False
    # L(d_M + 1) - L(d_M) of the dimension probe, None when not probed
    probe_gain: Optional[float] = None
    error: Optional[str] = None
    # worst per-iteration invariant values over this step's solves
    max_energy_residual: float = 0.0
    max_marginal_error: float = 0.0
    min_eigenvalue: float = 0.0
    iterations: int = 0
    rank_m: int = 0  # number of sigma_M eigenvalues above RANK_TOL (relative)

    def as_dict(self):
        return asdict(self)


@dataclass
class InfoPlaneTrace:
    kind: str
    points: List[InfoPlanePoint]
    bounds: dict
    label: str = ""
    final: Optional[EncodingSolution] = field(default=None, repr=False)
    solutions: Optional[List[EncodingSolution]] = field(default=None, repr=False)

    def valid(self):
        return [p for p in self.points if p.error is None]

    def arrays(self):
        pts = self.valid()
        return np.array([p.i_mem for p in pts]), np.array([p.i_pred for p in pts])

    def best(self):
        """Point of largest predictive power (smallest memory on ties within 1e-9)."""
        pts = self.valid()
        top = max(p.i_pred for p in pts)
        return min((p for p in pts if p.i_pred >= top - 1e-9), key=lambda p: p.i_mem)


def point_seed(master: int, k: int) -> int:
    """Per-step seed derived from the master seed."""
    return int(np.random.SeedSequence([int(master) & 0xFFFFFFFF, k]).generate_state(1)[0])


def correlation_reducer(problem) -> Optional[Callable]:
    """For a two-qubit input, keep only the first reference qubit in the
    correlation diagnostics (the second carries no relevant information in
    the bundled amplitude-damping problem)."""
    if tuple(problem.rho_x.dims) != (2, 2):
        return None

    def reduce(m):
        d_m = m.shape[0] // 4
        return partial_trace(m, (d_m, 2, 2), (0, 1))
    return reduce


def memory_rank(sol: EncodingSolution) -> int:
    """Effective memory dimension: a solution grown to d_M may still only use
    a smaller subspace of M."""
    w = np.linalg.eigvalsh(sol.sigma_mr.reduce(0).mat)
    return int(np.sum(w > RANK_TOL * w[-1]))


def _point(alpha, sol: EncodingSolution, gain, solves):
    r = sol.report
    return InfoPlanePoint(
        alpha=alpha, d_m=sol.d_m, i_mem=r.i_mem, i_pred=r.i_pred, lagrangian=r.lagrangian, s_m=r.s_m,
        s_cond=r.s_cond_r_given_m, purity=r.purity, concurrence_in=r.concurrence_mr,
        concurrence_out=r.concurrence_my, discord_in=r.discord_r_given_m, discord_out=r.discord_y_given_m,
        converged=sol.converged, probe_gain=gain,
        max_energy_residual=max(s.max_energy_residual for s in solves),
        max_marginal_error=max(s.max_marginal_error for s in solves),
        min_eigenvalue=min(s.min_eigenvalue for s in solves),
        iterations=sol.iterations, rank_m=memory_rank(sol),
    )


def _failed(alpha, d_m, exc):
    nan = float("nan")
    return InfoPlanePoint(alpha, d_m, nan, nan, nan, nan, nan, nan, converged=False, error=str(exc))


def anneal(problem, kind: str, schedule: AnnealSchedule = AnnealSchedule(), cfg: Optional[SolverConfig] = None,
           diagnostics=False, on_point: Optional[Callable] = None, keep_solutions=False) -> InfoPlaneTrace:
    """Trace the optimal curve for one memory kind ('quantum' or 'classical').

    ``cfg`` supplies tolerances and the master seed; its alpha is ignored.
    Points whose solve raises a numerical error are kept, flagged with the
    message, and the sweep continues from the last good solution.
    With ``keep_solutions`` the adopted solution of every point is kept in
    ``trace.solutions`` (None for failed points).
    """
    if kind not in (QUANTUM, CLASSICAL):
        raise QIBError(f"memory kind must be 'quantum' or 'classical', got {kind!r}")
    cfg = cfg or SolverConfig(alpha=1.0)
    d_cap = schedule.d_m_max or problem.d_x + 1
    reduce = correlation_reducer(problem)
    points = []
    kept = [] if keep_solutions else None
    warm = None
    d_m = 1
    for k, alpha in enumerate(schedule.alphas()):
        step_cfg = replace(cfg, alpha=alpha, seed=point_seed(cfg.seed, k))
        try:
            cur = solve(problem, MemoryKind(kind, d_m), step_cfg, warm_start=warm)
            solves = [cur]
            gain = None
            if d_m < d_cap:
                probe = solve(problem, MemoryKind(kind, d_m + 1), step_cfg, warm_start=warm)
                solves.append(probe)
                gain = probe.lagrangian - cur.lagrangian
                # an unconverged probe reports its best iterate, which is not a
                # fixed point; only let it win against an unconverged incumbent
                if gain > schedule.growth_threshold and (probe.converged or not cur.converged):
                    cur, d_m = probe, d_m + 1
            if diagnostics:
                cur = _with_correlations(problem, cur, step_cfg, reduce)
        except NumericalError as exc:
            pt = _failed(alpha, d_m, exc)
            cur = None
        else:
            warm = cur
            d_m = cur.d_m
            pt = _point(alpha, cur, gain, solves)
        points.append(pt)
        if kept is not None:
            kept.append(cur)
        if on_point is not None:
            on_point(pt)
    return InfoPlaneTrace(kind, points, problem_bounds(problem), problem.label, warm, kept)


def _with_correlations(problem, sol, cfg, reduce):
    sol.report = report(sol.sigma_mr, problem.relevance, cfg.alpha, True, reduce, cfg.seed)
    return sol


# --------------------------------------------------------------------------
# comparing traces


def envelope(trace: InfoPlaneTrace):
    """Monotone envelope of a trace: i_mem sorted, i_pred made non-decreasing
    by isotonic regression. Returns (i_mem, i_pred) arrays starting at 0."""
    mem, pred = trace.arrays()
    order = np.argsort(mem, kind="stable")
    mem = np.concatenate([[0.0], np.clip(mem[order], 0.0, None)])
    pred = np.concatenate([[0.0], pred[order]])
    pred = isotonic_regression(pred, increasing=True).x
    return mem, pred


def envelope_at(trace, i_mem):
    """Predictive power of the envelope at ``i_mem``, flat past the last point."""
    mem, pred = envelope(trace)
    return np.interp(i_mem, mem, pred)


def memory_for(trace, i_pred):
    """Smallest memory at which the envelope reaches ``i_pred``."""
    mem, pred = envelope(trace)
    # keep the first point of every plateau so the inverse is single-valued
    keep = np.concatenate([[True], np.diff(pred) > 0])
    return np.interp(i_pred, pred[keep], mem[keep])


def _clip(d):
    d = np.asarray(d, dtype=float)
    return np.where(d < 0, 0.0, d)


def delta_pred(trace_q: InfoPlaneTrace, trace_c: InfoPlaneTrace, i_mem_grid, raw=False):
    """Quantum-over-classical predictive power at equal memory.

    Defined only for ``0 <= i_mem <= S[X]``. Differences above -1e-3 that
    are negative are reported as 0 unless ``raw``.
    """
    grid = np.asarray(i_mem_grid, dtype=float)
    s_x = trace_c.bounds["mem_max_classical"]
    if np.any(grid < 0) or np.any(grid > s_x + 1e-9):
        raise QIBError(f"delta_pred grid must lie in [0, S[X]] = [0, {s_x:.6g}]")
    d = envelope_at(trace_q, grid) - envelope_at(trace_c, grid)
    return d if raw else np.where(d >= -DELTA_CLIP, _clip(d), d)


def delta_mem(trace_q: InfoPlaneTrace, trace_c: InfoPlaneTrace, i_pred_grid, raw=False):
    """Classical-minus-quantum memory needed for equal predictive power.

    Defined only below the classical maximum predictive power.
    """
    grid = np.asarray(i_pred_grid, dtype=float)
    top = envelope(trace_c)[1][-1]
    if np.any(grid < 0) or np.any(grid > top + 1e-9):
        raise QIBError(f"delta_mem grid must lie in [0, classical max {top:.6g}]")
    d = memory_for(trace_c, grid) - memory_for(trace_q, grid)
    return d if raw else np.where(d >= -DELTA_CLIP, _clip(d), d)


def prediction_gap(trace_q: InfoPlaneTrace, trace_c: InfoPlaneTrace, n=2001):
    """Largest quantum-over-classical predictive power at equal memory over
    the whole quantum range, with the classical curve held flat past its end."""
    top = trace_q.bounds["mem_max_quantum"]
    grid = np.linspace(0.0, top, n)
    return float(np.max(envelope_at(trace_q, grid) - envelope_at(trace_c, grid)))


def classify_point(i_mem, i_pred, bounds, traces, tol=FEASIBILITY_TOL):
    """Region of the information plane: 'infeasible', 'quantum_feasible'
    or 'classical_feasible'. ``traces`` is (quantum trace, classical trace)."""
    trace_q, trace_c = traces
    if i_mem < -tol or i_pred < -tol or i_pred > i_mem + tol:
        return "infeasible"
    if i_mem > bounds["mem_max_quantum"] + tol or i_pred > envelope_at(trace_q, i_mem) + tol:
        return "infeasible"
    if i_mem <= bounds["mem_max_classical"] + tol and i_pred <= envelope_at(trace_c, i_mem) + tol:
        return "classical_feasible"
    return "quantum_feasible"
