"""Quantum and classical information bottleneck: optimal memories for
predicting the output of a relevance channel."""
from qib._backend import NAME as BACKEND
from qib.anneal import AnnealSchedule, InfoPlanePoint, InfoPlaneTrace, anneal, classify_point, delta_mem, delta_pred
from qib.classical import ClassicalEncoder, ClassicalProblem, classical_ib_solve, classical_ib_step
from qib.measures import InfoReport, bounds, entropy_bits, mutual_information_bits, report
from qib.problems import (
    Problem, amplitude_damping_problem, bundled, even_process, load_problem, phase_damping_problem,
)
from qib.solver import (
    EncodingSolution, MemoryKind, SolverConfig, classical_step, extract_encoding, h_operator, make_initial,
    quantum_step, solve,
)
from qib.states import ConditionalOperator, DensityMatrix, PureStateVector, QuantumChannel

__version__ = "0.1.0"
