"""The bundled problems (even process, phase damping, amplitude damping with
a redundant qubit) and JSON (de)serialisation of user problems."""
from dataclasses import dataclass, field
import itertools
import json

import numpy as np

from qib.errors import ChannelError, SchemaError, StateError
from qib.states import (
    DensityMatrix, QuantumChannel, amplitude_damping, classical_channel, compose, extend_channel,
    partial_trace_channel, phase_damping, validate_state,
)


@dataclass(frozen=True)
class Problem:
    rho_x: DensityMatrix
    relevance: QuantumChannel
    label: str = "problem"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.relevance.din != self.rho_x.dim:
            raise ChannelError(
                f"relevance channel takes dimension {self.relevance.din}, initial state has {self.rho_x.dim}")

    @property
    def d_x(self):
        return self.rho_x.dim

    @property
    def d_y(self):
        return self.relevance.dout

    @property
    def rho_r(self):
        return self.rho_x.mat


# even process: two hidden states A (index 0) and B (index 1).
# EVEN_T[s][a, b] = P(emit s, move to b | in a)
EVEN_T = (
    np.array([[0.5, 0.0], [0.0, 0.0]]),
    np.array([[0.0, 0.5], [1.0, 0.0]]),
)
EVEN_STATIONARY = np.array([2.0 / 3.0, 1.0 / 3.0])


def _word_matrix(word):
    m = np.eye(2)
    for s in word:
        m = m @ EVEN_T[s]
    return m


def even_process_distribution(history_len=3, future_len=2):
    """``p(x)`` over histories and ``p(y|x)`` (indexed [y, x]) over futures.

    Words are indexed by their binary value, most significant bit first.
    Futures follow the history in the same stationary realisation.
    """
    if history_len < 1 or future_len < 1:
        raise ValueError("history and future lengths must be >= 1")
    ones = np.ones(2)
    histories = list(itertools.product((0, 1), repeat=history_len))
    futures = list(itertools.product((0, 1), repeat=future_len))
    p_x = np.zeros(len(histories))
    p_xy = np.zeros((len(futures), len(histories)))
    for i, x in enumerate(histories):
        left = EVEN_STATIONARY @ _word_matrix(x)
        p_x[i] = left @ ones
        for j, y in enumerate(futures):
            p_xy[j, i] = left @ _word_matrix(y) @ ones
    p_y_given_x = np.zeros_like(p_xy)
    for i in range(len(histories)):
        if p_x[i] > 0:
            p_y_given_x[:, i] = p_xy[:, i] / p_x[i]
        else:
            # unreachable history: any column works, keep the channel stochastic
            p_y_given_x[:, i] = 1.0 / len(futures)
    return p_x, p_y_given_x


def classical_problem(p_x, p_y_given_x, label="classical", params=None) -> Problem:
    p_x = np.asarray(p_x, dtype=float)
    if np.any(p_x < 0) or abs(p_x.sum() - 1.0) > 1e-12:
        raise StateError("p(x) must be a probability vector")
    rho = validate_state(np.diag(p_x).astype(complex), (len(p_x),))
    return Problem(rho, classical_channel(p_y_given_x), label, dict(params or {}))


def even_process(history_len=3, future_len=2) -> Problem:
    p_x, p_y_given_x = even_process_distribution(history_len, future_len)
    return classical_problem(p_x, p_y_given_x, "even",
                             {"history_len": history_len, "future_len": future_len})


def _noisy_plus(p):
    plus = np.full((2, 2), 0.5)
    return (1.0 - p) * plus + p * np.eye(2) / 2.0


def _check_unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


def phase_damping_problem(lam=0.5, p=0.3) -> Problem:
    _check_unit("lambda", lam)
    _check_unit("p", p)
    rho = validate_state(_noisy_plus(p), (2,))
    return Problem(rho, phase_damping(lam), "phase-damping", {"lambda": lam, "p": p})


def amplitude_damping_problem(lam=0.7, p=0.3) -> Problem:
    """Noisy |+> on the first qubit, maximally mixed redundant second qubit;
    the relevance channel damps qubit one and discards qubit two."""
    _check_unit("lambda", lam)
    _check_unit("p", p)
    rho = validate_state(np.kron(_noisy_plus(p), np.eye(2) / 2.0), (2, 2))
    damp = extend_channel(amplitude_damping(lam), 2, side="right")
    rel = compose(partial_trace_channel((2, 2), 0), damp, name=f"amplitude_damping({lam:g})+discard")
    return Problem(rho, rel, "amplitude-damping", {"lambda": lam, "p": p})


BUNDLED = {
    "even": even_process,
    "phase-damping": phase_damping_problem,
    "amplitude-damping": amplitude_damping_problem,
}


def bundled(name: str) -> Problem:
    try:
        return BUNDLED[name]()
    except KeyError:
        raise SchemaError(f"unknown bundled problem {name!r}; choose from {sorted(BUNDLED)}") from None


# --- JSON ------------------------------------------------------------------

def encode_matrix(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(doc, what="matrix"):
    try:
        a = np.array(doc, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{what}: not an array of [re, im] pairs ({exc})") from None
    if a.ndim != 3 or a.shape[2] != 2:
        raise SchemaError(f"{what}: expected rows of [re, im] pairs, got array of shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def encode_state(rho: DensityMatrix):
    return {"dims": list(rho.dims), "matrix": encode_matrix(rho.mat)}


def decode_state(doc, what="state") -> DensityMatrix:
    if not isinstance(doc, dict) or "matrix" not in doc:
        raise SchemaError(f"{what}: expected an object with 'matrix' (and optional 'dims')")
    m = decode_matrix(doc["matrix"], what)
    if m.shape[0] != m.shape[1]:
        raise SchemaError(f"{what}: matrix must be square, got {m.shape}")
    dims = doc.get("dims", [m.shape[0]])
    return validate_state(m, dims)


def encode_channel(ch: QuantumChannel):
    return {"din": ch.din, "dout": ch.dout, "name": ch.name, "kraus": [encode_matrix(k) for k in ch.kraus]}


def decode_channel(doc, what="channel") -> QuantumChannel:
    if not isinstance(doc, dict) or not {"din", "dout", "kraus"} <= set(doc):
        raise SchemaError(f"{what}: expected an object with 'din', 'dout', 'kraus'")
    ks = tuple(decode_matrix(k, f"{what}.kraus[{i}]") for i, k in enumerate(doc["kraus"]))
    return QuantumChannel(ks, int(doc["din"]), int(doc["dout"]), doc.get("name", "channel"))


def problem_to_json(problem: Problem) -> dict:
    return {
        "label": problem.label,
        "rho_X": encode_state(problem.rho_x),
        "relevance": encode_channel(problem.relevance),
        "params": dict(problem.params),
    }


def load_problem(doc) -> Problem:
    """Build a Problem from a parsed JSON document (or a JSON string).

    Two shapes are accepted: the full form with ``rho_X`` and ``relevance``,
    or the classical shorthand with ``p_x`` and ``p_y_given_x`` ([y][x]).
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"problem document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("problem document must be a JSON object")
    label = doc.get("label", "problem")
    params = doc.get("params", {})
    if "p_x" in doc:
        if "p_y_given_x" not in doc:
            raise SchemaError("classical shorthand needs both 'p_x' and 'p_y_given_x'")
        return classical_problem(doc["p_x"], doc["p_y_given_x"], label, params)
    if "rho_X" not in doc or "relevance" not in doc:
        raise SchemaError("problem document needs 'rho_X' and 'relevance' (or 'p_x' and 'p_y_given_x')")
    return Problem(decode_state(doc["rho_X"], "rho_X"), decode_channel(doc["relevance"], "relevance"),
                   label, params)


def load_problem_file(path) -> Problem:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read problem file {path}: {exc}") from None
    return load_problem(text)
