"""Dense statevector engine.

Qubit ``q`` is bit ``q`` of the basis index, so ``new_state(2, 1)`` is the
state with qubit 0 set. Pauli strings are written with character ``k``
acting on qubit ``k``.

Gates mutate the state in place and return it; ``measure_shot`` never
touches its input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

MAX_QUBITS = 24
NORM_TOL = 1e-8

SINGLE_QUBIT_KINDS = ("X", "Y", "Z", "H", "S", "RX", "RY", "RZ")
ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = SINGLE_QUBIT_KINDS + ("CNOT",)

_SQ2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
PAULI_LABELS = "IXYZ"


class SimulationError(ValueError):
    """Raised on invalid states, gates or circuits."""


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Matrix of a gate kind. CNOT is returned in (control, target) order,
    with the control as the *first* tensor factor."""
    if kind in _FIXED:
        return _FIXED[kind]
    if kind == "CNOT":
        return CNOT_MATRIX
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array(
            [[complex(c, -s), 0], [0, complex(c, s)]], dtype=complex
        )
    raise SimulationError(f"unknown gate kind {kind!r}")


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unsupported gate kind {self.kind!r}")
        arity = 2 if self.kind == "CNOT" else 1
        if len(self.targets) != arity:
            raise SimulationError(f"{self.kind} takes {arity} target(s)")
        if len(set(self.targets)) != arity:
            raise SimulationError(f"duplicate targets {self.targets}")
        if any(q < 0 for q in self.targets):
            raise SimulationError(f"negative qubit index in {self.targets}")
        if (self.kind in ROTATION_KINDS) != (self.angle is not None):
            raise SimulationError(f"{self.kind}: angle present iff rotation")
        if self.angle is not None and not math.isfinite(self.angle):
            raise SimulationError(f"non-finite angle {self.angle}")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind == "CNOT"

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.angle)


# short constructors, used heavily by the circuit builders
def x(q): return GateOp("X", (q,))
def y(q): return GateOp("Y", (q,))
def z(q): return GateOp("Z", (q,))
def h(q): return GateOp("H", (q,))
def s(q): return GateOp("S", (q,))
def rx(q, theta): return GateOp("RX", (q,), float(theta))
def ry(q, theta): return GateOp("RY", (q,), float(theta))
def rz(q, theta): return GateOp("RZ", (q,), float(theta))
def cnot(c, t): return GateOp("CNOT", (c, t))


@dataclass
class Circuit:
    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    basis_plan: str | None = None

    def __post_init__(self):
        if self.basis_plan is None:
            self.basis_plan = "Z" * self.n_qubits
        self._check_plan(self.basis_plan)
        for op in self.ops:
            self._check_op(op)

    def _check_plan(self, plan: str):
        if len(plan) != self.n_qubits or set(plan) - {"Z", "X"}:
            raise SimulationError(f"bad basis plan {plan!r}")

    def _check_op(self, op: GateOp):
        if max(op.targets) >= self.n_qubits:
            raise SimulationError(
                f"{op} addresses a qubit outside a {self.n_qubits}-qubit circuit"
            )

    def append(self, op: GateOp) -> None:
        self._check_op(op)
        self.ops.append(op)

    def extend(self, ops: Iterable[GateOp]) -> None:
        for op in ops:
            self.append(op)

    def cnot_count(self) -> int:
        return sum(op.kind == "CNOT" for op in self.ops)

    def __len__(self) -> int:
        return len(self.ops)


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing strengths for two-qubit (``eta2``) and one-qubit gates."""

    eta2: float
    eta1: float

    def __post_init__(self):
        for p in (self.eta1, self.eta2):
            if not 0.0 <= p <= 1.0:
                raise SimulationError(f"depolarizing parameter {p} not in [0, 1]")

    @classmethod
    def from_eta(cls, eta: float) -> "NoiseModel":
        return cls(eta2=eta, eta1=0.1 * eta)

    @property
    def is_noiseless(self) -> bool:
        return self.eta1 == 0.0 and self.eta2 == 0.0


class StateVector:
    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        if amplitudes.shape != (1 << n_qubits,):
            raise SimulationError("amplitude array must have length 2**n_qubits")
        self.n_qubits = n_qubits
        self.amplitudes = amplitudes

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


@dataclass(frozen=True)
class ShotRecord:
    """One measured bitstring; ``bits[q]`` is the outcome of qubit ``q``."""

    bits: np.ndarray
    basis_plan: str

    def eigenvalues(self) -> np.ndarray:
        """Pauli eigenvalue (+1/-1) reported by each bit in its basis."""
        return 1 - 2 * self.bits.astype(np.int64)


def new_state(n_qubits: int, basis_index: int = 0) -> StateVector:
    if not 0 < n_qubits <= MAX_QUBITS:
        raise SimulationError(f"n_qubits={n_qubits} outside 1..{MAX_QUBITS}")
    if not 0 <= basis_index < (1 << n_qubits):
        raise SimulationError(f"basis index {basis_index} out of range")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[basis_index] = 1.0
    return StateVector(n_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    if max(gate.targets) >= state.n_qubits:
        raise SimulationError(f"{gate} out of range for {state.n_qubits} qubits")
    psi = state.amplitudes
    if gate.kind == "CNOT":
        _kernels.apply_cnot(psi, gate.targets[0], gate.targets[1])
    else:
        m = gate.matrix()
        _kernels.apply_1q(psi, gate.targets[0], m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    return state


def apply_matrix(state: StateVector, qubits: Sequence[int], matrix: np.ndarray) -> StateVector:
    """Apply a dense k-qubit matrix; local bit p of ``matrix`` is ``qubits[p]``.

    Zero entries are skipped, so block-sparse unitaries are cheap.
    """
    order = np.argsort(qubits)
    qs = np.asarray(qubits, dtype=np.int64)[order]
    if not np.array_equal(order, np.arange(len(qubits))):
        perm = _local_permutation(order)
        matrix = matrix[np.ix_(perm, perm)]
    rows, cols = np.nonzero(np.abs(matrix) > 0)
    vals = matrix[rows, cols].astype(np.complex128)
    _kernels.apply_sparse_kq(
        state.amplitudes, qs, rows.astype(np.int64), cols.astype(np.int64), vals
    )
    return state


def _local_permutation(order: np.ndarray) -> np.ndarray:
    # new local bit p holds old local bit order[p]
    k = len(order)
    perm = np.empty(1 << k, dtype=np.int64)
    for new in range(1 << k):
        old = 0
        for p in range(k):
            if (new >> p) & 1:
                old |= 1 << int(order[p])
        perm[new] = old
    return perm


def pauli_masks(pauli: str) -> tuple[int, int, int]:
    xmask = zmask = ny = 0
    for q, ch in enumerate(pauli):
        if ch in "XY":
            xmask |= 1 << q
        if ch in "YZ":
            zmask |= 1 << q
        if ch == "Y":
            ny += 1
        elif ch not in "IXZ":
            raise SimulationError(f"bad Pauli symbol {ch!r}")
    return xmask, zmask, ny


def apply_pauli(state: StateVector, pauli: str) -> StateVector:
    if len(pauli) != state.n_qubits:
        raise SimulationError("Pauli string length must equal n_qubits")
    xm, zm, ny = pauli_masks(pauli)
    if xm or zm:
        _kernels.apply_pauli_masks(state.amplitudes, xm, zm, ny)
    return state


def expectation_pauli(state: StateVector, pauli) -> float:
    """<psi|P|psi> for a Pauli string or a ``(coeff, string)`` pair / list of pairs."""
    if isinstance(pauli, str):
        terms = [(1.0, pauli)]
    elif isinstance(pauli, tuple) and len(pauli) == 2 and isinstance(pauli[1], str):
        terms = [pauli]
    else:
        terms = list(pauli)
    total = 0.0 + 0.0j
    for coeff, string in terms:
        if len(string) != state.n_qubits:
            raise SimulationError(
                f"Pauli string of length {len(string)} on {state.n_qubits} qubits"
            )
        xm, zm, ny = pauli_masks(string)
        total += coeff * _kernels.pauli_expectation(state.amplitudes, xm, zm, ny)
    if abs(total.imag) > 1e-12 * max(1.0, abs(total.real)):
        raise SimulationError(f"non-real expectation {total}; operator not Hermitian?")
    return float(total.real)


def single_pauli(n_qubits: int, ops: dict[int, str]) -> str:
    """Build a Pauli string from a sparse ``{qubit: symbol}`` map."""
    chars = ["I"] * n_qubits
    for q, p in ops.items():
        chars[q] = p
    return "".join(chars)


# -- noise -------------------------------------------------------------------

def event_probability(arity: int, p: float) -> float:
    return p * (4**arity - 1) / 4**arity


def sample_depolarizing_event(arity: int, p: float, rng: np.random.Generator):
    """Draw the Pauli inserted by one depolarizing channel, or ``None``.

    The result is a string of length ``arity`` over ``IXYZ`` that is never all
    identity. Exactly one uniform is consumed per call.
    """
    return _event_from_uniform(arity, p, rng.random())


def _event_from_uniform(arity: int, p: float, u: float):
    if u >= event_probability(arity, p):
        return None
    # below threshold, u / (p / 4**k) is uniform on [0, 4**k - 1)
    idx = min(int(u / (p / 4**arity)), 4**arity - 2) + 1
    if arity == 1:
        return PAULI_LABELS[idx]
    return PAULI_LABELS[idx // 4] + PAULI_LABELS[idx % 4]


def sample_noise_events(ops: Sequence[GateOp], noise: NoiseModel | None,
                        rng: np.random.Generator) -> dict[int, str]:
    """Noise insertions for a whole gate list: ``{op index: pauli}``.

    Consumes one uniform per op in order, the same stream
    ``sample_depolarizing_event`` would consume gate by gate.
    """
    if noise is None or noise.is_noiseless or not ops:
        return {}
    u = rng.random(len(ops))
    arity = np.fromiter((2 if op.kind == "CNOT" else 1 for op in ops), dtype=np.int64,
                        count=len(ops))
    p = np.where(arity == 2, noise.eta2, noise.eta1)
    thresh = p * (4.0**arity - 1) / 4.0**arity
    events = {}
    for i in np.flatnonzero(u < thresh):
        events[int(i)] = _event_from_uniform(int(arity[i]), float(p[i]), float(u[i]))
    return events


def insert_pauli(state: StateVector, op: GateOp, pauli: str) -> None:
    for q, ch in zip(op.targets, pauli):
        if ch != "I":
            apply_gate(state, GateOp(ch, (q,)))


def run_trajectory(circuit: Circuit, noise: NoiseModel | None,
                   rng: np.random.Generator | None = None,
                   initial: StateVector | None = None) -> StateVector:
    """Run one Pauli-trajectory of ``circuit`` starting from ``|0...0>``."""
    state = initial.copy() if initial is not None else new_state(circuit.n_qubits)
    if state.n_qubits != circuit.n_qubits:
        raise SimulationError("initial state and circuit qubit counts differ")
    events = {} if rng is None else sample_noise_events(circuit.ops, noise, rng)
    if noise is not None and not noise.is_noiseless and rng is None:
        raise SimulationError("noisy trajectories need a random stream")
    for i, op in enumerate(circuit.ops):
        apply_gate(state, op)
        pauli = events.get(i)
        if pauli is not None:
            insert_pauli(state, op, pauli)
    check_norm(state)
    return state


def check_norm(state: StateVector, tol: float = NORM_TOL) -> None:
    drift = abs(state.norm_squared() - 1.0)
    if drift > tol:
        raise SimulationError(f"state norm drifted by {drift:.3e}")


# -- measurement ---------------------------------------------------------------

def rotate_to_plan(state: StateVector, basis_plan: str) -> StateVector:
    """Noiseless H on every qubit read out in X. Returns a new state."""
    rotated = state.copy()
    for q, b in enumerate(basis_plan):
        if b == "X":
            apply_gate(rotated, h(q))
    return rotated


def index_to_bits(indices, n_qubits: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    return ((indices[..., None] >> np.arange(n_qubits)) & 1).astype(np.uint8)


def measure_shot(state: StateVector, basis_plan: str,
                 rng: np.random.Generator) -> ShotRecord:
    check_norm(state)
    probs = rotate_to_plan(state, basis_plan).probabilities()
    idx = sample_indices(np.cumsum(probs), 1, rng)[0]
    return ShotRecord(index_to_bits(idx, state.n_qubits), basis_plan)


def sample_indices(cdf: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def circuit_unitary(ops: Sequence[GateOp], qubits: Sequence[int]) -> np.ndarray:
    """Unitary of ``ops`` restricted to ``qubits`` (local bit p = ``qubits[p]``),
    obtained by running apply_gate on every local basis state."""
    local = {q: p for p, q in enumerate(qubits)}
    k = len(qubits)
    remapped = [GateOp(op.kind, tuple(local[q] for q in op.targets), op.angle) for op in ops]
    cols = []
    for b in range(1 << k):
        st = new_state(k, b)
        for op in remapped:
            apply_gate(st, op)
        cols.append(st.amplitudes)
    return np.stack(cols, axis=1)
