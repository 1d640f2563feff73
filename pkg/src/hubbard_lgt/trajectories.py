"""Fast exact sampler for Pauli-trajectory noise on staged circuits.

A trajectory is fully determined by its noise insertions, which are drawn
up front. Gate groups without an insertion are applied as one fused matrix,
the noiseless prefix before the first insertion is taken from cached
checkpoints, and one trajectory yields one shot at every depth of a staged
circuit (each depth's prefix has exactly the marginal distribution of the
shorter circuit).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import StagedCircuit
from .qsim import (
    NoiseModel,
    StateVector,
    apply_gate,
    apply_matrix,
    check_norm,
    circuit_unitary,
    insert_pauli,
    new_state,
    rotate_to_plan,
    sample_indices,
    sample_noise_events,
)

ZERO_CUTOFF = 1e-15


def trajectory_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of ``stream`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


@dataclass(frozen=True)
class _Group:
    start: int
    stop: int
    qubits: tuple[int, ...]
    matrix: np.ndarray


def partition(ops, boundaries, max_qubits: int = 3) -> list[tuple[int, int, tuple[int, ...]]]:
    """Greedy runs of consecutive ops touching at most ``max_qubits`` qubits,
    never straddling a depth boundary."""
    cuts = set(boundaries)
    groups = []
    i = 0
    while i < len(ops):
        qs = set(ops[i].targets)
        j = i + 1
        while j < len(ops) and j not in cuts:
            merged = qs | set(ops[j].targets)
            if len(merged) > max_qubits:
                break
            qs = merged
            j += 1
        groups.append((i, j, tuple(sorted(qs))))
        i = j
    return groups


class TrajectorySampler:
    def __init__(self, staged: StagedCircuit, noise: NoiseModel | None,
                 max_group_qubits: int = 3):
        self.staged = staged
        self.circuit = staged.circuit
        self.noise = noise
        self.plan = self.circuit.basis_plan
        ops = self.circuit.ops
        cache: dict = {}
        self.groups: list[_Group] = []
        for start, stop, qs in partition(ops, staged.boundaries, max_group_qubits):
            key = (qs, tuple(ops[start:stop]))
            mat = cache.get(key)
            if mat is None:
                mat = circuit_unitary(ops[start:stop], qs)
                mat[np.abs(mat) < ZERO_CUTOFF] = 0.0
                cache[key] = mat
            self.groups.append(_Group(start, stop, qs, mat))
        self._group_starts = np.array([g.start for g in self.groups], dtype=np.int64)
        self.checkpoints: list[StateVector] = []
        self.cdfs: list[np.ndarray] = []
        self._build_checkpoints()

    @property
    def max_depth(self) -> int:
        return self.staged.max_depth

    def _apply_range(self, state: StateVector, start: int, stop: int, events: dict) -> None:
        g = int(np.searchsorted(self._group_starts, start))
        ops = self.circuit.ops
        while g < len(self.groups) and self.groups[g].start < stop:
            grp = self.groups[g]
            hit = [i for i in events if grp.start <= i < grp.stop] if events else []
            if not hit:
                apply_matrix(state, grp.qubits, grp.matrix)
            else:
                for i in range(grp.start, grp.stop):
                    apply_gate(state, ops[i])
                    pauli = events.get(i)
                    if pauli is not None:
                        insert_pauli(state, ops[i], pauli)
            g += 1

    def _build_checkpoints(self) -> None:
        state = new_state(self.circuit.n_qubits)
        prev = 0
        for b in self.staged.boundaries:
            self._apply_range(state, prev, b, {})
            check_norm(state)
            self.checkpoints.append(state.copy())
            self.cdfs.append(np.cumsum(rotate_to_plan(state, self.plan).probabilities()))
            prev = b

    def noiseless_samples(self, depth: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_indices(self.cdfs[depth], n, rng)

    def sample(self, rng: np.random.Generator, max_depth: int | None = None,
               wanted=None) -> np.ndarray:
        """One shot (a basis index) at every depth ``0..max_depth``.

        Depths with ``wanted[d]`` false are evolved through but not measured;
        their entry is -1. The random stream is consumed identically whatever
        ``max_depth`` and ``wanted`` are, so each depth's outcome depends only
        on the stream.
        """
        max_depth = self.max_depth if max_depth is None else max_depth
        bounds = self.staged.boundaries
        events = sample_noise_events(self.circuit.ops, self.noise, rng)
        readout = rng.random((self.max_depth + 1, 2))
        stop = bounds[max_depth]
        first = min(events) if events else stop
        out = np.full(max_depth + 1, -1, dtype=np.int64)
        state = None
        for d in range(max_depth + 1):
            measure = wanted is None or wanted[d]
            if bounds[d] <= first:
                if measure:
                    out[d] = _pick(self.cdfs[d], readout[d, 0])
                continue
            if state is None:
                state = (self.checkpoints[d - 1].copy() if d > 0
                         else new_state(self.circuit.n_qubits))
            self._apply_range(state, bounds[d - 1] if d > 0 else 0, bounds[d], events)
            if measure:
                check_norm(state)
                out[d] = sample_in_plan(state, self.plan, readout[d])
        return out


def _pick(cdf: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))


def _walsh_hadamard(m: int) -> np.ndarray:
    idx = np.arange(1 << m)
    par = np.zeros((1 << m, 1 << m), dtype=np.int64)
    both = idx[:, None] & idx[None, :]
    for p in range(m):
        par ^= (both >> p) & 1
    return (1 - 2 * par) / np.sqrt(1 << m)


_WH_CACHE: dict[int, np.ndarray] = {}


def sample_in_plan(state: StateVector, plan: str, rng) -> int:
    """Draw one basis index in the readout frame of ``plan`` without copying
    the state when the X-read qubits are the highest ones.

    ``rng`` is a Generator or a pair of uniforms in [0, 1).
    """
    u = rng.random(2) if isinstance(rng, np.random.Generator) else rng
    n = state.n_qubits
    m = plan.count("X")
    if m == 0:
        return _pick(np.cumsum(state.probabilities()), u[0])
    if plan != "Z" * (n - m) + "X" * m:
        return _pick(np.cumsum(rotate_to_plan(state, plan).probabilities()), u[0])
    # H on the top qubits leaves the marginal of the low (Z-read) bits intact
    grid = state.amplitudes.reshape(1 << m, 1 << (n - m))
    low = _pick(np.cumsum((np.abs(grid) ** 2).sum(axis=0)), u[0])
    wh = _WH_CACHE.get(m)
    if wh is None:
        wh = _WH_CACHE.setdefault(m, _walsh_hadamard(m))
    rotated = wh @ grid[:, low]
    high = _pick(np.cumsum(np.abs(rotated) ** 2), u[1])
    return high * (1 << (n - m)) + low
