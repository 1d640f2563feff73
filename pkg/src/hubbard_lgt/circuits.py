"""Gate-level circuits for the direct and gauge-theory encodings.

The hopping blocks are built from the two fixed basis-change blocks ``F`` and
``G``: conjugating ``RY(a) (x) RY(-a)`` by them yields ``exp(i a (XX+YY)/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SPECIES, LgtCouplings, ModelParams, QubitLayout, make_layout
from .qsim import Circuit, GateOp, cnot, h, rx, ry, rz, s, x, z


class CircuitError(ValueError):
    pass


def f_block(a: int, b: int) -> list[GateOp]:
    return [
        h(a), h(b), s(a), s(b), h(a), h(b),
        cnot(a, b),
        h(b), z(b),
        s(a), s(b), h(a), h(b),
    ]


def g_block(a: int, b: int) -> list[GateOp]:
    return [
        h(a), h(b), z(a), s(b), s(a), h(b),
        cnot(a, b),
        h(a), h(b), z(a), z(b), s(a), s(b), h(a), h(b),
    ]


def hopping_gates(a: int, b: int, theta: float) -> list[GateOp]:
    """exp(i theta (S+_a S-_b + h.c.)) with S = Pauli/2; two CNOTs."""
    return f_block(a, b) + [ry(a, theta), ry(b, -theta)] + g_block(a, b)


def block_A(j: int, species: str, J: float, dt: float, layout: QubitLayout,
            sign: int = 1) -> list[GateOp]:
    """Hopping on bond ``j`` of one species for the direct encoding.

    ``sign`` is the boundary parity sign folded into ``J``.
    """
    a, b = (layout.site_qubit(i, species) for i in layout.bond_sites(j))
    return hopping_gates(a, b, sign * J * dt)


def block_B(j: int, U: float, dt: float, layout: QubitLayout) -> list[GateOp]:
    """exp(-i U dt S^z_up S^z_down) on site ``j``."""
    up, dn = layout.site_qubit(j, "up"), layout.site_qubit(j, "down")
    return [cnot(up, dn), rz(dn, U * dt / 2), cnot(up, dn)]


def block_C(j: int, species: str, theta: float, layout: QubitLayout) -> list[GateOp]:
    """exp(i theta Z_bond (S+S- + h.c.)) on bond ``j``; six CNOTs.

    The bond qubit flips the sign of the middle rotations through CNOT
    conjugation, since X RY(a) X = RY(-a).
    """
    a, b = (layout.site_qubit(i, species) for i in layout.bond_sites(j))
    t = layout.bond_qubit(j)
    return (
        f_block(a, b)
        + [cnot(t, a), cnot(t, b), ry(a, theta), ry(b, -theta), cnot(t, b), cnot(t, a)]
        + g_block(a, b)
    )


def block_D(j: int, g_int: float, dt: float, layout: QubitLayout) -> list[GateOp]:
    """exp(-i g_int dt X_left X_right) on the two bonds meeting at site ``j``."""
    left, right = (layout.bond_qubit(bd) for bd in layout.site_bonds(j))
    return [cnot(left, right), rx(left, 2 * g_int * dt), cnot(left, right)]


def hopping_angle_lgt(couplings: LgtCouplings, dt: float) -> float:
    return -couplings.g_hop * dt


def _bond_order(n_sites: int) -> list[int]:
    return [b for b in range(n_sites) if b % 2 == 0] + [b for b in range(n_sites) if b % 2 == 1]


def trotter_step_ops(method: str, params: ModelParams, couplings: LgtCouplings | None,
                     layout: QubitLayout, dt: float | None = None) -> list[GateOp]:
    dt = params.dt if dt is None else dt
    ops: list[GateOp] = []
    if method == "direct":
        for sp in SPECIES:
            for b in _bond_order(params.n_sites):
                ops += block_A(b, sp, params.J, dt, layout, params.hopping_sign(b, sp))
        for j in range(params.n_sites):
            ops += block_B(j, params.U, dt, layout)
    elif method == "lgt":
        if couplings is None:
            raise CircuitError("the lgt Trotter step needs calibrated couplings")
        theta = hopping_angle_lgt(couplings, dt)
        for sp in SPECIES:
            for b in _bond_order(params.n_sites):
                ops += block_C(b, sp, params.hopping_sign(b, sp) * theta, layout)
        for j in [j for j in range(params.n_sites) if j % 2 == 0] + \
                 [j for j in range(params.n_sites) if j % 2 == 1]:
            ops += block_D(j, couplings.g_int, dt, layout)
    else:
        raise CircuitError(f"unknown method {method!r}")
    return ops


def trotter_step(method: str, params: ModelParams, couplings: LgtCouplings | None = None,
                 layout: QubitLayout | None = None) -> Circuit:
    layout = layout or make_layout(method, params.n_sites)
    circ = Circuit(layout.n_qubits, basis_plan=plan_for(layout))
    circ.extend(trotter_step_ops(method, params, couplings, layout))
    return circ


def plan_for(layout: QubitLayout) -> str:
    return layout.basis_plan() if layout.method == "lgt" else "Z" * layout.n_qubits


def initial_state_ops(layout: QubitLayout) -> list[GateOp]:
    """Domain wall (up fermions on the left half, down on the right), plus the
    alternating bond cat state for the gauge encoding."""
    n = layout.n_sites
    ops = [x(layout.site_qubit(i, "up")) for i in range(n // 2)]
    ops += [x(layout.site_qubit(i, "down")) for i in range(n // 2, n)]
    if layout.method == "lgt":
        bonds = layout.bond_qubits()
        ops.append(h(bonds[0]))
        ops += [cnot(bonds[k], bonds[k + 1]) for k in range(len(bonds) - 1)]
        ops += [x(q) for k, q in enumerate(bonds) if k % 2 == 1]
        ops += [h(q) for q in bonds]
    return ops


def initial_state_circuit(method: str, n_sites: int) -> Circuit:
    layout = make_layout(method, n_sites)
    return Circuit(layout.n_qubits, initial_state_ops(layout), plan_for(layout))


@dataclass
class StagedCircuit:
    """Initial-state preparation followed by Trotter steps, with the op index at
    which every depth ends (``boundaries[k]`` = end of step ``k``, 0 = prep)."""

    circuit: Circuit
    boundaries: list[int]

    @property
    def max_depth(self) -> int:
        return len(self.boundaries) - 1


def build_evolution(method: str, params: ModelParams, couplings: LgtCouplings | None,
                    n_steps: int | None = None, dt: float | None = None) -> StagedCircuit:
    layout = make_layout(method, params.n_sites)
    n_steps = params.n_steps if n_steps is None else n_steps
    circ = Circuit(layout.n_qubits, initial_state_ops(layout), plan_for(layout))
    boundaries = [len(circ)]
    step = trotter_step_ops(method, params, couplings, layout, dt=dt)
    for _ in range(n_steps):
        circ.extend(step)
        boundaries.append(len(circ))
    return StagedCircuit(circ, boundaries)


def resource_estimate(circuit: Circuit) -> dict:
    cnots = singles = 0
    level = np.zeros(circuit.n_qubits, dtype=np.int64)
    for op in circuit.ops:
        if op.kind == "CNOT":
            cnots += 1
        else:
            singles += 1
        d = max(level[q] for q in op.targets) + 1
        for q in op.targets:
            level[q] = d
    return {"cnots": cnots, "singles": singles, "depth": int(level.max(initial=0))}
