"""OpenQASM 2.0 export and a parser for the exported subset.

Readout basis changes are emitted after a ``barrier`` so the parser can tell
them apart from circuit gates.
"""
from __future__ import annotations

import re

from .qsim import Circuit, GateOp

_NAMES = {"X": "x", "Y": "y", "Z": "z", "H": "h", "S": "s",
          "RX": "rx", "RY": "ry", "RZ": "rz", "CNOT": "cx"}
_KINDS = {v: k for k, v in _NAMES.items()}


class QasmError(ValueError):
    pass


def export_qasm(circuit: Circuit, measure: bool = True) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.n_qubits}];"]
    if measure:
        lines.append(f"creg c[{circuit.n_qubits}];")
    for op in circuit.ops:
        name = _NAMES.get(op.kind)
        if name is None:
            raise QasmError(f"gate {op.kind} has no QASM name")
        args = ",".join(f"q[{t}]" for t in op.targets)
        if op.angle is not None:
            lines.append(f"{name}({op.angle!r}) {args};")
        else:
            lines.append(f"{name} {args};")
    if measure:
        lines.append("barrier q;")
        for q, b in enumerate(circuit.basis_plan):
            if b == "X":
                lines.append(f"h q[{q}];")
        for q in range(circuit.n_qubits):
            lines.append(f"measure q[{q}] -> c[{q}];")
    return "\n".join(lines) + "\n"


_GATE = re.compile(r"^(\w+)(?:\(([^)]*)\))?\s+(.+)$")
_QARG = re.compile(r"^q\[(\d+)\]$")


def parse_qasm(text: str) -> Circuit:
    n_qubits = None
    ops: list[GateOp] = []
    readout_h: set[int] = set()
    after_barrier = False
    for raw in text.splitlines():
        line = raw.split("//", 1)[0].strip()
        if not line or line.startswith(("OPENQASM", "include", "creg")):
            continue
        if not line.endswith(";"):
            raise QasmError(f"missing semicolon: {raw!r}")
        line = line[:-1].strip()
        if line.startswith("qreg"):
            m = re.match(r"qreg\s+q\[(\d+)\]$", line)
            if not m:
                raise QasmError(f"unsupported register declaration {raw!r}")
            n_qubits = int(m.group(1))
            continue
        if n_qubits is None:
            raise QasmError("gate before qreg declaration")
        if line.startswith("barrier"):
            after_barrier = True
            continue
        if line.startswith("measure"):
            continue
        m = _GATE.match(line)
        if not m:
            raise QasmError(f"cannot parse {raw!r}")
        name, angle, args = m.groups()
        kind = _KINDS.get(name)
        if kind is None:
            raise QasmError(f"unsupported gate {name!r}")
        targets = []
        for a in args.split(","):
            qm = _QARG.match(a.strip())
            if not qm:
                raise QasmError(f"bad qubit argument {a!r}")
            targets.append(int(qm.group(1)))
        if after_barrier:
            if kind != "H" or len(targets) != 1:
                raise QasmError("only h may follow the readout barrier")
            readout_h.add(targets[0])
            continue
        ops.append(GateOp(kind, tuple(targets), float(angle) if angle is not None else None))
    if n_qubits is None:
        raise QasmError("no qreg declaration")
    plan = "".join("X" if q in readout_h else "Z" for q in range(n_qubits))
    return Circuit(n_qubits, ops, plan)
