"""Model parameters and qubit layouts shared by the circuits and the oracle.

Sites are 0-based. Bond ``b`` joins sites ``b`` and ``(b + 1) % N``; bond
``N - 1`` is the boundary bond closing the ring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

SPECIES = ("up", "down")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    n_sites: int = 6
    J: float = 1.0
    U: float = 2.0
    dt: float = 0.3
    n_steps: int = 10
    # particle numbers fixing the boundary sign of each species' chain
    n_up: int | None = None
    n_down: int | None = None

    def __post_init__(self):
        if self.n_sites < 2 or self.n_sites % 2:
            raise LayoutError(f"n_sites must be even and >= 2, got {self.n_sites}")
        if not (math.isfinite(self.J) and math.isfinite(self.U)):
            raise ValueError("J and U must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        half = self.n_sites // 2
        if self.n_up is None:
            object.__setattr__(self, "n_up", half)
        if self.n_down is None:
            object.__setattr__(self, "n_down", half)
        for n in (self.n_up, self.n_down):
            if not 0 <= n <= self.n_sites:
                raise ValueError(f"particle number {n} outside 0..{self.n_sites}")

    def boundary_sign(self, species: str) -> int:
        """Sign carried by the boundary hopping after the Jordan-Wigner string
        across the ring is replaced by its parity eigenvalue."""
        n = self.n_up if species == "up" else self.n_down
        return -((-1) ** n)

    def hopping_sign(self, bond: int, species: str) -> int:
        return self.boundary_sign(species) if bond == self.n_sites - 1 else 1

    def replace(self, **changes) -> "ModelParams":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return ModelParams(**data)


@dataclass(frozen=True)
class LgtCouplings:
    """Coefficients of ``g_hop * Z_bond (S+S- + h.c.)``, ``g_int * X X`` and
    a constant offset, in the Pauli normalization of the bond qubits."""

    g_hop: float
    g_int: float
    e0: float = 0.0


@dataclass(frozen=True)
class QubitLayout:
    method: str
    n_sites: int
    fermion: dict = field(repr=False)
    bond: dict = field(repr=False)

    @property
    def n_qubits(self) -> int:
        return len(self.fermion) + len(self.bond)

    def site_qubit(self, site: int, species: str) -> int:
        return self.fermion[(site % self.n_sites, species)]

    def bond_qubit(self, bond: int) -> int:
        if self.method != "lgt":
            raise LayoutError("the direct layout has no bond qubits")
        return self.bond[bond % self.n_sites]

    def species_qubits(self, species: str) -> list[int]:
        return [self.fermion[(i, species)] for i in range(self.n_sites)]

    def bond_qubits(self) -> list[int]:
        return [self.bond[b] for b in range(len(self.bond))]

    def bond_sites(self, bond: int) -> tuple[int, int]:
        return bond, (bond + 1) % self.n_sites

    def site_bonds(self, site: int) -> tuple[int, int]:
        """Left and right bond of a site."""
        return (site - 1) % self.n_sites, site

    def basis_plan(self) -> str:
        """Fermions read in Z, bond spins in X."""
        plan = ["Z"] * self.n_qubits
        for q in self.bond.values():
            plan[q] = "X"
        return "".join(plan)


def make_layout(method: str, n_sites: int) -> QubitLayout:
    if method not in ("direct", "lgt"):
        raise LayoutError(f"unknown method {method!r}")
    if n_sites < 2 or n_sites % 2:
        raise LayoutError(f"n_sites must be even and >= 2, got {n_sites}")
    fermion = {}
    for i in range(n_sites):
        fermion[(i, "up")] = i
        fermion[(i, "down")] = n_sites + i
    bond = {}
    if method == "lgt":
        bond = {b: 2 * n_sites + b for b in range(n_sites)}
    return QubitLayout(method, n_sites, fermion, bond)
