"""Acceptance criteria, one test each. Every test prints a single
``criterion N PASS|FAIL: ...`` line; the lines are repeated in the pytest
summary. Criteria 7 and 8 share one production run per method and take
roughly half an hour on one core.

Run directly with ``python tests/test_acceptance.py`` for the lines alone.
"""
import time

import numpy as np
import pytest

from hubbard_lgt.circuits import build_evolution, trotter_step
from hubbard_lgt.experiment import ExperimentConfig, noiseless_trotter_curve, run_experiment
from hubbard_lgt.mitigation import ShotBatch, acceptance_mask, rule_set
from hubbard_lgt.model import LgtCouplings, ModelParams, make_layout
from hubbard_lgt.oracle import (
    ReferenceEvolution,
    build_direct_hamiltonian,
    build_fermion_hamiltonian,
    calibrate_lgt,
    charge_string,
    correlator_exact,
    direct_spectrum,
    domain_wall_pair,
    particle_sector_indices,
    sector_spectrum_lgt,
    selection_isometry,
    wilson_loop_string,
)
from hubbard_lgt.qsim import (
    Circuit,
    NoiseModel,
    circuit_unitary,
    cnot,
    expectation_pauli,
    run_trajectory,
    x,
)
from hubbard_lgt.trajectories import TrajectorySampler, trajectory_rng

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script outside pytest
    ACCEPTANCE_LINES = []

DEFAULT_SETUP = ModelParams(n_sites=6, J=1.0, U=2.0, dt=0.3)


def report(label, ok, detail):
    line = f"criterion {label} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------

def test_criterion_1_sector_spectrum_vs_full_direct():
    t0 = time.time()
    c = calibrate_lgt(DEFAULT_SETUP)
    lgt = sector_spectrum_lgt(DEFAULT_SETUP, c)
    full = direct_spectrum(DEFAULT_SETUP)
    dt = time.time() - t0
    if len(lgt) != len(full):
        report(1, False, f"sector holds {len(lgt)} eigenvalues, the direct spectrum {len(full)}; "
                         f"elementwise comparison impossible ({dt:.1f}s)")
    err = float(np.max(np.abs(lgt - full)))
    report(1, err < 1e-9 and dt < 60, f"max |dE| = {err:.2e} ({dt:.1f}s)")


def test_criterion_1a_sector_spectrum_vs_even_direct():
    t0 = time.time()
    c = calibrate_lgt(DEFAULT_SETUP)
    lgt = sector_spectrum_lgt(DEFAULT_SETUP, c)
    even = direct_spectrum(DEFAULT_SETUP, even_only=True)
    dt = time.time() - t0
    err = float(np.max(np.abs(lgt - even))) if len(lgt) == len(even) else np.inf
    report("1a", err < 1e-9 and dt < 60,
           f"{len(lgt)} sector eigenvalues vs even-N_tot direct blocks, max |dE| = {err:.2e}, "
           f"couplings g_hop={c.g_hop:g} g_int={c.g_int:g} ({dt:.1f}s)")


# 2 ---------------------------------------------------------------------------

def _phase_distance(u, v):
    ph = np.vdot(v.ravel(), u.ravel())
    ph = ph / abs(ph)
    return float(np.linalg.norm(u - ph * v, 2))


def test_criterion_2_block_unitaries():
    from scipy.linalg import expm

    from hubbard_lgt.circuits import block_A, block_B, block_C, block_D

    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1.0, -1.0]).astype(complex)
    hop = (np.kron(X, X) + np.kron(Y, Y)) / 2
    lay_d, lay_g = make_layout("direct", 6), make_layout("lgt", 6)
    J, U, dt, theta, g = 1.0, 2.0, 0.3, -0.37, 0.5
    errs = {}
    ops = block_A(1, "up", J, dt, lay_d)
    errs["A"] = _phase_distance(
        circuit_unitary(ops, [lay_d.site_qubit(1, "up"), lay_d.site_qubit(2, "up")]),
        expm(1j * J * dt * hop))
    ops = block_B(4, U, dt, lay_d)
    errs["B"] = _phase_distance(
        circuit_unitary(ops, [lay_d.site_qubit(4, "up"), lay_d.site_qubit(4, "down")]),
        expm(-1j * U * dt * np.kron(Z, Z) / 4))
    ops_c = block_C(2, "down", theta, lay_g)
    qs = [lay_g.site_qubit(2, "down"), lay_g.site_qubit(3, "down"), lay_g.bond_qubit(2)]
    errs["C"] = _phase_distance(circuit_unitary(ops_c, qs),
                                expm(1j * theta * np.kron(Z, hop)))
    ops = block_D(3, g, dt, lay_g)
    left, right = (lay_g.bond_qubit(b) for b in lay_g.site_bonds(3))
    errs["D"] = _phase_distance(circuit_unitary(ops, [left, right]),
                                expm(-1j * g * dt * np.kron(X, X)))
    c_cnots = sum(op.kind == "CNOT" for op in ops_c)
    worst = max(errs.values())
    report(2, worst < 1e-10 and c_cnots == 6,
           "spectral-norm errors " + ", ".join(f"{k}={v:.1e}" for k, v in errs.items())
           + f"; C uses {c_cnots} CNOTs")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_cnot_totals():
    got = {}
    c = LgtCouplings(-1.0, 0.5)
    for n in (2, 4, 6):
        p = ModelParams(n_sites=n)
        got[n] = (trotter_step("direct", p).cnot_count(), trotter_step("lgt", p, c).cnot_count())
    ok = all(d == 6 * n and g == 14 * n for n, (d, g) in got.items())
    report(3, ok, "; ".join(f"N={n}: direct {d}, lgt {g}" for n, (d, g) in got.items()))


# 4 ---------------------------------------------------------------------------

def _lgt_curve_deviation(dt, t_max=3.0):
    params = DEFAULT_SETUP.replace(dt=dt)
    steps = int(round(t_max / dt))
    cfg = ExperimentConfig(method="lgt", dt=dt, n_steps=steps)
    chi = noiseless_trotter_curve(cfg)
    ref = ReferenceEvolution("direct", params)
    exact = np.array([ref.chi(k * dt) for k in range(steps + 1)])
    return float(np.max(np.abs(chi - exact)))


def test_criterion_4_trotter_convergence():
    t0 = time.time()
    d1 = _lgt_curve_deviation(0.05)
    d2 = _lgt_curve_deviation(0.025)
    ratio = d1 / d2
    report(4, d1 < 0.05 and 1.5 <= ratio <= 3.0,
           f"max |chi - ED| over t<=3: {d1:.4f} at dt=0.05, {d2:.4f} at dt=0.025, "
           f"ratio {ratio:.2f} ({time.time() - t0:.0f}s)")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_noiseless_conservation():
    steps = 10
    worst_charge = 0.0
    retentions = []
    for method in ("direct", "lgt"):
        c = calibrate_lgt(DEFAULT_SETUP) if method == "lgt" else None
        layout = make_layout(method, 6)
        sampler = TrajectorySampler(build_evolution(method, DEFAULT_SETUP, c, steps), None)
        rules = rule_set(method, "full", layout, 3, 3)
        rng = np.random.default_rng(5)
        for d in range(steps + 1):
            idx = sampler.noiseless_samples(d, 10000, rng)
            batch = ShotBatch.from_indices(idx, layout.n_qubits, sampler.plan)
            retentions.append(acceptance_mask(batch, rules, layout).mean())
            if method == "lgt":
                st = sampler.checkpoints[d]
                for i in range(6):
                    worst_charge = max(worst_charge,
                                       abs(expectation_pauli(st, charge_string(layout, i)) - 1))
                worst_charge = max(worst_charge,
                                   abs(expectation_pauli(st, wilson_loop_string(layout)) - 1))
    ok = min(retentions) == 1.0 and worst_charge < 1e-8
    report(5, ok, f"min retention {min(retentions):.4f} over 2x11 depths; "
                  f"max |<q_i>-1|, |<Gamma>-1| = {worst_charge:.1e}")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_channel_statistics():
    # X on qubit 0 and CNOTs controlled by it leave Z_0 a +-1 eigenvalue, so
    # the trajectory mean follows the product of per-gate contraction factors
    t0 = time.time()
    noise = NoiseModel.from_eta(0.05)
    n_traj = 100_000
    lines = []
    ok = True
    for m in (4, 12, 24):
        ops = [x(0) if k % 2 == 0 else cnot(0, 1) for k in range(m)]
        n1 = sum(op.kind == "X" for op in ops)
        n2 = m - n1
        sign = (-1) ** n1
        want = sign * (1 - noise.eta1) ** n1 * (1 - noise.eta2) ** n2
        circ = Circuit(2, ops)
        z = np.empty(n_traj)
        for k in range(n_traj):
            st = run_trajectory(circ, noise, trajectory_rng(6, m, k))
            z[k] = expectation_pauli(st, "ZI")
        se = z.std(ddof=1) / np.sqrt(n_traj)
        dev = abs(z.mean() - want) / se
        ok &= dev < 5
        lines.append(f"m={m}: {z.mean():+.4f} vs {want:+.4f} ({dev:.1f} SE)")
    report(6, ok, "; ".join(lines) + f" at 1e5 trajectories ({time.time() - t0:.0f}s)")


# 7 and 8 -----------------------------------------------------------------------

ETA = 0.001
STEPS = 6  # t = 0 .. 1.8, the grid points with t <= 2/J at dt = 0.3


@pytest.fixture(scope="module")
def production(tmp_path_factory):
    cache = tmp_path_factory.mktemp("norm")
    out = {}
    for method in ("direct", "lgt"):
        cfg = ExperimentConfig(method=method, eta=ETA, n_steps=STEPS, postselect="full",
                               normalize=True, seed=2024, cache_dir=str(cache))
        t0 = time.time()
        rows = run_experiment(cfg)
        out[method] = dict(rows=rows, trotter=noiseless_trotter_curve(cfg),
                           seconds=time.time() - t0)
    return out


@pytest.mark.slow
def test_criterion_7_noise_decay_ordering(production):
    trotter = production["direct"]["trotter"]
    # fixed time chosen a priori: the t >= 1 grid point with the largest noiseless |chi|
    ks = [k for k in range(STEPS + 1) if k * DEFAULT_SETUP.dt >= 1.0 - 1e-9]
    k = max(ks, key=lambda k: abs(trotter[k]))
    d = production["direct"]["rows"][k]
    g = production["lgt"]["rows"][k]
    err = float(np.hypot(d.stderr_raw, g.stderr_raw))
    gap = abs(d.chi_raw) - abs(g.chi_raw)
    # the other t >= 1 depths are listed for context only; they do not enter the verdict
    others = []
    for m in ks:
        dm, gm = production["direct"]["rows"][m], production["lgt"]["rows"][m]
        others.append(f"t={dm.t:.1f} gap {abs(dm.chi_raw) - abs(gm.chi_raw):+.4f} "
                      f"(3 sigma {3 * np.hypot(dm.stderr_raw, gm.stderr_raw):.4f})")
    report(7, gap > 3 * err,
           f"t={d.t:.1f}: |chi_raw| direct {abs(d.chi_raw):.4f}, lgt {abs(g.chi_raw):.4f}, "
           f"noiseless {abs(trotter[k]):.4f}, gap {gap:.4f} vs 3 sigma {3 * err:.4f}; "
           + ", ".join(others))


@pytest.mark.slow
def test_criterion_8_mitigation_restoration(production):
    dev = {}
    info = []
    for method in ("direct", "lgt"):
        rows = production[method]["rows"]
        trotter = production[method]["trotter"]
        diffs = np.array([abs(r.chi_norm - trotter[k]) for k, r in enumerate(rows)])
        dev[method] = diffs
        info.append(f"{method}: max {diffs.max():.3f}, mean {diffs.mean():.3f}, "
                    f"min retention {min(r.retention for r in rows):.3f}, "
                    f"trajectories {rows[-1].trajectories} at depth {STEPS}, "
                    f"A({STEPS})={rows[-1].A:.3f}, {production[method]['seconds']:.0f}s")
    ok = (dev["direct"].max() < 0.1 and dev["lgt"].max() < 0.1
          and dev["lgt"].mean() <= 1.25 * dev["direct"].mean())
    report(8, ok, "; ".join(info))


@pytest.mark.slow
def test_mitigated_closer_than_raw(production):
    # not a numbered criterion: the mitigation-ordering property on the same runs
    for method in ("direct", "lgt"):
        rows = production[method]["rows"]
        trotter = production[method]["trotter"]
        raw = np.mean([abs(r.chi_raw - trotter[k]) for k, r in enumerate(rows)])
        mitigated = np.mean([abs(r.chi_norm - trotter[k]) for k, r in enumerate(rows)])
        print(f"{method}: mean |raw - trotter| {raw:.4f}, mean |mitigated - trotter| {mitigated:.4f}")
        assert mitigated <= raw


# 9 -----------------------------------------------------------------------------

def test_criterion_9_boundary_signs():
    t0 = time.time()
    errs = {}
    for n in (4, 6):
        params = ModelParams(n_sites=n)
        idx = particle_sector_indices(n, 3, 3)
        iso = selection_isometry(idx, 1 << (2 * n))
        spin = build_direct_hamiltonian(params.replace(n_up=3, n_down=3)).project(iso)
        fermi = (iso.T @ build_fermion_hamiltonian(params) @ iso).toarray()
        ev_s, ev_f = np.linalg.eigvalsh(spin), np.linalg.eigvalsh(fermi)
        # U n_up n_down and U S^z S^z differ by a constant inside a particle sector
        shift = np.mean(ev_f - ev_s)
        errs[n] = float(np.max(np.abs(ev_f - shift - ev_s)))
    report(9, max(errs.values()) < 1e-9,
           "; ".join(f"N={n}: max |dE| = {e:.1e}" for n, e in errs.items())
           + f" ({time.time() - t0:.1f}s)")


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
