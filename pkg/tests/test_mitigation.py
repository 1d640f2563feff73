import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbard_lgt.circuits import build_evolution
from hubbard_lgt.mitigation import (
    BasisMismatch,
    CorrelatorEstimate,
    MitigationError,
    PostSelectionRule,
    ShotBatch,
    acceptance_mask,
    apply_normalization,
    charge_eigenvalue,
    collect_shots,
    estimate_chi,
    estimate_normalization,
    gather,
    global_numbers,
    postselect,
    rule_set,
)
from hubbard_lgt.model import LgtCouplings, ModelParams, make_layout
from hubbard_lgt.oracle import (
    ReferenceEvolution,
    charge_string,
    correlator_exact,
    domain_wall_pair,
)
from hubbard_lgt.qsim import (
    NoiseModel,
    ShotRecord,
    expectation_pauli,
    measure_shot,
    rotate_to_plan,
    run_trajectory,
    single_pauli,
)
from hubbard_lgt.trajectories import TrajectorySampler

LGT6 = make_layout("lgt", 6)
DIR6 = make_layout("direct", 6)
COUPLINGS = LgtCouplings(-1.0, 0.5)


def shot(layout, up=(), down=(), bonds_minus=()):
    bits = np.zeros(layout.n_qubits, dtype=np.uint8)
    for i in up:
        bits[layout.site_qubit(i, "up")] = 1
    for i in down:
        bits[layout.site_qubit(i, "down")] = 1
    for b in bonds_minus:
        bits[layout.bond_qubit(b)] = 1
    plan = layout.basis_plan() if layout.method == "lgt" else "Z" * layout.n_qubits
    return ShotRecord(bits, plan)


def test_global_numbers_examples():
    wall = shot(DIR6, up=(0, 1, 2), down=(3, 4, 5))
    assert global_numbers(wall, DIR6) == (3, 3)
    assert global_numbers(shot(DIR6), DIR6) == (0, 0)
    flipped = shot(DIR6, up=(0, 1), down=(3, 4, 5))
    assert global_numbers(flipped, DIR6) == (2, 3)
    rule = PostSelectionRule("global_numbers", n_up=3, n_down=3)
    assert bool(rule.accepts(wall, DIR6))
    assert not bool(rule.accepts(flipped, DIR6))


def test_charge_examples():
    i = 2
    left, right = LGT6.site_bonds(i)
    # n_i = 1, bond readouts (+1, -1): (-1)^1 (+1)(-1) = +1
    assert charge_eigenvalue(shot(LGT6, up=(i,), bonds_minus=(right,)), LGT6, i) == 1
    # n_i = 2, bond readouts (+1, +1)
    assert charge_eigenvalue(shot(LGT6, up=(i,), down=(i,)), LGT6, i) == 1
    # n_i = 1 with both bonds +1 violates the constraint
    assert charge_eigenvalue(shot(LGT6, up=(i,)), LGT6, i) == -1


def test_basis_mismatch():
    rec = ShotRecord(np.zeros(LGT6.n_qubits, dtype=np.uint8), "Z" * LGT6.n_qubits)
    with pytest.raises(BasisMismatch):
        charge_eigenvalue(rec, LGT6, 0)
    rec = ShotRecord(np.zeros(LGT6.n_qubits, dtype=np.uint8), "X" * LGT6.n_qubits)
    with pytest.raises(BasisMismatch):
        global_numbers(rec, LGT6)


def test_postselect_zero_accepted_raises():
    batch = ShotBatch.from_records([shot(DIR6)] * 5)
    with pytest.raises(MitigationError):
        postselect(batch, rule_set("direct", "global", DIR6, 3, 3), DIR6)


def test_postselect_retention():
    good = shot(DIR6, up=(0, 1, 2), down=(3, 4, 5))
    bad = shot(DIR6, up=(0,), down=(3, 4, 5))
    batch = ShotBatch.from_records([good, good, good, bad])
    kept, ret = postselect(batch, rule_set("direct", "global", DIR6, 3, 3), DIR6)
    assert ret == pytest.approx(0.75) and len(kept) == 3


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_adding_rules_never_raises_retention(data):
    seed = data.draw(st.integers(0, 10**6))
    bits = np.random.default_rng(seed).integers(0, 2, size=(200, LGT6.n_qubits)).astype(np.uint8)
    batch = ShotBatch(bits, LGT6.basis_plan())
    rules = rule_set("lgt", "full", LGT6, 3, 3)
    prev = len(batch)
    for k in range(len(rules) + 1):
        now = int(acceptance_mask(batch, rules[:k], LGT6).sum())
        assert now <= prev
        prev = now


def test_full_rules_on_direct_are_global_only():
    assert rule_set("direct", "full", DIR6, 3, 3) == rule_set("direct", "global", DIR6, 3, 3)
    assert len(rule_set("lgt", "full", LGT6, 3, 3)) == 7
    assert rule_set("lgt", "none", LGT6, 3, 3) == []


def test_noiseless_lgt_shots_satisfy_every_charge():
    params = ModelParams(n_sites=4, n_steps=3)
    staged = build_evolution("lgt", params, COUPLINGS)
    layout = make_layout("lgt", 4)
    rng = np.random.default_rng(1)
    state = run_trajectory(staged.circuit, None)
    recs = [measure_shot(state, staged.circuit.basis_plan, rng) for _ in range(300)]
    for r in recs:
        assert all(charge_eigenvalue(r, layout, i) == 1 for i in range(4))
        assert global_numbers(r, layout) == (2, 2)


@pytest.mark.parametrize("method", ["direct", "lgt"])
def test_noiseless_retention_is_one(method):
    n = 4
    params = ModelParams(n_sites=n, n_steps=4)
    layout = make_layout(method, n)
    c = COUPLINGS if method == "lgt" else None
    res = gather((method, params, c, 4, None), None, layout,
                 rule_set(method, "full", layout, 2, 2), 3000, 10**6, 0, 0)
    assert [d.retention for d in res] == [1.0] * 5


def test_chi_zero_at_domain_wall():
    wall = shot(DIR6, up=(0, 1, 2), down=(3, 4, 5))
    est = estimate_chi(ShotBatch.from_records([wall] * 10000), DIR6)
    assert est.chi == 0.0 and est.std_error == 0.0
    assert est.retention == 1.0


def test_chi_needs_two_shots():
    with pytest.raises(MitigationError):
        estimate_chi(ShotBatch.from_records([shot(DIR6)]), DIR6)


def _exact_batch(state, layout, n, seed):
    probs = rotate_to_plan(state, "Z" * layout.n_qubits).probabilities()
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(probs), size=n, p=probs / probs.sum())
    return ShotBatch.from_indices(idx, layout.n_qubits, "Z" * layout.n_qubits)


def test_estimator_consistency():
    params = ModelParams(n_sites=6)
    psi = ReferenceEvolution("direct", params).state(1.0)
    exact = correlator_exact(psi, DIR6, *domain_wall_pair(6))
    errs = []
    for n_shots in (10_000, 100_000):
        est = estimate_chi(_exact_batch(psi, DIR6, n_shots, 3), DIR6)
        assert abs(est.chi - exact) < 3 * est.std_error
        errs.append(est.std_error)
    assert 2.5 < errs[0] / errs[1] < 4.0  # 1/sqrt(shots)
    assert 0.004 < errs[0] < 0.025  # order 0.01 at 10^4 shots


def test_bootstrap_matches_delta_method():
    params = ModelParams(n_sites=6)
    psi = ReferenceEvolution("direct", params).state(1.5)
    batch = _exact_batch(psi, DIR6, 20000, 9)
    i, j = domain_wall_pair(6)
    up, dn = DIR6.site_qubit(i, "up"), DIR6.site_qubit(i, "down")
    si = batch.bits[:, up].astype(float) - batch.bits[:, dn]
    up, dn = DIR6.site_qubit(j, "up"), DIR6.site_qubit(j, "down")
    sj = batch.bits[:, up].astype(float) - batch.bits[:, dn]
    # influence function of m_ij - m_i m_j
    infl = si * sj - sj * si.mean() - si * sj.mean()
    delta = infl.std(ddof=1) / np.sqrt(len(si))
    est = estimate_chi(batch, DIR6)
    assert est.std_error == pytest.approx(delta, rel=0.2)


def test_apply_normalization_examples():
    e = CorrelatorEstimate(chi=-0.3, std_error=0.01, n_accepted=10, n_total=10)
    out = apply_normalization(e, 0.6)
    assert out.chi == pytest.approx(-0.5)
    assert out.std_error == pytest.approx(0.01 / 0.6)
    assert apply_normalization(e, 1.0) == e
    with pytest.raises(MitigationError):
        apply_normalization(e, 0.0)


def test_normalization_noiseless_is_one():
    params = ModelParams(n_sites=4)
    layout = make_layout("lgt", 4)
    f = estimate_normalization("lgt", params, 5, None, rule_set("lgt", "full", layout, 2, 2),
                               seed=0, couplings=COUPLINGS, target_accepted=2000)
    assert all(f[k] == pytest.approx(1.0, abs=1e-6) for k in range(6))
    assert f.dt_probe == pytest.approx(1e-6)


@pytest.mark.parametrize("eta", [0.001, 0.01])
def test_normalization_monotone_in_depth(eta):
    params = ModelParams(n_sites=4)
    layout = make_layout("direct", 4)
    f = estimate_normalization("direct", params, 6, NoiseModel.from_eta(eta),
                               rule_set("direct", "global", layout, 2, 2), seed=3,
                               target_accepted=4000)
    A = [f[k] for k in range(7)]
    # binomial error of a +-1 mean at 4000 shots
    err = np.sqrt(np.maximum(1 - np.square(A), 1e-4) / 4000)
    for a, b, ea, eb in zip(A, A[1:], err, err[1:]):
        assert b <= a + 3 * np.hypot(ea, eb)
    assert all(0 < a <= 1 for a in A)


def test_lgt_retention_below_direct_at_equal_noise():
    n, steps = 4, 3
    noise = NoiseModel.from_eta(0.01)
    out = {}
    for method in ("direct", "lgt"):
        layout = make_layout(method, n)
        c = COUPLINGS if method == "lgt" else None
        sampler = TrajectorySampler(build_evolution(method, ModelParams(n_sites=n), c, steps),
                                    noise)
        res = collect_shots(sampler, layout, rule_set(method, "full", layout, 2, 2),
                            10**9, 3000, seed=4)
        out[method] = res[-1].retention
    assert out["lgt"] < out["direct"]


def test_collect_shots_deterministic_and_capped():
    params = ModelParams(n_sites=2)
    layout = make_layout("direct", 2)
    sampler = TrajectorySampler(build_evolution("direct", params, None, 2), NoiseModel(0.3, 0.1))
    rules = rule_set("direct", "global", layout, 1, 1)
    a = collect_shots(sampler, layout, rules, 10**6, 700, seed=2)
    b = collect_shots(sampler, layout, rules, 10**6, 700, seed=2)
    for x, y in zip(a, b):
        assert np.array_equal(x.shots.bits, y.shots.bits)
        assert x.trajectories == 700 and not x.reached_target


def test_collect_stops_at_target():
    params = ModelParams(n_sites=2)
    layout = make_layout("direct", 2)
    sampler = TrajectorySampler(build_evolution("direct", params, None, 2), NoiseModel(0.2, 0.02))
    res = collect_shots(sampler, layout, rule_set("direct", "global", layout, 1, 1), 300, 10**5,
                        seed=1)
    for d in res:
        assert d.n_accepted == 300 and d.reached_target
        assert bool(d.accepted[-1])


def _moment_pauli_terms(layout, i, j):
    # s = n_up - n_down = (Z_down - Z_up) / 2
    out = []
    for a, sa in (("up", -1), ("down", 1)):
        for b, sb in (("up", -1), ("down", 1)):
            out.append((sa * sb / 4, single_pauli(layout.n_qubits, {
                layout.site_qubit(i, a): "Z", layout.site_qubit(j, b): "Z"})))
    return out


def test_rule_observables_hold_on_physical_states():
    n = 4
    layout = make_layout("lgt", n)
    sampler = TrajectorySampler(build_evolution("lgt", ModelParams(n_sites=n), COUPLINGS, 4), None)
    n_up = [(-0.5, single_pauli(layout.n_qubits, {q: "Z"})) for q in layout.species_qubits("up")]
    for st in sampler.checkpoints:
        for i in range(n):
            assert expectation_pauli(st, charge_string(layout, i)) == pytest.approx(1.0, abs=1e-10)
        assert n / 2 + sum(c * expectation_pauli(st, p) for c, p in n_up) == pytest.approx(n / 2)


def test_probe_factor_transfers_to_production_step():
    # the decay of <s_i s_j> at dt = 0.3 relative to the noiseless circuit
    # should match A measured at the probe step, up to a weak dt dependence
    n, steps = 4, 4
    params = ModelParams(n_sites=n)
    layout = make_layout("direct", n)
    i, j = domain_wall_pair(n)
    noise = NoiseModel.from_eta(0.01)
    rules = rule_set("direct", "global", layout, 2, 2)
    A = estimate_normalization("direct", params, steps, noise, rules, seed=1,
                               target_accepted=10000)
    res = gather(("direct", params, None, steps, None), noise, layout, rules, 10000, 10**7, 2, 0)
    clean = TrajectorySampler(build_evolution("direct", params, None, steps), None)
    terms = _moment_pauli_terms(layout, i, j)
    for k in range(1, steps + 1):
        bits = res[k].accepted_shots().bits.astype(float)
        si = bits[:, layout.site_qubit(i, "up")] - bits[:, layout.site_qubit(i, "down")]
        sj = bits[:, layout.site_qubit(j, "up")] - bits[:, layout.site_qubit(j, "down")]
        exact = sum(c * expectation_pauli(clean.checkpoints[k], p) for c, p in terms)
        assert (si * sj).mean() / exact == pytest.approx(A[k], abs=0.08)
