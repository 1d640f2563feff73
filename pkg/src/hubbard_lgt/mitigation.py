"""Post-selection on conserved quantities, decay normalization and the
correlator estimator.

Shot bits follow the qubit layout; a bit read in X reports the X eigenvalue
(0 -> +1, 1 -> -1). All rule evaluations work on single shots and on
``(n_shots, n_qubits)`` batches alike.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .circuits import build_evolution
from .model import LgtCouplings, ModelParams, QubitLayout, make_layout
from .qsim import NoiseModel, ShotRecord, index_to_bits
from .trajectories import TrajectorySampler, trajectory_rng

PROBE_DT = 1e-6
BOOTSTRAP_RESAMPLES = 200


class MitigationError(RuntimeError):
    pass


class BasisMismatch(MitigationError):
    pass


@dataclass
class ShotBatch:
    bits: np.ndarray
    basis_plan: str

    @classmethod
    def from_indices(cls, indices, n_qubits: int, basis_plan: str) -> "ShotBatch":
        return cls(index_to_bits(np.asarray(indices, dtype=np.int64), n_qubits), basis_plan)

    @classmethod
    def from_records(cls, records) -> "ShotBatch":
        records = list(records)
        plans = {r.basis_plan for r in records}
        if len(plans) != 1:
            raise BasisMismatch("shots do not share one basis plan")
        return cls(np.stack([r.bits for r in records]), plans.pop())

    def __len__(self) -> int:
        return self.bits.shape[0]

    def select(self, mask) -> "ShotBatch":
        return ShotBatch(self.bits[mask], self.basis_plan)

    def records(self):
        for row in self.bits:
            yield ShotRecord(row, self.basis_plan)


def _require(plan: str, qubits, basis: str, what: str) -> None:
    for q in qubits:
        if plan[q] != basis:
            raise BasisMismatch(f"{what} needs qubit {q} measured in {basis}")


def _unpack(shot):
    if isinstance(shot, (ShotRecord, ShotBatch)):
        return shot.bits.astype(np.int64), shot.basis_plan
    raise TypeError("expected a ShotRecord or ShotBatch")


def global_numbers(shot, layout: QubitLayout):
    bits, plan = _unpack(shot)
    up, dn = layout.species_qubits("up"), layout.species_qubits("down")
    _require(plan, up + dn, "Z", "particle counting")
    n_up = bits[..., up].sum(axis=-1)
    n_dn = bits[..., dn].sum(axis=-1)
    if n_up.ndim == 0:
        return int(n_up), int(n_dn)
    return n_up, n_dn


def charge_eigenvalue(shot, layout: QubitLayout, site: int):
    bits, plan = _unpack(shot)
    fq = [layout.site_qubit(site, "up"), layout.site_qubit(site, "down")]
    bq = [layout.bond_qubit(b) for b in layout.site_bonds(site)]
    _require(plan, fq, "Z", "charge readout")
    _require(plan, bq, "X", "charge readout")
    parity = bits[..., fq].sum(axis=-1) + bits[..., bq].sum(axis=-1)
    q = 1 - 2 * (parity % 2)
    return int(q) if np.ndim(q) == 0 else q


@dataclass(frozen=True)
class PostSelectionRule:
    kind: str
    n_up: int | None = None
    n_down: int | None = None
    site: int | None = None
    expected: int = 1

    def __post_init__(self):
        if self.kind not in ("global_numbers", "local_charge"):
            raise ValueError(f"unknown rule kind {self.kind!r}")

    def accepts(self, shots, layout: QubitLayout):
        if self.kind == "global_numbers":
            nu, nd = global_numbers(shots, layout)
            return (np.asarray(nu) == self.n_up) & (np.asarray(nd) == self.n_down)
        return np.asarray(charge_eigenvalue(shots, layout, self.site)) == self.expected


def rule_set(method: str, mode: str, layout: QubitLayout,
             n_up: int, n_down: int) -> list[PostSelectionRule]:
    """``none``, ``global`` (particle numbers) or ``full`` (plus every local
    charge for the gauge encoding)."""
    if mode == "none":
        return []
    rules = [PostSelectionRule("global_numbers", n_up=n_up, n_down=n_down)]
    if mode == "global":
        return rules
    if mode != "full":
        raise ValueError(f"unknown post-selection mode {mode!r}")
    if method == "lgt":
        rules += [PostSelectionRule("local_charge", site=i) for i in range(layout.n_sites)]
    return rules


def acceptance_mask(shots: ShotBatch, rules, layout: QubitLayout) -> np.ndarray:
    mask = np.ones(len(shots), dtype=bool)
    for rule in rules:
        mask &= rule.accepts(shots, layout)
    return mask


def postselect(shots: ShotBatch, rules, layout: QubitLayout) -> tuple[ShotBatch, float]:
    if len(shots) == 0:
        raise MitigationError("no shots to post-select")
    mask = acceptance_mask(shots, rules, layout)
    n_acc = int(mask.sum())
    if n_acc == 0:
        raise MitigationError("post-selection rejected every shot")
    return shots.select(mask), n_acc / len(shots)


# -- correlator ------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelatorEstimate:
    chi: float
    std_error: float
    n_accepted: int
    n_total: int
    s_ij: float = float("nan")

    @property
    def retention(self) -> float:
        return self.n_accepted / self.n_total if self.n_total else float("nan")


def magnetization(shots: ShotBatch, layout: QubitLayout, site: int) -> np.ndarray:
    up, dn = layout.site_qubit(site, "up"), layout.site_qubit(site, "down")
    _require(shots.basis_plan, [up, dn], "Z", "magnetization")
    return shots.bits[:, up].astype(np.int64) - shots.bits[:, dn].astype(np.int64)


def _chi(si, sj):
    return (si * sj).mean(axis=-1) - si.mean(axis=-1) * sj.mean(axis=-1)


def estimate_chi(shots: ShotBatch, layout: QubitLayout, i: int | None = None,
                 j: int | None = None, n_total: int | None = None,
                 rng: np.random.Generator | None = None,
                 n_boot: int = BOOTSTRAP_RESAMPLES) -> CorrelatorEstimate:
    """Connected correlator of ``S = n_up - n_down`` on sites ``i, j``
    (default: the two sites meeting at the domain wall), with a bootstrap
    standard error."""
    if i is None:
        i, j = layout.n_sites // 2 - 1, layout.n_sites // 2
    n = len(shots)
    if n < 2:
        raise MitigationError(f"need at least 2 shots, got {n}")
    si, sj = magnetization(shots, layout, i), magnetization(shots, layout, j)
    chi = float(_chi(si, sj))
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = rng.integers(0, n, size=(n_boot, n))
    boots = _chi(si[idx], sj[idx])
    return CorrelatorEstimate(
        chi=chi,
        std_error=float(boots.std(ddof=1)),
        n_accepted=n,
        n_total=n if n_total is None else n_total,
        s_ij=float((si * sj).mean()),
    )


def apply_normalization(estimate: CorrelatorEstimate, A: float) -> CorrelatorEstimate:
    if not A > 0:
        raise MitigationError(f"normalization factor must be positive, got {A}")
    return replace(estimate, chi=estimate.chi / A, std_error=estimate.std_error / A)


# -- shot accumulation --------------------------------------------------------------

@dataclass
class DepthShots:
    """Shots gathered for one circuit depth."""

    shots: ShotBatch
    accepted: np.ndarray
    trajectories: int
    reached_target: bool

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def retention(self) -> float:
        return self.n_accepted / len(self.shots) if len(self.shots) else 0.0

    def accepted_shots(self) -> ShotBatch:
        return self.shots.select(self.accepted)


def draw_batch(sampler: TrajectorySampler, seed: int, stream: int, start: int,
               stop: int, done) -> np.ndarray:
    """Basis indices for trajectories ``start..stop-1`` at every depth not yet
    ``done`` (-1 elsewhere). Pure given its arguments."""
    n_depths = sampler.max_depth + 1
    done = np.asarray(done, dtype=bool)
    new = np.full((stop - start, n_depths), -1, dtype=np.int64)
    if sampler.noise is None or sampler.noise.is_noiseless:
        for d in np.flatnonzero(~done):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(stream, start, int(d))))
            new[:, d] = sampler.noiseless_samples(d, stop - start, rng)
        return new
    wanted = ~done
    last = int(np.flatnonzero(wanted).max())
    for k in range(start, stop):
        new[k - start, : last + 1] = sampler.sample(
            trajectory_rng(seed, stream, k), max_depth=last, wanted=wanted)
    return new


def _serial(sampler, seed, stream):
    def run(ranges, done):
        return [draw_batch(sampler, seed, stream, a, b, done) for a, b in ranges]
    return run


_WORKER_SAMPLER: TrajectorySampler | None = None


def _init_worker(build_args, noise):
    global _WORKER_SAMPLER
    _WORKER_SAMPLER = TrajectorySampler(build_evolution(*build_args), noise)


def _worker_batch(seed, stream, start, stop, done):
    return draw_batch(_WORKER_SAMPLER, seed, stream, start, stop, done)


class PoolRunner:
    """Evaluates trajectory batches in worker processes. Each worker builds its
    own sampler from ``build_args`` (the arguments of ``build_evolution``)."""

    def __init__(self, build_args, noise, seed: int, stream: int, workers: int):
        from concurrent.futures import ProcessPoolExecutor

        self.seed, self.stream, self.workers = seed, stream, workers
        self.pool = ProcessPoolExecutor(workers, initializer=_init_worker,
                                        initargs=(build_args, noise))

    def __call__(self, ranges, done):
        futs = [self.pool.submit(_worker_batch, self.seed, self.stream, a, b, done)
                for a, b in ranges]
        return [f.result() for f in futs]

    def close(self):
        self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def gather(build_args, noise, layout, rules, target_accepted, max_trajectories,
           seed, stream, workers: int = 1) -> list[DepthShots]:
    """Build the sampler for ``build_args`` and collect shots, in-process or
    on a pool of ``workers`` processes."""
    if workers <= 1 or noise is None or noise.is_noiseless:
        sampler = TrajectorySampler(build_evolution(*build_args), noise)
        return collect_shots(sampler, layout, rules, target_accepted, max_trajectories,
                             seed, stream)
    sampler = TrajectorySampler(build_evolution(*build_args), noise)
    with PoolRunner(build_args, noise, seed, stream, workers) as runner:
        return collect_shots(sampler, layout, rules, target_accepted, max_trajectories,
                             seed, stream, runner=runner, fan_out=workers)


def collect_shots(sampler: TrajectorySampler, layout: QubitLayout, rules,
                  target_accepted: int, max_trajectories: int, seed: int,
                  stream: int = 0, batch: int = 256, runner=None,
                  fan_out: int = 1) -> list[DepthShots]:
    """Draw shots at every depth until each has ``target_accepted`` shots
    passing ``rules`` or the trajectory cap is hit.

    Noiseless samplers draw every shot from the exact final distribution;
    noisy ones use one trajectory per shot, each trajectory serving all depths.
    ``runner(ranges, done)`` may evaluate several batches concurrently; batches
    are always consumed in index order, so the result depends only on the seed.
    """
    if target_accepted <= 0:
        raise ValueError("target_accepted must be positive")
    runner = runner or _serial(sampler, seed, stream)
    n_depths = sampler.max_depth + 1
    plan = sampler.plan
    nq = sampler.circuit.n_qubits
    indices = [[] for _ in range(n_depths)]
    n_acc = np.zeros(n_depths, dtype=np.int64)
    n_traj = np.zeros(n_depths, dtype=np.int64)
    done = np.zeros(n_depths, dtype=bool)
    start = 0
    while not done.all() and start < max_trajectories:
        ranges = []
        for _ in range(max(1, fan_out)):
            if start >= max_trajectories:
                break
            stop = min(start + batch, max_trajectories)
            ranges.append((start, stop))
            start = stop
        for new in runner(ranges, done.copy()):
            for d in np.flatnonzero(~done):
                col = new[:, d]
                mask = acceptance_mask(ShotBatch.from_indices(col, nq, plan), rules, layout)
                # keep shots only up to the one that completes the target
                hit = np.flatnonzero(n_acc[d] + np.cumsum(mask) >= target_accepted)
                keep = len(col) if len(hit) == 0 else int(hit[0]) + 1
                indices[d].append(col[:keep])
                n_acc[d] += int(mask[:keep].sum())
                n_traj[d] += keep
                done[d] = n_acc[d] >= target_accepted
    out = []
    for d in range(n_depths):
        idx = np.concatenate(indices[d]) if indices[d] else np.zeros(0, dtype=np.int64)
        shots = ShotBatch.from_indices(idx, nq, plan)
        out.append(DepthShots(shots, acceptance_mask(shots, rules, layout), int(n_traj[d]),
                              bool(done[d])))
    return out


# -- decay normalization -------------------------------------------------------------

@dataclass
class NormalizationFactor:
    table: dict[int, float] = field(default_factory=dict)
    observable: str = "s_i s_j"
    dt_probe: float = PROBE_DT
    retention: dict[int, float] = field(default_factory=dict)

    def __getitem__(self, depth: int) -> float:
        return self.table[depth]


def reference_moment(layout: QubitLayout, i: int, j: int) -> float:
    """<s_i s_j> of the noiseless domain-wall initial state."""
    n = layout.n_sites
    occ_up = [1 if k < n // 2 else 0 for k in range(n)]
    occ_dn = [1 - u for u in occ_up]
    return float((occ_up[i] - occ_dn[i]) * (occ_up[j] - occ_dn[j]))


def estimate_normalization(method: str, params: ModelParams, n_steps: int,
                           noise: NoiseModel | None, rules, seed: int,
                           couplings: LgtCouplings | None = None,
                           target_accepted: int = 10000,
                           max_trajectories: int = 10**7,
                           i: int | None = None, j: int | None = None,
                           stream: int = 1, workers: int = 1) -> NormalizationFactor:
    """Decay factors A(n) for depths ``0..n_steps`` from probe runs at a
    vanishing Trotter step, measured through the same post-selection."""
    layout = make_layout(method, params.n_sites)
    if i is None:
        i, j = params.n_sites // 2 - 1, params.n_sites // 2
    ref = reference_moment(layout, i, j)
    if abs(ref) < 0.5:
        raise MitigationError(f"reference moment {ref} too small to normalize by")
    dt_probe = PROBE_DT / abs(params.J) if params.J else PROBE_DT
    build_args = (method, params, couplings, n_steps, dt_probe)
    per_depth = gather(build_args, noise, layout, rules, target_accepted, max_trajectories,
                       seed, stream, workers)
    factor = NormalizationFactor(dt_probe=dt_probe)
    for d, ds in enumerate(per_depth):
        if ds.n_accepted == 0:
            raise MitigationError(f"zero retention in the normalization probe at depth {d}")
        acc = ds.accepted_shots()
        moment = float((magnetization(acc, layout, i) * magnetization(acc, layout, j)).mean())
        A = moment / ref
        if not A > 0:
            raise MitigationError(f"non-positive decay factor {A} at depth {d}")
        factor.table[d] = min(A, 1.0)
        factor.retention[d] = ds.retention
    return factor
