"""Quench experiments: configuration, orchestration and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mitigation import (
    MitigationError,
    NormalizationFactor,
    apply_normalization,
    estimate_chi,
    estimate_normalization,
    gather,
    rule_set,
)
from .model import ModelParams, make_layout
from .oracle import calibrate_lgt
from .qsim import NoiseModel
from .trajectories import trajectory_rng

CSV_HEADER = ["t", "chi_raw", "chi_post", "chi_norm", "stderr", "retention", "trajectories", "A"]
DEFAULT_SWEEP = (0.0, 0.001, 0.01)
CACHE_NAME = "normalization_cache.json"

# independent RNG streams under one seed
STREAM_PRODUCTION = 0
STREAM_NORMALIZATION = 1
STREAM_BOOTSTRAP = 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    method: str = "lgt"
    n_sites: int = 6
    J: float = 1.0
    U: float = 2.0
    dt: float = 0.3
    n_steps: int | None = None
    t_max: float | None = None
    eta: float = 0.0
    target_accepted_shots: int = 10000
    max_trajectories: int = 10**7
    seed: int = 0
    postselect: str = "full"
    normalize: bool = True
    workers: int = 1
    out: str | None = None
    cache_dir: str | None = None
    i: int | None = None
    j: int | None = None

    def __post_init__(self):
        if self.method not in ("direct", "lgt"):
            raise ConfigError(f"method must be direct or lgt, got {self.method!r}")
        if self.postselect not in ("none", "global", "full"):
            raise ConfigError(f"postselect must be none, global or full, got {self.postselect!r}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if self.target_accepted_shots < 2 or self.max_trajectories < 1:
            raise ConfigError("need at least 2 target shots and 1 trajectory")
        if self.n_steps is not None and self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")

    @property
    def steps(self) -> int:
        if self.n_steps is not None:
            return self.n_steps
        t_max = 3.0 / abs(self.J) if self.t_max is None else self.t_max
        return int(math.floor(t_max / self.dt + 1e-9))

    @property
    def params(self) -> ModelParams:
        return ModelParams(n_sites=self.n_sites, J=self.J, U=self.U, dt=self.dt,
                           n_steps=self.steps)

    @property
    def noise(self) -> NoiseModel | None:
        return NoiseModel.from_eta(self.eta) if self.eta > 0 else None

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs)


_INT_FIELDS = {"n_sites", "n_steps", "target_accepted_shots", "max_trajectories", "seed",
               "workers", "i", "j"}
_FLOAT_FIELDS = {"J", "U", "dt", "t_max", "eta"}


def _coerce(name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if raw.lower() in ("", "none", "null"):
        return None
    if name in _INT_FIELDS:
        return int(float(raw))
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name == "normalize":
        if raw.lower() in ("on", "true", "yes", "1"):
            return True
        if raw.lower() in ("off", "false", "no", "0"):
            return False
        raise ConfigError(f"normalize must be on or off, got {raw!r}")
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()
    return values


@dataclass
class ResultRow:
    t: float
    chi_raw: float
    chi_post: float
    chi_norm: float
    stderr: float
    retention: float
    trajectories: int
    A: float
    flag: str = ""
    # bootstrap error of chi_raw; kept in memory only, not a CSV column
    stderr_raw: float = float("nan")

    def csv_fields(self) -> list[str]:
        return [_fmt(self.t), _fmt(self.chi_raw), _fmt(self.chi_post), _fmt(self.chi_norm),
                _fmt(self.stderr), _fmt(self.retention), str(int(self.trajectories)),
                _fmt(self.A)]


def _fmt(x: float) -> str:
    return repr(float(x))


def _cache_key(cfg: ExperimentConfig) -> str:
    parts = dict(method=cfg.method, n_sites=cfg.n_sites, J=cfg.J, U=cfg.U, eta=cfg.eta,
                 steps=cfg.steps, postselect=cfg.postselect, seed=cfg.seed,
                 shots=cfg.target_accepted_shots, cap=cfg.max_trajectories,
                 i=cfg.i, j=cfg.j)
    return json.dumps(parts, sort_keys=True)


def _cache_path(cfg: ExperimentConfig) -> Path | None:
    if cfg.cache_dir:
        return Path(cfg.cache_dir) / CACHE_NAME
    if cfg.out:
        return Path(cfg.out).resolve().parent / CACHE_NAME
    return None


def normalization_table(cfg: ExperimentConfig, couplings, rules) -> NormalizationFactor:
    """A(n) for every depth, read from or written to the run directory cache."""
    path = _cache_path(cfg)
    key = _cache_key(cfg)
    cache = {}
    if path is not None and path.exists():
        cache = json.loads(path.read_text())
        hit = cache.get(key)
        if hit is not None:
            return NormalizationFactor(
                table={int(k): v for k, v in hit["A"].items()},
                dt_probe=hit["dt_probe"],
                retention={int(k): v for k, v in hit["retention"].items()},
            )
    factor = estimate_normalization(
        cfg.method, cfg.params, cfg.steps, cfg.noise, rules, cfg.seed, couplings=couplings,
        target_accepted=cfg.target_accepted_shots, max_trajectories=cfg.max_trajectories,
        i=cfg.i, j=cfg.j, stream=STREAM_NORMALIZATION, workers=cfg.workers)
    if path is not None:
        cache[key] = {"A": factor.table, "dt_probe": factor.dt_probe,
                      "retention": factor.retention, "observable": factor.observable}
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cache, indent=1, sort_keys=True))
    return factor


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per depth ``k = 0..steps``; deterministic given the seed."""
    params = cfg.params
    couplings = calibrate_lgt(params) if cfg.method == "lgt" else None
    layout = make_layout(cfg.method, cfg.n_sites)
    rules = rule_set(cfg.method, cfg.postselect, layout, params.n_up, params.n_down)
    build_args = (cfg.method, params, couplings, cfg.steps, None)
    per_depth = gather(build_args, cfg.noise, layout, rules, cfg.target_accepted_shots,
                       cfg.max_trajectories, cfg.seed, STREAM_PRODUCTION, cfg.workers)
    norm = None
    norm_error = ""
    if cfg.normalize:
        try:
            norm = normalization_table(cfg, couplings, rules)
        except MitigationError as exc:
            norm_error = f"normalization failed: {exc}"
    rows = []
    nan = float("nan")
    for k, ds in enumerate(per_depth):
        flags = []
        rng = trajectory_rng(cfg.seed, STREAM_BOOTSTRAP, k)
        chi_raw = stderr_raw = nan
        if len(ds.shots) >= 2:
            raw = estimate_chi(ds.shots, layout, cfg.i, cfg.j, rng=rng)
            chi_raw, stderr_raw = raw.chi, raw.std_error
        chi_post = chi_norm = stderr = nan
        A = nan
        if ds.n_accepted >= 2:
            post = estimate_chi(ds.accepted_shots(), layout, cfg.i, cfg.j,
                                n_total=len(ds.shots), rng=rng)
            chi_post, stderr = post.chi, post.std_error
            if cfg.normalize and norm is not None:
                A = norm[k]
                normed = apply_normalization(post, A)
                chi_norm, stderr = normed.chi, normed.std_error
            elif not cfg.normalize:
                chi_norm = chi_post
        else:
            flags.append("zero retention" if ds.n_accepted == 0 else "too few accepted shots")
        if not ds.reached_target:
            flags.append(f"cap reached with {ds.n_accepted} accepted shots")
        if norm_error:
            flags.append(norm_error)
        rows.append(ResultRow(t=k * cfg.dt, chi_raw=chi_raw, chi_post=chi_post,
                              chi_norm=chi_norm, stderr=stderr, retention=ds.retention,
                              trajectories=ds.trajectories, A=A, flag="; ".join(flags),
                              stderr_raw=stderr_raw))
    return rows


def run_sweep(cfg: ExperimentConfig, etas=DEFAULT_SWEEP) -> dict[float, list[ResultRow]]:
    return {eta: run_experiment(cfg.replace(eta=eta)) for eta in etas}


def emit_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(rows, fh)


def write_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            vals = [float(v) for v in rec]
            vals[6] = int(vals[6])
            rows.append(ResultRow(*vals))
    return rows


def noiseless_trotter_curve(cfg: ExperimentConfig) -> np.ndarray:
    """Exact chi of the noiseless circuit at every depth (no shot noise)."""
    from .circuits import build_evolution
    from .oracle import correlator_exact
    from .trajectories import TrajectorySampler

    params = cfg.params
    couplings = calibrate_lgt(params) if cfg.method == "lgt" else None
    layout = make_layout(cfg.method, cfg.n_sites)
    sampler = TrajectorySampler(build_evolution(cfg.method, params, couplings, cfg.steps), None)
    i = cfg.n_sites // 2 - 1 if cfg.i is None else cfg.i
    j = cfg.n_sites // 2 if cfg.j is None else cfg.j
    return np.array([correlator_exact(s, layout, i, j) for s in sampler.checkpoints])


__all__ = [
    "CSV_HEADER", "ConfigError", "DEFAULT_SWEEP", "ExperimentConfig", "ResultRow",
    "emit_csv", "noiseless_trotter_curve", "read_config_file", "read_csv", "run_experiment",
    "run_sweep", "write_csv",
]
