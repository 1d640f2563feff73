"""Command-line entry point: ``python -m hubbard_lgt`` or ``hubbard-lgt``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    DEFAULT_SWEEP,
    ConfigError,
    ExperimentConfig,
    read_config_file,
    run_experiment,
    write_csv,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

# flag dest -> ExperimentConfig field
_FIELDS = {
    "method": "method", "sites": "n_sites", "hopping": "J", "interaction": "U",
    "dt": "dt", "steps": "n_steps", "t_max": "t_max", "eta": "eta",
    "shots": "target_accepted_shots", "max_trajectories": "max_trajectories",
    "seed": "seed", "postselect": "postselect", "normalize": "normalize",
    "out": "out", "workers": "workers", "cache_dir": "cache_dir",
}


def _eta_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hubbard-lgt",
        description="Noisy quench simulations of the Fermi-Hubbard chain in its direct "
                    "and Z2 gauge-theory qubit encodings.")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--method", choices=["direct", "lgt"])
    p.add_argument("--sites", type=int, help="number of lattice sites (even)")
    p.add_argument("--hopping", type=float, help="hopping J")
    p.add_argument("--interaction", type=float, help="on-site interaction U")
    p.add_argument("--dt", type=float, help="Trotter step")
    p.add_argument("--steps", type=int, help="Trotter steps (default: t_max / dt)")
    p.add_argument("--t-max", type=float, help="final time when --steps is absent (default 3/J)")
    p.add_argument("--eta", type=float, help="two-qubit depolarizing probability")
    p.add_argument("--sweep", nargs="?", const=",".join(map(str, DEFAULT_SWEEP)),
                   type=_eta_list, metavar="ETAS",
                   help="run several noise levels (comma list, default 0,0.001,0.01)")
    p.add_argument("--shots", type=int, help="accepted shots per depth")
    p.add_argument("--max-trajectories", type=int, help="trajectory cap per depth")
    p.add_argument("--seed", type=int)
    p.add_argument("--postselect", choices=["none", "global", "full"])
    p.add_argument("--normalize", choices=["on", "off"])
    p.add_argument("--workers", type=int, help="worker processes for noisy runs")
    p.add_argument("--cache-dir", help="directory for the normalization cache")
    p.add_argument("--out", help="CSV path (stdout if omitted; required with --sweep)")
    p.add_argument("--emit-qasm", metavar="PATH", help="write the full circuit as OpenQASM 2.0")
    p.add_argument("--emit-svg", metavar="PATH", help="plot chi(t) with the exact reference")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        # file keys may be flag names (sites, hopping, ...) or config field names
        for key, val in read_config_file(args.config).items():
            dest = key.strip().replace("-", "_")
            values[_FIELDS.get(dest, dest)] = val
    for dest, name in _FIELDS.items():
        v = getattr(args, dest)
        if v is not None:
            values[name] = v
    return ExperimentConfig.from_mapping(values)


def _sweep_path(out: str, eta: float) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}_eta{eta:g}{p.suffix or '.csv'}")


def _write_qasm(cfg: ExperimentConfig, path: str) -> None:
    from .circuits import build_evolution
    from .oracle import calibrate_lgt
    from .qasm import export_qasm

    couplings = calibrate_lgt(cfg.params) if cfg.method == "lgt" else None
    staged = build_evolution(cfg.method, cfg.params, couplings, cfg.steps)
    Path(path).write_text(export_qasm(staged.circuit))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.sweep is not None and not cfg.out:
            raise ConfigError("--sweep needs --out")
        if args.emit_qasm:
            _write_qasm(cfg, args.emit_qasm)
        etas = args.sweep if args.sweep is not None else [cfg.eta]
        results = {}
        for eta in etas:
            run_cfg = cfg.replace(eta=eta)
            if args.sweep is not None:
                run_cfg = run_cfg.replace(out=str(_sweep_path(cfg.out, eta)))
            rows = run_experiment(run_cfg)
            results[eta] = rows
            if run_cfg.out:
                with open(run_cfg.out, "w", newline="") as fh:
                    write_csv(rows, fh)
            else:
                write_csv(rows, sys.stdout)
        if args.emit_svg:
            from .plotting import emit_plot, reference_curve

            t_max = cfg.steps * cfg.dt
            emit_plot({f"{cfg.method}, eta={eta:g}": rows for eta, rows in results.items()},
                      args.emit_svg, reference=reference_curve(cfg.params, t_max, i=cfg.i, j=cfg.j),
                      t_max=t_max)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    flagged = [(eta, r) for eta, rows in results.items() for r in rows if r.flag]
    for eta, r in flagged:
        print(f"warning: eta={eta:g} t={r.t:.6g}: {r.flag}", file=sys.stderr)
    return EXIT_FLAGGED if flagged else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
