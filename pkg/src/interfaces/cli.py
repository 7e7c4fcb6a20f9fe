"""Batch command-line front end.

Usage:
    python -m src.interfaces.cli run data/configs/lossy_cavity.json --out runs/lossy

Writes into the output directory:
- ensemble.csv   time (tau), <obs>_mean, <obs>_stderr
- oracle.csv     time (tau), <obs> (with --oracle)
- mse_sweep.csv  n_T, <obs>_mse, <obs>_mse_of_mean, <obs>_normalized (with --sweep)
- jumps.json     every jump of every trajectory
- manifest.json  config echo, version, seeds, wall clock, flags

Exit status: 0 success, 1 invalid configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src import __version__
from src.config import DEFAULT_SAMPLE_DT, RunConfig, load_settings, parse_config
from src.errors import ConfigError, SimulationError, TruncationWarning
from src.logging_setup import configure_logging
from src.mcwf.backends import make_backend
from src.mcwf.engine import TrajectoryResult, suggest_time_step, trajectory_seed
from src.mcwf.ensemble import (
    TrajectoryEnsemble,
    TrajectoryOptions,
    average_ensemble,
    channel_jump_counts,
    convergence_sweep,
    run_ensemble,
)
from src.model.scenarios import ScenarioSpec, analytic_reference
from src.oracle.lindblad import OracleResult, density_memory_bytes, initial_density, propagate_density

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

# LinAlgError subclasses ValueError, so config errors are matched by ConfigError only
NUMERICAL_ERRORS = (SimulationError, np.linalg.LinAlgError, ArithmeticError)


def parse_sweep(text: str) -> Tuple[int, ...]:
    """Parse "n_T=25,50,100" (or "25,50,100") into ensemble sizes."""
    body = text.split("=", 1)[1] if "=" in text else text
    try:
        sizes = tuple(int(part) for part in body.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"cannot parse {text!r}", field="sweep") from None
    if not sizes:
        raise ConfigError("no ensemble sizes given", field="sweep")
    return sizes


def _save_table(path: Path, columns: List[str], rows: np.ndarray) -> None:
    np.savetxt(path, rows, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(columns), comments="")


def write_ensemble_csv(path: Path, ensemble: TrajectoryEnsemble, tau: float) -> None:
    columns = ["time"]
    data = [ensemble.times / tau]
    for i, label in enumerate(ensemble.labels):
        columns += [f"{label}_mean", f"{label}_stderr"]
        data += [ensemble.mean[i], ensemble.std_error[i]]
    _save_table(path, columns, np.column_stack(data))


def write_oracle_csv(path: Path, oracle: OracleResult, tau: float) -> None:
    columns = ["time", *oracle.labels]
    _save_table(path, columns, np.column_stack([oracle.times / tau, *oracle.expectations]))


def write_sweep_csv(path: Path, rows: List[Dict[str, Any]], labels: Sequence[str]) -> None:
    sizes = sorted({r["n_T"] for r in rows})
    lookup = {(r["n_T"], r["observable"]): r for r in rows}
    columns = ["n_T"]
    for label in labels:
        columns += [f"{label}_mse", f"{label}_mse_of_mean", f"{label}_normalized"]
    table = []
    for n in sizes:
        line: List[float] = [n]
        for label in labels:
            r = lookup[(n, label)]
            line += [r["mse"], r["mse_of_mean"], r["normalized"]]
        table.append(line)
    _save_table(path, columns, np.array(table, dtype=float))


def _jump_log(results: Sequence[TrajectoryResult], tau: float) -> List[Dict[str, Any]]:
    log = []
    for r in results:
        entries = []
        for jump in r.jumps:
            entry = jump.to_dict()
            entry["time"] = jump.time / tau
            entries.append(entry)
        log.append({"index": r.index, "seed": r.seed, "jumps": entries})
    return log


def _resolve_dt(config: RunConfig, spec: ScenarioSpec) -> float:
    """Jump-loop interval in internal units."""
    tau = spec.tau
    t_final = config.t_final * tau
    if config.dt is not None:
        dt = config.dt * tau
        n_steps = round(t_final / dt)
        if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
            raise ConfigError(f"{config.dt:g} does not divide t_final={config.t_final:g}", field="dt")
        return dt
    if abs(round(config.t_final / DEFAULT_SAMPLE_DT) * DEFAULT_SAMPLE_DT - config.t_final) > 1e-9:
        raise ConfigError(f"must be a multiple of {DEFAULT_SAMPLE_DT} when dt is not given", field="t_final")
    return suggest_time_step(
        spec, config.propagator, t_final, DEFAULT_SAMPLE_DT * tau, n_spf=config.grid.n_spf
    )


def _references(
    spec: ScenarioSpec, oracle: Optional[OracleResult], times: np.ndarray
) -> Optional[Dict[str, np.ndarray]]:
    if oracle is not None:
        return {label: oracle.series(label) for label in oracle.labels}
    return analytic_reference(spec, times)


def run(config: RunConfig) -> int:
    """Run the ensemble (and oracle) described by `config`; write artifacts.

    Returns the process exit status.
    """
    started = time.perf_counter()
    out_dir = Path(config.output_dir)
    flags: Dict[str, Any] = {"truncation_ok": True, "integration_failures": 0, "warnings": []}
    try:
        spec = config.scenario_spec()
        tau = spec.tau
        dt = _resolve_dt(config, spec)
        options = TrajectoryOptions(
            propagator=config.propagator,
            dt=dt,
            t_final=config.t_final * tau,
            selection_mode=config.selection_mode,
            sample_every=config.sample_every,
            n_spf=config.grid.n_spf,
            rtol=config.rtol,
            atol=config.atol,
        )
        print(f"System> {spec.name}: {config.n_trajectories} {config.propagator} trajectories, dt={dt / tau:.6g} tau")
        results = run_ensemble(spec, options, config.n_trajectories, config.master_seed, config.workers)
        ensemble = average_ensemble(results)

        oracle: Optional[OracleResult] = None
        oracle_dim = 0
        if config.oracle:
            ospec = config.oracle_spec()
            oracle_dim = int(np.prod(ospec.dims))
            print(f"System> Solving the master equation (d={oracle_dim})")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", TruncationWarning)
                oracle = propagate_density(
                    initial_density(ospec), ospec, ensemble.times, rtol=config.rtol, atol=config.atol
                )
            for w in caught:
                if issubclass(w.category, TruncationWarning):
                    flags["warnings"].append(str(w.message))
                    print(f"System> Warning: {w.message}")
            flags["truncation_ok"] = oracle.truncation_ok
            flags["leakage"] = oracle.leakage

        sweep_rows: List[Dict[str, Any]] = []
        if config.sweep:
            references = _references(spec, oracle, ensemble.times)
            if references is None:
                flags["warnings"].append("sweep skipped: no oracle or analytic reference")
                print("System> Sweep skipped: enable --oracle for this scenario")
            else:
                sweep_rows = convergence_sweep(results, references, config.sweep)
    except ConfigError as exc:
        print(f"System> Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        flags["integration_failures"] += 1
        flags["error"] = f"{type(exc).__name__}: {exc}"
        if getattr(exc, "time", None) is not None:
            flags["failed_at_time"] = exc.time
        out_dir.mkdir(parents=True, exist_ok=True)
        failure = {"config": config.to_dict(), "version": __version__, "flags": flags}
        (out_dir / "manifest.json").write_text(json.dumps(failure, indent=2, default=str), encoding="utf-8")
        print(f"System> Simulation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    out_dir.mkdir(parents=True, exist_ok=True)
    write_ensemble_csv(out_dir / "ensemble.csv", ensemble, tau)
    if oracle is not None:
        write_oracle_csv(out_dir / "oracle.csv", oracle, tau)
    if sweep_rows:
        references_labels = [label for label in ensemble.labels if any(r["observable"] == label for r in sweep_rows)]
        write_sweep_csv(out_dir / "mse_sweep.csv", sweep_rows, references_labels)
    (out_dir / "jumps.json").write_text(json.dumps(_jump_log(results, tau), indent=2), encoding="utf-8")

    backend = make_backend(spec, config.propagator, config.grid.n_spf)
    manifest = {
        "config": config.to_dict(),
        "version": __version__,
        "tau": tau,
        "dt_tau": dt / tau,
        "seeds": [trajectory_seed(config.master_seed, k) for k in range(config.n_trajectories)],
        "wall_clock_seconds": time.perf_counter() - started,
        "flags": flags,
        "jump_counts": channel_jump_counts(results),
        "memory": {
            "trajectory_state_bytes": max(r.state_memory_bytes for r in results),
            "density_matrix_bytes": density_memory_bytes(oracle_dim or int(np.prod(config.oracle_spec().dims))),
        },
    }
    if hasattr(backend, "equation_count"):
        manifest["equations_of_motion"] = backend.equation_count()
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
    print(f"System> Wrote results to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcwf", description="Quantum-jump trajectory ensembles for open cavity systems")
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="Run the ensemble described by a JSON run file")
    run_parser.add_argument("config", help="Path to the JSON run file")
    run_parser.add_argument("--out", dest="output_dir", help="Output directory")
    run_parser.add_argument("--seed", dest="master_seed", type=int, help="Master seed")
    run_parser.add_argument("--trajectories", dest="n_trajectories", type=int, help="Number of trajectories")
    run_parser.add_argument("--propagator", choices=["exact", "mctdh"], help="Wavefunction propagator")
    run_parser.add_argument("--oracle", action="store_true", default=None, help="Also solve the master equation")
    run_parser.add_argument("--sweep", help="Ensemble sizes for the MSE table, e.g. n_T=25,50,100")
    run_parser.add_argument("--workers", type=int, help="Worker processes")
    run_parser.add_argument("--log-level", default=None, help="Logging level (default from MCWF_LOG_LEVEL)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or load_settings().log_level)
    try:
        config = parse_config(args.config)
        config = config.with_overrides(
            output_dir=args.output_dir,
            master_seed=args.master_seed,
            n_trajectories=args.n_trajectories,
            propagator=args.propagator,
            oracle=args.oracle,
            sweep=list(parse_sweep(args.sweep)) if args.sweep else None,
            workers=args.workers,
        )
    except ConfigError as exc:
        print(f"System> Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
