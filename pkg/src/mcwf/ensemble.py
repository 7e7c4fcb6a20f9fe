"""Trajectory ensembles: parallel execution, averaging and error analysis."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConsistencyError
from src.mcwf.backends import PropagatorKind
from src.mcwf.engine import SelectionMode, TrajectoryResult, run_trajectory, trajectory_seed
from src.model.scenarios import ScenarioSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryOptions:
    """Everything a worker needs besides the scenario and the trajectory index."""

    propagator: PropagatorKind | str = PropagatorKind.EXACT
    dt: float = 0.1
    t_final: float = 1.0
    selection_mode: SelectionMode | str = SelectionMode.PROPORTIONAL
    record_states: bool = False
    sample_every: int = 1
    n_spf: Optional[int | Tuple[int, ...]] = None
    rtol: Optional[float] = None
    atol: Optional[float] = None


@dataclass
class TrajectoryEnsemble:
    """Arithmetic mean and standard error over `results`, per observable and time."""

    results: List[TrajectoryResult]
    mean: np.ndarray
    std_error: np.ndarray
    n_T: int
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    labels: Tuple[str, ...] = ()

    def series(self, label: str) -> np.ndarray:
        return self.mean[self.labels.index(label)]


@dataclass(frozen=True)
class MseReport:
    """Error of an ensemble observable against a reference time series.

    Attributes:
        per_time: (1/n_T) sum_k (O_k(t) - ref(t))^2, spread of single trajectories.
        mean_squared_error: (mean(t) - ref(t))^2, shrinks like 1/n_T.
        normalized: time average of `mean_squared_error` over the squared
            dynamic range of the reference.
    """

    per_time: np.ndarray
    mean_squared_error: np.ndarray
    normalized: float


def _run_indexed(job: Tuple[ScenarioSpec, TrajectoryOptions, int, int]) -> TrajectoryResult:
    spec, options, master_seed, index = job
    return run_trajectory(
        spec,
        options.propagator,
        options.dt,
        options.t_final,
        trajectory_seed(master_seed, index),
        selection_mode=options.selection_mode,
        record_states=options.record_states,
        sample_every=options.sample_every,
        n_spf=options.n_spf,
        rtol=options.rtol,
        atol=options.atol,
        index=index,
    )


def run_ensemble(
    spec: ScenarioSpec,
    options: TrajectoryOptions,
    n_trajectories: int,
    master_seed: int = 0,
    workers: int = 1,
) -> List[TrajectoryResult]:
    """Run trajectories 0..n_trajectories-1; results come back in index order.

    Trajectory k depends only on (master_seed, k), so the output is the same
    for any worker count and a prefix equals a smaller run.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = [(spec, options, master_seed, k) for k in range(n_trajectories)]
    start = time.perf_counter()
    logger.info("running %d %s trajectories of %s on %d worker(s)", n_trajectories, options.propagator, spec.name, workers)
    if workers == 1:
        results = [_run_indexed(job) for job in jobs]
    else:
        chunk = max(1, n_trajectories // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_indexed, jobs, chunksize=chunk))
    logger.info("finished %d trajectories in %.2f s", n_trajectories, time.perf_counter() - start)
    return results


def average_ensemble(results: Sequence[TrajectoryResult]) -> TrajectoryEnsemble:
    """Mean and standard error (ddof=1; zero for a single trajectory).

    Raises:
        ValueError: empty input.
        ConsistencyError: trajectories disagree on time axis or observables.
    """
    results = list(results)
    if not results:
        raise ValueError("cannot average an empty ensemble")
    first = results[0]
    for r in results[1:]:
        if r.labels != first.labels or r.observables.shape != first.observables.shape:
            raise ConsistencyError(f"trajectory {r.index} has different observables than trajectory {first.index}")
        if not np.array_equal(r.times, first.times):
            raise ConsistencyError(f"trajectory {r.index} has a different time axis")
    stack = np.stack([r.observables for r in results])
    n = len(results)
    mean = stack.sum(axis=0) / n
    if n > 1:
        std_error = stack.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        std_error = np.zeros_like(mean)
    return TrajectoryEnsemble(results, mean, std_error, n, first.times.copy(), first.labels)


def mse_vs_reference(
    ensemble: TrajectoryEnsemble, reference: np.ndarray, observable: str | int = 0
) -> MseReport:
    """Compare one ensemble observable with a reference series on the same axis.

    Raises:
        ConsistencyError: reference length differs from the ensemble time axis.
    """
    row = ensemble.labels.index(observable) if isinstance(observable, str) else int(observable)
    reference = np.asarray(reference, dtype=float)
    if reference.shape != ensemble.mean[row].shape:
        raise ConsistencyError(f"reference has {reference.shape[0]} points, ensemble has {ensemble.mean.shape[1]}")
    per_traj = np.stack([r.observables[row] for r in ensemble.results])
    per_time = np.mean((per_traj - reference) ** 2, axis=0)
    error_of_mean = (ensemble.mean[row] - reference) ** 2
    span = float(np.ptp(reference)) if reference.size else 0.0
    if span == 0.0:
        span = max(float(np.max(np.abs(reference))), 1.0) if reference.size else 1.0
    return MseReport(per_time, error_of_mean, float(np.mean(error_of_mean)) / span**2)


def fit_inverse_scaling(n_values: Sequence[int], mse_values: Sequence[float]) -> Tuple[float, float]:
    """Least-squares fit mse = c / n_T through the origin; returns (c, R^2)."""
    x = 1.0 / np.asarray(n_values, dtype=float)
    y = np.asarray(mse_values, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need at least two (n_T, mse) pairs of equal length")
    c = float(np.dot(x, y) / np.dot(x, x))
    ss_res = float(np.sum((y - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return c, r2


def channel_jump_counts(results: Sequence[TrajectoryResult]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for r in results:
        for jump in r.jumps:
            counts[jump.channel_label] = counts.get(jump.channel_label, 0) + 1
    return counts


def ensemble_density(results: Sequence[TrajectoryResult]) -> np.ndarray:
    """Average of |psi><psi| per recorded time, shape (n_times, d, d).

    Raises:
        ValueError: a trajectory was run without `record_states`.
    """
    if not results or any(r.states is None for r in results):
        raise ValueError("ensemble_density needs trajectories run with record_states=True")
    states = np.stack([r.states for r in results])
    return np.einsum("kti,ktj->tij", states, states.conj()) / len(results)


def convergence_sweep(
    results: Sequence[TrajectoryResult],
    references: Dict[str, np.ndarray],
    sizes: Sequence[int],
) -> List[Dict[str, Any]]:
    """MSE rows for ensemble prefixes of each size in `sizes`."""
    rows = []
    for n in sizes:
        if not 1 <= n <= len(results):
            raise ValueError(f"sweep size {n} outside 1..{len(results)}")
        ens = average_ensemble(results[:n])
        for label, ref in references.items():
            report = mse_vs_reference(ens, ref, label)
            rows.append(
                {
                    "n_T": n,
                    "observable": label,
                    "mse": float(np.mean(report.per_time)),
                    "mse_of_mean": float(np.mean(report.mean_squared_error)),
                    "normalized": report.normalized,
                }
            )
    return rows


__all__ = [
    "TrajectoryOptions",
    "TrajectoryEnsemble",
    "MseReport",
    "run_ensemble",
    "average_ensemble",
    "mse_vs_reference",
    "fit_inverse_scaling",
    "channel_jump_counts",
    "ensemble_density",
    "convergence_sweep",
]
