"""Single quantum-jump trajectory.

Each interval of length dt:

1. dp_j = dt <psi|L_j^dag L_j|psi> on the (normalized) state at the interval start
2. propagate with H_eff; the norm loss approximates sum_j dp_j
3. draw eps; if sum_j dp_j <= eps keep the propagated state and renormalize,
   otherwise pick a channel and replace the start state by L_j|psi>/||L_j|psi>||
4. record observables on the normalized state

Randomness comes from two counter-based Philox streams keyed by
(master_seed, trajectory index): one for eps, one for the channel choice.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConsistencyError
from src.mcwf.backends import Backend, PropagatorKind, make_backend
from src.model.operators import JumpChannel
from src.model.scenarios import ScenarioSpec

logger = logging.getLogger(__name__)

FIRST_ORDER_LIMIT = 0.1
NEGATIVE_PROBABILITY_TOL = 1e-12
NORM_GROWTH_TOL = 1e-6
IMAGINARY_TOL = 1e-10
DEFAULT_TARGET_DP = 0.01


class SelectionMode(str, Enum):
    """Jump-channel selection and no-jump renormalization rule.

    PROPORTIONAL picks channel j with probability dp_j / sum(dp) from a
    second draw and renormalizes by the actual norm. LITERAL picks the
    channel with the smallest dp_j above eps (largest dp_j if none is) and
    renormalizes by 1/sqrt(1 - sum(dp)).
    """

    PROPORTIONAL = "proportional"
    LITERAL = "paper-literal"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class JumpRecord:
    time: float
    channel_label: str
    epsilon: float
    pre_jump_norm_squared: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "channel": self.channel_label,
            "epsilon": self.epsilon,
            "pre_jump_norm_squared": self.pre_jump_norm_squared,
        }


@dataclass
class TrajectoryResult:
    """Observables of one trajectory on its recorded time axis.

    Attributes:
        seed: Trajectory seed the two random streams were derived from.
        times: Recorded times (internal units, not tau).
        observables: (n_observables, n_times) real expectation values.
        jumps: Every jump in order of occurrence.
        labels: Observable labels in row order.
        index: Position of the trajectory in its ensemble.
        states: Normalized full state vectors per recorded time, if requested.
        state_memory_bytes: Peak bytes held by the wavefunction.
    """

    seed: int
    times: np.ndarray
    observables: np.ndarray
    jumps: List[JumpRecord] = field(default_factory=list)
    labels: Tuple[str, ...] = ()
    index: int = 0
    states: Optional[np.ndarray] = field(default=None, repr=False)
    state_memory_bytes: int = 0


def trajectory_seed(master_seed: int, index: int) -> int:
    """Deterministic per-trajectory seed independent of execution order."""
    if master_seed < 0 or index < 0:
        raise ValueError("master_seed and index must be non-negative")
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)[0])


def trajectory_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(epsilon stream, channel-choice stream) for one trajectory."""
    eps_seq, choice_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(eps_seq)), np.random.Generator(np.random.Philox(choice_seq))


def jump_probabilities(
    backend: Backend, state: Any, channels: Sequence[JumpChannel], dt: float
) -> np.ndarray:
    """dp_j = dt <L_j^dag L_j> for each channel.

    Raises:
        ConsistencyError: a probability is negative beyond round-off.
    """
    norm_sq = backend.norm_squared(state)
    dp = np.array([dt * backend.expectation(state, c.ldag_l).real / norm_sq for c in channels], dtype=float)
    if dp.size and dp.min() < -NEGATIVE_PROBABILITY_TOL:
        worst = int(np.argmin(dp))
        raise ConsistencyError(f"negative jump probability {dp[worst]:.3e} for channel {channels[worst].label!r}")
    dp = np.clip(dp, 0.0, None)
    if dp.sum() > FIRST_ORDER_LIMIT:
        logger.warning("total jump probability %.3g per interval exceeds %.2g; reduce dt", dp.sum(), FIRST_ORDER_LIMIT)
    return dp


def select_channel(
    dp: np.ndarray,
    epsilon: float,
    mode: SelectionMode | str = SelectionMode.PROPORTIONAL,
    rng: Optional[np.random.Generator] = None,
) -> Optional[int]:
    """Index of the channel that jumps, or None when sum(dp) <= epsilon.

    Raises:
        ValueError: epsilon outside (0, 1), or PROPORTIONAL without `rng`.
        ConsistencyError: a jump is due but no channel has probability.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    mode = SelectionMode(str(mode))
    dp = np.asarray(dp, dtype=float)
    total = float(dp.sum())
    if total <= epsilon:
        return None
    if dp.size == 0 or total <= 0.0:
        raise ConsistencyError("jump requested with no channel carrying probability")
    if mode is SelectionMode.LITERAL:
        above = np.flatnonzero(dp > epsilon)
        if above.size:
            return int(above[np.argmin(dp[above])])
        return int(np.argmax(dp))
    if rng is None:
        raise ValueError("proportional selection needs a random generator")
    cumulative = np.cumsum(dp)
    u = rng.random() * total
    return int(min(np.searchsorted(cumulative, u, side="right"), dp.size - 1))


def _draw_epsilon(rng: np.random.Generator) -> float:
    eps = rng.random()
    while eps == 0.0:
        eps = rng.random()
    return float(eps)


def _time_axis(dt: float, t_final: float) -> int:
    if not dt > 0 or not t_final > 0:
        raise ValueError("dt and t_final must be positive")
    if dt >= t_final:
        raise ValueError("dt must be smaller than t_final")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"dt={dt:g} does not divide t_final={t_final:g}")
    return n_steps


def _observe(backend: Backend, state: Any, spec: ScenarioSpec) -> np.ndarray:
    norm_sq = backend.norm_squared(state)
    values = np.empty(len(spec.observables))
    for i, op in enumerate(spec.observables):
        value = backend.expectation(state, op) / norm_sq
        if abs(value.imag) > IMAGINARY_TOL * max(1.0, abs(value.real)):
            logger.debug("observable %s has imaginary part %.2e", op.label, value.imag)
        values[i] = value.real
    return values


def run_trajectory(
    spec: ScenarioSpec,
    propagator: PropagatorKind | str,
    dt: float,
    t_final: float,
    seed: int,
    *,
    selection_mode: SelectionMode | str = SelectionMode.PROPORTIONAL,
    record_states: bool = False,
    sample_every: int = 1,
    n_spf: Optional[int | Sequence[int]] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    index: int = 0,
    backend: Optional[Backend] = None,
) -> TrajectoryResult:
    """Run one quantum-jump trajectory from the scenario's initial state.

    Times are internal units; observables are recorded at t=0 and after
    every `sample_every` intervals, always on the normalized state.

    Raises:
        ValueError: invalid time axis or options.
        IntegrationError: the propagator failed inside an interval.
        ConsistencyError: probabilities or norms escaped their bounds.
    """
    n_steps = _time_axis(dt, t_final)
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    mode = SelectionMode(str(selection_mode))
    if backend is None:
        backend = make_backend(spec, propagator, n_spf, rtol, atol)
    eps_rng, choice_rng = trajectory_streams(seed)
    channels = spec.channels

    state = backend.initial_state()
    times = [0.0]
    values = [_observe(backend, state, spec)]
    snapshots = [backend.full_vector(state) / math.sqrt(backend.norm_squared(state))] if record_states else []
    jumps: List[JumpRecord] = []
    peak_bytes = backend.state_memory_bytes(state)

    for step in range(1, n_steps + 1):
        t_end = step * dt
        norm_start = backend.norm_squared(state)
        dp = jump_probabilities(backend, state, channels, dt)
        epsilon = _draw_epsilon(eps_rng)
        propagated = backend.propagate(state, dt)
        norm_end = backend.norm_squared(propagated)
        if not 0.0 < norm_end <= norm_start * (1.0 + NORM_GROWTH_TOL):
            raise ConsistencyError(
                f"norm^2 went from {norm_start:.12g} to {norm_end:.12g} at t={t_end:.6g}"
            )
        choice = select_channel(dp, epsilon, mode, choice_rng)
        if choice is None:
            total = float(dp.sum())
            if mode is SelectionMode.LITERAL and total < 1.0:
                state = backend.scaled(propagated, 1.0 / math.sqrt(1.0 - total))
            else:
                state = backend.scaled(propagated, 1.0 / math.sqrt(norm_end))
        else:
            channel = channels[choice]
            state = backend.jump(state, channel)
            jumps.append(JumpRecord(t_end, channel.label, epsilon, norm_end))
            logger.debug("trajectory %d: jump %s at t=%.4g (eps=%.4f)", index, channel.label, t_end, epsilon)
        peak_bytes = max(peak_bytes, backend.state_memory_bytes(state))

        if step % sample_every == 0:
            times.append(t_end)
            values.append(_observe(backend, state, spec))
            if record_states:
                snapshots.append(backend.full_vector(state) / math.sqrt(backend.norm_squared(state)))

    return TrajectoryResult(
        seed=seed,
        times=np.array(times),
        observables=np.array(values).T,
        jumps=jumps,
        labels=spec.observable_labels,
        index=index,
        states=np.array(snapshots) if record_states else None,
        state_memory_bytes=peak_bytes,
    )


def suggest_time_step(
    spec: ScenarioSpec,
    propagator: PropagatorKind | str,
    t_final: float,
    sample_dt: float,
    target: float = DEFAULT_TARGET_DP,
    n_spf: Optional[int | Sequence[int]] = None,
) -> float:
    """Largest dt <= sample_dt (dividing it) with max_t sum(dp) <= target.

    Heuristic: runs one jump-free normalized trajectory sampled every
    `sample_dt` and takes the largest total decay rate sum <L^dag L> it
    visits. A jump can move a trajectory to a state with a higher rate
    than the no-jump path (superpositions and coherent states do), so the
    result is not a bound.
    `run_trajectory` still logs a warning for every interval whose
    sum(dp) exceeds 0.1.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    if not spec.channels:
        return sample_dt
    backend = make_backend(spec, propagator, n_spf)
    n_steps = _time_axis(sample_dt, t_final)
    state = backend.initial_state()
    max_rate = 0.0
    for _ in range(n_steps + 1):
        norm_sq = backend.norm_squared(state)
        rate = sum(backend.expectation(state, c.ldag_l).real for c in spec.channels) / norm_sq
        max_rate = max(max_rate, rate)
        propagated = backend.propagate(state, sample_dt)
        state = backend.scaled(propagated, 1.0 / math.sqrt(backend.norm_squared(propagated)))
    if max_rate <= 0.0:
        return sample_dt
    subdivisions = max(1, math.ceil(max_rate * sample_dt / target))
    dt = sample_dt / subdivisions
    logger.info("max decay rate %.4g -> dt=%.4g (%d substeps per sample)", max_rate, dt, subdivisions)
    return dt


__all__ = [
    "SelectionMode",
    "JumpRecord",
    "TrajectoryResult",
    "trajectory_seed",
    "trajectory_streams",
    "jump_probabilities",
    "select_channel",
    "run_trajectory",
    "suggest_time_step",
]
