"""Full-size acceptance runs for the trajectory simulator.

Run with: python -m scripts.eval_acceptance [--only ID]

For each test case, this script:
1. Builds the preset scenario at production size.
2. Runs the trajectory ensemble (and the density-matrix oracle where needed).
3. Prints the measured figure of merit next to its threshold and PASS/FAIL.

Some cases take minutes; ring_high needs the d=10368 oracle and can take hours.
"""

import argparse
import time
from functools import lru_cache

import numpy as np

from src.config import load_settings
from src.logging_setup import configure_logging
from src.mcwf.backends import make_backend
from src.mcwf.engine import run_trajectory, trajectory_seed
from src.mcwf.ensemble import (
    TrajectoryOptions,
    average_ensemble,
    ensemble_density,
    fit_inverse_scaling,
    mse_vs_reference,
    run_ensemble,
)
from src.model.basis import Representation
from src.model.scenarios import analytic_reference, build_scenario
from src.oracle.lindblad import density_memory_bytes, initial_density, propagate_density, trace_distance

WORKERS = load_settings().workers


def fock(nu_max, n_max):
    return Representation("fock", nu_max=nu_max, n_max=n_max)


def ensemble(name, representation, n_T, t_final_tau, dt_tau=0.05, propagator="exact", seed=2024, **params):
    spec = build_scenario(name, params, representation)
    options = TrajectoryOptions(
        propagator=propagator,
        dt=dt_tau * spec.tau,
        t_final=t_final_tau * spec.tau,
        sample_every=max(1, int(round(0.25 / dt_tau))),
        n_spf=4,
    )
    results = run_ensemble(spec, options, n_T, master_seed=seed, workers=WORKERS)
    return spec, results, average_ensemble(results)


def oracle_for(name, representation, times, **params):
    spec = build_scenario(name, params, representation)
    return propagate_density(initial_density(spec), spec, times)


def rms(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


@lru_cache(maxsize=None)
def lossy_run():
    return ensemble("lossy_cavity", fock(1, 8), 400, 60.0)


def check_decay():
    spec, _, ens = lossy_run()
    reference = analytic_reference(spec, ens.times)["n_a"]
    normalized = mse_vs_reference(ens, reference, "n_a").normalized
    return normalized <= 0.015, f"normalized MSE {normalized:.2e} (limit 1.5e-02)"


def check_staircase():
    _, results, _ = lossy_run()
    bad = 0
    for r in results:
        n = r.observables[0]
        if np.max(np.abs(n - np.round(n))) > 1e-6 or np.any(np.diff(n) > 1e-6):
            bad += 1
    return bad == 0, f"{bad} of {len(results)} trajectories off the staircase"


def check_rabi():
    _, _, ens = ensemble("rabi", fock(3, 3), 200, 30.0)
    oracle = oracle_for("rabi", fock(3, 3), ens.times)
    window = ens.times <= 20.0 * 2 * np.pi
    deviation = rms(ens.series("n_b")[window], oracle.series("n_b")[window])
    return deviation <= 0.02, f"RMS deviation of n_b {deviation:.4f} (limit 0.02)"


def _revival_time(times, w, start):
    # envelope of the fast inversion oscillation, one period wide
    period = 2 * np.pi
    step = times[1] - times[0]
    width = max(1, int(round(period / step)))
    envelope = np.array([np.max(np.abs(w[i : i + width])) for i in range(len(w))])
    late = times >= start
    return float(times[late][np.argmax(envelope[late])])


def check_jaynes_cummings():
    spec, _, ens = ensemble("jaynes_cummings", fock(1, 20), 400, 40.0, dt_tau=0.025)
    oracle = oracle_for("jaynes_cummings", fock(1, 20), ens.times)
    w_traj, w_ref = ens.series("W"), oracle.series("W")
    start = 10.0 * spec.tau
    t_traj = _revival_time(ens.times, w_traj, start)
    t_ref = _revival_time(ens.times, w_ref, start)
    shift = abs(t_traj - t_ref) / t_ref
    deviation = rms(w_traj, w_ref)
    ok = shift <= 0.05 and deviation <= 0.05
    return ok, f"revival shift {shift:.3f} (limit 0.05), RMS of W {deviation:.4f} (limit 0.05)"


def check_n_oscillators():
    _, _, ens = ensemble("n_oscillators", fock(2, 3), 200, 30.0)
    oracle = oracle_for("n_oscillators", fock(2, 3), ens.times)
    b1 = rms(ens.series("n_b1"), oracle.series("n_b1"))
    b3 = rms(ens.series("n_b3"), oracle.series("n_b3"))
    p2 = float(np.max(np.abs(ens.series("P2") - oracle.series("P2"))))
    n_a_ref = oracle.series("n_a")
    n_a = abs(ens.series("n_a")[-1] - n_a_ref[-1]) / max(float(np.max(n_a_ref)), 1e-12)
    ok = b1 <= 0.02 and b3 <= 0.02 and p2 <= 0.02 and n_a <= 0.05
    return ok, f"RMS b1 {b1:.4f}, b3 {b3:.4f}; max |dP2| {p2:.4f}; late n_a deviation {n_a:.3f}"


def _ring(initial, truncation):
    grid = Representation("grid", n_points=41)
    params = {"initial_occupations": initial}
    spec, results, ens = ensemble("ring_array", grid, 300, 30.0, propagator="mctdh", **params)
    oracle = oracle_for("ring_array", truncation, ens.times, **params)
    deviation = rms(ens.series("n_a"), oracle.series("n_a")) / oracle.series("n_a")[0]
    equations = make_backend(spec, "mctdh", 4).equation_count()
    trajectory_bytes = max(r.state_memory_bytes for r in results)
    dense_bytes = density_memory_bytes(int(np.prod(build_scenario("ring_array", params, truncation).dims)))
    return deviation, equations, trajectory_bytes, dense_bytes


def check_ring_low():
    deviation, equations, _, _ = _ring([0, 0, 0, 0], fock(3, 5))
    return deviation <= 0.015, f"normalized RMS of n_a {deviation:.4f} (limit 0.015), {equations} equations of motion"


def check_ring_high():
    deviation, _, trajectory_bytes, dense_bytes = _ring([1, 1, 0, 0], fock(5, 7))
    ratio = trajectory_bytes / dense_bytes
    ok = deviation <= 0.02 and ratio <= 0.1
    return ok, f"normalized RMS of n_a {deviation:.4f} (limit 0.02), memory ratio {ratio:.2e} (limit 0.1)"


def check_equivalence():
    spec = build_scenario("rabi", None, fock(3, 3))
    options = TrajectoryOptions(
        propagator="exact", dt=0.05 * spec.tau, t_final=20.0 * spec.tau, record_states=True, sample_every=20
    )
    results = run_ensemble(spec, options, 2000, master_seed=2024, workers=WORKERS)
    averaged = ensemble_density(results)
    oracle = propagate_density(initial_density(spec), spec, results[0].times, store_states=True)
    worst = max(trace_distance(a, b) for a, b in zip(averaged, oracle.states))
    return worst <= 0.03, f"max trace distance {worst:.4f} over {len(averaged)} times (limit 0.03)"


def check_completeness():
    worst = 0.0
    compared = 0
    for name, params in (("lossy_cavity", {"n0": 3, "kappa": 0.016}), ("rabi", {})):
        spec = build_scenario(name, params, Representation("grid", n_points=8))
        dt, t_final = 0.05 * spec.tau, 5.0 * spec.tau
        for k in range(5):
            seed = trajectory_seed(0, k)
            ref = run_trajectory(spec, "exact", dt, t_final, seed)
            out = run_trajectory(spec, "mctdh", dt, t_final, seed, n_spf=8)
            if len(ref.jumps) != len(out.jumps):
                continue
            compared += 1
            worst = max(worst, float(np.max(np.abs(ref.observables - out.observables))))
    ok = compared > 0 and worst <= 1e-5
    return ok, f"max deviation {worst:.2e} over {compared} trajectories (limit 1e-05)"


def check_scaling():
    spec, results, ens = ensemble("lossy_cavity", fock(1, 8), 800, 20.0, seed=7)
    reference = analytic_reference(spec, ens.times)["n_a"]
    pool = np.stack([r.observables[0] for r in results])
    rng = np.random.default_rng(0)
    sizes = [50, 100, 200, 400, 800]
    errors = []
    for n in sizes:
        # bootstrap resamples of size n from the pool
        samples = [pool[rng.integers(0, len(pool), n)].mean(axis=0) for _ in range(200)]
        errors.append(float(np.mean([(s - reference) ** 2 for s in samples])))
    c, r2 = fit_inverse_scaling(sizes, errors)
    return r2 >= 0.9, f"fit c={c:.3e}, R^2={r2:.3f} (limit 0.9)"


TEST_CASES = [
    {"id": "decay", "description": "Lossy cavity n=8 Fock state follows 8 exp(-kappa t)", "check": check_decay},
    {"id": "staircase", "description": "Every lossy-cavity trajectory is an integer staircase", "check": check_staircase},
    {"id": "rabi", "description": "Vacuum Rabi site occupation matches the oracle", "check": check_rabi},
    {"id": "jaynes_cummings", "description": "Inversion collapse and revival match the oracle", "check": check_jaynes_cummings},
    {"id": "n_oscillators", "description": "Four independent oscillators and a cavity match the d=324 oracle", "check": check_n_oscillators},
    {"id": "ring_low", "description": "MCTDH ring array, 2 cavity photons, vs d=1536 oracle", "check": check_ring_low},
    {"id": "ring_high", "description": "MCTDH ring array, 2 site + 2 cavity quanta, vs d=10368 oracle", "check": check_ring_high},
    {"id": "equivalence", "description": "Ensemble density matches the master equation (d=16)", "check": check_equivalence},
    {"id": "completeness", "description": "MCTDH with a complete SPF basis reproduces exact trajectories", "check": check_completeness},
    {"id": "scaling", "description": "Ensemble-mean error falls like 1/n_T", "check": check_scaling},
]


def run_test_case(test_case: dict) -> bool:
    """Run a single acceptance case and print formatted output."""
    print("=" * 80)
    print(f"TEST ID: {test_case['id']}")
    print(f"DESCRIPTION: {test_case['description']}")
    started = time.perf_counter()
    passed, detail = test_case["check"]()
    print(f"RESULT: {detail}")
    print(f"{'PASS' if passed else 'FAIL'} in {time.perf_counter() - started:.1f} s")
    print("=" * 80)
    print()
    return passed


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Full-size acceptance runs")
    parser.add_argument("--only", choices=[tc["id"] for tc in TEST_CASES], help="Run one case")
    args = parser.parse_args()
    configure_logging("WARNING")
    print("Acceptance Evaluation")
    print(f"Running with {WORKERS} worker(s)...\n")
    cases = [tc for tc in TEST_CASES if args.only in (None, tc["id"])]
    failed = [tc["id"] for tc in cases if not run_test_case(tc)]
    print("Failed: " + ", ".join(failed) if failed else "Done.")
