import numpy as np

from src.mcwf.ensemble import TrajectoryOptions, average_ensemble, run_ensemble
from src.model.basis import Representation
from src.model.scenarios import build_scenario
from src.oracle.lindblad import initial_density, propagate_density

SCENARIOS = [
    ("lossy_cavity", {"n0": 3, "kappa": 0.1}, Representation("fock", n_max=3)),
    ("rabi", {}, Representation("fock", nu_max=2, n_max=2)),
    ("jaynes_cummings", {}, Representation("fock", n_max=15)),
    ("n_oscillators", {}, Representation("fock", nu_max=1, n_max=2)),
    ("ring_array", {}, Representation("fock", nu_max=1, n_max=2)),
]


if __name__ == "__main__":
    for name, params, rep in SCENARIOS:
        spec = build_scenario(name, params, rep)
        options = TrajectoryOptions(dt=0.05 * spec.tau, t_final=5.0 * spec.tau, sample_every=20)
        ens = average_ensemble(run_ensemble(spec, options, 50, master_seed=1))
        oracle = propagate_density(initial_density(spec), spec, ens.times)
        print("=" * 80)
        print("SCENARIO:", name, "dims", spec.dims)
        for label in spec.observable_labels:
            print(f"{label:>6}  trajectories", np.round(ens.series(label), 3))
            print(f"{'':>6}  oracle      ", np.round(oracle.series(label), 3))
