"""Run configuration: environment settings and JSON run files.

Environment (read from `.env` when present):
- MCWF_WORKERS: default worker processes (default: number of CPUs)
- MCWF_LOG_LEVEL: logging level for the CLI (default INFO)
- MCWF_OUTPUT_DIR: root directory for run outputs (default "runs")

A run file is a JSON object; only `scenario` is required:

    {"scenario": "lossy_cavity", "parameters": {"kappa": 0.016},
     "propagator": "exact", "n_trajectories": 400, "t_final": 60}

`dt` and `t_final` are in units of tau = 2 pi / omega of the scenario.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv

from src.errors import ConfigError
from src.mcwf.backends import DEFAULT_N_SPF, PropagatorKind
from src.mcwf.engine import SelectionMode
from src.model.basis import Representation
from src.model.scenarios import PRESETS, ScenarioSpec, build_scenario

load_dotenv()

DEFAULT_SAMPLE_DT = 0.05


@dataclass(frozen=True)
class Settings:
    workers: int
    log_level: str
    output_dir: str


def load_settings() -> Settings:
    """Read MCWF_* variables; bad integers fall back to the defaults."""
    try:
        workers = int(os.getenv("MCWF_WORKERS", "0"))
    except ValueError:
        workers = 0
    if workers < 1:
        workers = os.cpu_count() or 1
    return Settings(
        workers=workers,
        log_level=os.getenv("MCWF_LOG_LEVEL", "INFO"),
        output_dir=os.getenv("MCWF_OUTPUT_DIR", "runs"),
    )


@dataclass(frozen=True)
class GridSettings:
    n_points: int = 41
    n_spf: int = DEFAULT_N_SPF


@dataclass(frozen=True)
class TruncationSettings:
    nu_max: int = 3
    n_max: int = 5


@dataclass(frozen=True)
class RunConfig:
    """Validated run description with every default filled in.

    Attributes:
        scenario: Preset name from the scenario registry.
        parameters: Preset parameter overrides (merged with preset defaults).
        propagator: "exact" or "mctdh".
        representation: "fock" or "grid" for trajectories; the oracle is always Fock.
        n_trajectories: Ensemble size n_T.
        dt: Jump-loop interval in tau; None picks one from a jump-free estimation pass.
        t_final: Simulated time in tau.
        master_seed: Seed all trajectory seeds are derived from.
        selection_mode: "proportional" or "paper-literal".
        grid: HO-DVR size and SPFs per DOF.
        truncation: Fock truncations for the oracle and Fock trajectories.
        oracle: Also solve the master equation.
        output_dir: Where artifacts are written.
        workers: Worker processes for the ensemble.
        sweep: Ensemble prefix sizes for the MSE table.
        sample_every: Record observables every this many intervals.
        rtol, atol: Integrator tolerances; None uses each propagator's default.
    """

    scenario: str
    parameters: Mapping[str, Any] = field(default_factory=dict)
    propagator: str = PropagatorKind.EXACT.value
    representation: str = "fock"
    n_trajectories: int = 400
    dt: Optional[float] = None
    t_final: float = 60.0
    master_seed: int = 0
    selection_mode: str = SelectionMode.PROPORTIONAL.value
    grid: GridSettings = field(default_factory=GridSettings)
    truncation: TruncationSettings = field(default_factory=TruncationSettings)
    oracle: bool = False
    output_dir: str = "runs"
    workers: int = 1
    sweep: Tuple[int, ...] = ()
    sample_every: int = 1
    rtol: Optional[float] = None
    atol: Optional[float] = None

    def trajectory_representation(self) -> Representation:
        return Representation(
            self.representation, self.grid.n_points, self.truncation.nu_max, self.truncation.n_max
        )

    def oracle_representation(self) -> Representation:
        return Representation("fock", self.grid.n_points, self.truncation.nu_max, self.truncation.n_max)

    def scenario_spec(self) -> ScenarioSpec:
        return build_scenario(self.scenario, self.parameters, self.trajectory_representation())

    def oracle_spec(self) -> ScenarioSpec:
        return build_scenario(self.scenario, self.parameters, self.oracle_representation())

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """Copy with CLI overrides applied and re-validated."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        data = self.to_dict()
        data.update(changes)
        if "propagator" in changes and "representation" not in changes:
            data.pop("representation")
        return config_from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["parameters"] = dict(self.parameters)
        data["sweep"] = list(self.sweep)
        return data


_TOP_KEYS = {
    "scenario",
    "parameters",
    "propagator",
    "representation",
    "n_trajectories",
    "dt",
    "t_final",
    "master_seed",
    "selection_mode",
    "grid",
    "truncation",
    "oracle",
    "output_dir",
    "workers",
    "sweep",
    "sample_every",
    "rtol",
    "atol",
}
_GRID_KEYS = {"n_points", "n_spf"}
_TRUNCATION_KEYS = {"nu_max", "n_max"}


def _reject_unknown(data: Mapping[str, Any], allowed: set, prefix: str = "") -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown key", field=f"{prefix}{key}")


def _positive_int(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"must be an integer >= {minimum}", field=name)
    return value


def _positive_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError("must be a positive number", field=name)
    return float(value)


def _optional_tolerance(value: Any, name: str) -> Optional[float]:
    return None if value is None else _positive_float(value, name)


def _choice(value: Any, name: str, allowed: Tuple[str, ...]) -> str:
    if value not in allowed:
        raise ConfigError(f"must be one of {', '.join(allowed)}", field=name)
    return value


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Validate a decoded run file and fill defaults from the preset registry.

    Raises:
        ConfigError: unknown or invalid key; `field` names it.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("run file must contain a JSON object")
    _reject_unknown(data, _TOP_KEYS)
    if "scenario" not in data:
        raise ConfigError("is required", field="scenario")
    scenario = _choice(data["scenario"], "scenario", tuple(sorted(PRESETS)))
    preset = PRESETS[scenario]

    parameters = data.get("parameters", {})
    if not isinstance(parameters, Mapping):
        raise ConfigError("must be an object", field="parameters")
    _reject_unknown(parameters, set(preset.defaults), "parameters.")

    propagator = _choice(data.get("propagator", "exact"), "propagator", tuple(k.value for k in PropagatorKind))
    default_rep = "grid" if propagator == PropagatorKind.MCTDH.value else "fock"
    representation = _choice(data.get("representation", default_rep), "representation", ("fock", "grid"))

    grid_data = data.get("grid", {})
    if not isinstance(grid_data, Mapping):
        raise ConfigError("must be an object", field="grid")
    _reject_unknown(grid_data, _GRID_KEYS, "grid.")
    grid = GridSettings(
        n_points=_positive_int(grid_data.get("n_points", 41), "grid.n_points", 2),
        n_spf=_positive_int(grid_data.get("n_spf", DEFAULT_N_SPF), "grid.n_spf"),
    )

    trunc_data = data.get("truncation", {})
    if not isinstance(trunc_data, Mapping):
        raise ConfigError("must be an object", field="truncation")
    _reject_unknown(trunc_data, _TRUNCATION_KEYS, "truncation.")
    truncation = TruncationSettings(
        nu_max=_positive_int(trunc_data.get("nu_max", preset.nu_max), "truncation.nu_max"),
        n_max=_positive_int(trunc_data.get("n_max", preset.n_max), "truncation.n_max"),
    )

    t_final = _positive_float(data.get("t_final", preset.t_final), "t_final")
    dt = data.get("dt")
    if dt is not None:
        dt = _positive_float(dt, "dt")
        if dt >= t_final:
            raise ConfigError("must be smaller than t_final", field="dt")

    sweep = data.get("sweep", [])
    if not isinstance(sweep, (list, tuple)):
        raise ConfigError("must be a list of ensemble sizes", field="sweep")
    sweep = tuple(_positive_int(n, "sweep") for n in sweep)
    n_trajectories = _positive_int(data.get("n_trajectories", preset.n_trajectories), "n_trajectories")
    if sweep and max(sweep) > n_trajectories:
        raise ConfigError("sizes cannot exceed n_trajectories", field="sweep")

    oracle = data.get("oracle", False)
    if not isinstance(oracle, bool):
        raise ConfigError("must be true or false", field="oracle")
    output_dir = data.get("output_dir", load_settings().output_dir)
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("must be a non-empty string", field="output_dir")

    config = RunConfig(
        scenario=scenario,
        parameters=dict(parameters),
        propagator=propagator,
        representation=representation,
        n_trajectories=n_trajectories,
        dt=dt,
        t_final=t_final,
        master_seed=_positive_int(data.get("master_seed", 0), "master_seed", 0),
        selection_mode=_choice(
            data.get("selection_mode", SelectionMode.PROPORTIONAL.value),
            "selection_mode",
            tuple(m.value for m in SelectionMode),
        ),
        grid=grid,
        truncation=truncation,
        oracle=oracle,
        output_dir=output_dir,
        workers=_positive_int(data.get("workers", load_settings().workers), "workers"),
        sweep=sweep,
        sample_every=_positive_int(data.get("sample_every", 1), "sample_every"),
        rtol=_optional_tolerance(data.get("rtol"), "rtol"),
        atol=_optional_tolerance(data.get("atol"), "atol"),
    )
    try:
        config.scenario_spec()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field="parameters") from exc
    return config


def parse_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON run file.

    Raises:
        ConfigError: unreadable file, JSON syntax error (with line and
            column) or invalid content.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read run file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    return config_from_dict(data)


__all__ = [
    "Settings",
    "load_settings",
    "GridSettings",
    "TruncationSettings",
    "RunConfig",
    "config_from_dict",
    "parse_config",
    "DEFAULT_SAMPLE_DT",
]
