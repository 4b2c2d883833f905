"""Experiment configuration: YAML schema, strict validation, assumption windows.

One structured YAML file per run:

    experiment: simulate          # see EXPERIMENT_NAMES
    seed: 1234                    # optional master seed (CLI --seed overrides)
    output_dir: out/simulate      # optional (CLI --out overrides)
    params:                       # experiment-specific section
      ...

Unknown keys anywhere are hard errors (silent-typo protection), and every
declared constant is re-checked against its assumption window at load time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .coefficients import BUILTIN_COEFFICIENTS
from .errors import AssumptionError, ConfigError

EXPERIMENT_NAMES = (
    "simulate",
    "counterexample",
    "limits",
    "kernel-check",
    "metrics-selftest",
    "contraction",
)

_COEFF_KEYS = {"name", "dim", "alpha", "beta", "k", "eta", "c1", "c2", "c3"}

# allowed `params` keys and defaults per experiment
_SCHEMAS: dict = {
    "simulate": {
        "coefficients": dict,
        "n_particles": 2000,
        "n_steps": 200,
        "horizon": 1.0,
        "delta": 20.0,
        "tol_inner": 0.01,
        "tol_outer": 0.01,
        "max_inner": 60,
        "max_outer": 60,
        "initial_low": -0.5,
        "initial_high": 0.5,
        "initial_atoms": 9,
        "auto_bins": 512,
        "eta_support": 256,
        "flow_node_stride": 1,
        "write_ensemble": False,
        "transform_audit_samples": 200_000,
    },
    "counterexample": {
        "alpha": 1.5,
        "calibration_samples": 1_000_000,
        "verify_samples": 1_000_000,
        "t_points": 10,
        "tail_x": 50.0,
        "tail_samples": 10_000_000,
    },
    "limits": {
        "part": "i",
        "alpha": 1.5,
        "kappa": 0.3,
        "horizon": 1.0,
        "deltas": [1.0, 4.0, 16.0, 64.0, 256.0],
        "epsilon": 0.1,
        "n_paths": 100_000,
        "n_steps": 200,
        "theta": None,
    },
    "kernel-check": {
        "check": "scaling",
        "coefficients": dict,
        "epsilon": 0.0,
        "n_paths": 50_000,
        "n_steps": 200,
        "horizon": 1.0,
        "window_steps": [5, 10, 20, 40, 80, 160],
        "t": 0.5,
        "n_particles": 100_000,
        "perturbation_shift": 0.4,
        "x0": 0.3,
    },
    "metrics-selftest": {
        "n_instances": 30,
        "n_dual_functions": 1000,
    },
    "contraction": {
        "coefficients": dict,
        "n_particles": 8000,
        "n_steps": 200,
        "horizon": 1.0,
        "deltas": [5.0, 20.0, 80.0],
        "shift": 0.25,
        "tol_inner": 0.01,
        "max_inner": 60,
        "eta_support": 256,
        "auto_bins": 512,
    },
}

_DEFAULT_COEFFS = {"name": "benchmark"}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str
    params: dict
    raw: dict = field(repr=False)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def _check_assumption_windows(params: dict, experiment: str) -> None:
    """Re-validate (A1)-(A3) windows on everything the config declares."""
    coeffs_spec = params.get("coefficients")
    if coeffs_spec is not None:
        name = coeffs_spec.get("name", "benchmark")
        if name not in BUILTIN_COEFFICIENTS:
            raise ConfigError(
                f"unknown coefficient family {name!r}; built-ins: "
                f"{sorted(BUILTIN_COEFFICIENTS)}"
            )
        try:
            build_coefficients(coeffs_spec)
        except AssumptionError as exc:
            raise ConfigError(str(exc)) from exc
    alpha = params.get("alpha")
    if alpha is not None and not 1.0 < float(alpha) < 2.0:
        raise ConfigError(f"(A1) requires alpha in (1,2); got {alpha}")
    if experiment == "limits":
        # window membership of kappa/theta is part-dependent; construct to check
        from .limits import LimitExperiment

        exp = LimitExperiment(
            alpha=float(params["alpha"]),
            kappa=float(params["kappa"]),
            horizon=float(params["horizon"]),
            deltas=tuple(float(d) for d in params["deltas"]),
            epsilon=float(params["epsilon"]),
            n_paths=int(params["n_paths"]),
            n_steps=int(params["n_steps"]),
            theta=None if params["theta"] is None else float(params["theta"]),
        )
        if params["part"] == "i":
            exp.validate_part_i()
        elif params["part"] == "ii":
            exp.validate_part_ii()
        else:
            raise ConfigError("limits part must be 'i' or 'ii'")
    if experiment == "kernel-check" and params["check"] not in (
        "scaling",
        "perturbation",
        "duhamel",
    ):
        raise ConfigError("check must be one of scaling|perturbation|duhamel")


def build_coefficients(spec: dict):
    """Instantiate a built-in coefficient family from its config section."""
    _reject_unknown(spec, _COEFF_KEYS, "params.coefficients")
    name = spec.get("name", "benchmark")
    factory = BUILTIN_COEFFICIENTS[name]
    kwargs = {k: v for k, v in spec.items() if k != "name"}
    if "dim" in kwargs:
        kwargs["dim"] = int(kwargs["dim"])
    return factory(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


def parse_config(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _reject_unknown(raw, {"experiment", "seed", "output_dir", "params"}, "top level")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENT_NAMES:
        raise ConfigError(
            f"experiment must be one of {EXPERIMENT_NAMES}; got {experiment!r}"
        )
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    schema = _SCHEMAS[experiment]
    params_in = raw.get("params") or {}
    if not isinstance(params_in, dict):
        raise ConfigError("params must be a mapping")
    _reject_unknown(params_in, schema, f"params ({experiment})")
    params = {}
    for key, default in schema.items():
        if key == "coefficients":
            section = params_in.get(key, dict(_DEFAULT_COEFFS))
            if not isinstance(section, dict):
                raise ConfigError("params.coefficients must be a mapping")
            params[key] = section
        else:
            params[key] = params_in.get(key, default)
    _check_assumption_windows(params, experiment)
    return ExperimentConfig(
        experiment=experiment,
        seed=seed,
        output_dir=raw.get("output_dir", f"out/{experiment}"),
        params=params,
        raw=raw,
    )
