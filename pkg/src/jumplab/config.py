"""Experiment configuration: one TOML file describes one experiment.

The schema is strict -- unknown keys anywhere in the file are rejected
before any computation starts, so a typo cannot silently fall back to a
default.  Sweeps (e.g. over measurement intervals) are expressed as
lists inside a single config rather than as multiple files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:                               # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or unusable experiment configuration."""


KINDS = ("evolve", "trajectories", "dos_measure", "einstein", "entropy",
         "ou", "sample_ensemble")

_NUM = (int, float)

MODEL_PARAMS: dict[str, dict[str, tuple]] = {
    "oscillator_chain": {"n_sites": (int,), "spin_cutoff": (int,),
                         "h_x": _NUM, "j": _NUM, "max_dim": (int,)},
    "blbq_chain": {"n_sites": (int,), "spin": _NUM, "h_z": _NUM, "h_x": _NUM,
                   "j": _NUM, "delta": _NUM, "q": _NUM, "max_dim": (int,)},
    "spin_half_chain": {"n_sites": (int,), "b_z_s": _NUM, "b_x_s": _NUM,
                        "b_z_b": _NUM, "b_x_b": _NUM, "j_z_b": _NUM,
                        "j_x_b": _NUM, "j_z_sb": _NUM, "j_x_sb": _NUM,
                        "n_m": (int,), "max_dim": (int,)},
}

KIND_PARAMS: dict[str, dict[str, tuple]] = {
    "evolve": {"t_min": _NUM, "t_max": _NUM, "n_times": (int,),
               "grid": (str,), "window_fraction": _NUM},
    "trajectories": {"dt_list": (list,), "n_meas": (int, list),
                     "n_real": (int, list), "probe_dt": _NUM,
                     "probe_steps": (int,), "transition_lag": (int,)},
    "dos_measure": {"n_states": (int,), "t_max": _NUM, "n_times": (int,),
                    "band": (list,), "s_label": (int,)},
    "einstein": {"n_states": (int,), "band": (list,), "beta_window": _NUM,
                 "gamma": _NUM},
    "entropy": {"t_max": _NUM, "n_times": (int,)},
    "ou": {"k": _NUM, "gamma_friction": _NUM, "diffusion": _NUM, "x0": _NUM,
           "dt_step": _NUM, "t_final": _NUM, "n_paths": (int,),
           "v_std": _NUM, "exact": (bool,)},
    "sample_ensemble": {"n_states": (int,), "gamma": _NUM,
                        "omega0": _NUM, "n_members": (int,),
                        "window_gammas": _NUM, "row_halfwidth": (int,)},
}

MODEL_FREE_KINDS = ("ou", "sample_ensemble")

OBSERVABLE_PARAMS = {"name": (str,), "value": _NUM}
STATE_PARAMS = {"rule": (str,), "band": (list,), "alpha": (int,)}
TOP_KEYS = {"kind", "seed", "out", "model", "observable", "state"} | set(KINDS)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: str | None
    model: dict[str, Any] | None
    observable: dict[str, Any] | None
    state: dict[str, Any]
    params: dict[str, Any]
    path: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict)


def _check_section(section: dict, allowed: dict[str, tuple], where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"[{where}] must be a table")
    for key, value in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{where}] "
                              f"(allowed: {', '.join(sorted(allowed))})")
        types = allowed[key]
        if bool in types and isinstance(value, bool):
            continue
        if isinstance(value, bool) or not isinstance(value, types):
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(f"key '{key}' in [{where}] must be {names}, "
                              f"got {type(value).__name__}")


def validate_config(data: dict, path: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")

    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a string path")

    for other in KINDS:
        if other != kind and other in data:
            raise ConfigError(f"section [{other}] does not match kind '{kind}'")

    model = data.get("model")
    observable = data.get("observable")
    if kind in MODEL_FREE_KINDS:
        if model is not None or observable is not None:
            raise ConfigError(f"kind '{kind}' takes no model/observable section")
    else:
        if model is None:
            raise ConfigError(f"kind '{kind}' requires a [model] section")
        name = model.get("name")
        if name not in MODEL_PARAMS:
            raise ConfigError(f"model.name must be one of "
                              f"{', '.join(sorted(MODEL_PARAMS))}, got {name!r}")
        rest = {k: v for k, v in model.items() if k != "name"}
        _check_section(rest, MODEL_PARAMS[name], "model")
        if observable is None:
            raise ConfigError(f"kind '{kind}' requires an [observable] section")
        _check_section(observable, OBSERVABLE_PARAMS, "observable")
        if "name" not in observable:
            raise ConfigError("observable.name is required")

    state = data.get("state", {})
    _check_section(state, STATE_PARAMS, "state")

    params = data.get(kind, {})
    _check_section(params, KIND_PARAMS[kind], kind)

    return ExperimentConfig(kind=kind, seed=seed, out=out, model=model,
                            observable=observable, state=dict(state),
                            params=dict(params), path=path, raw=data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config is not valid TOML: {err}") from err
    return validate_config(data, path=path)
