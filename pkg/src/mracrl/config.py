"""Experiment configuration: one JSON document with a block per module.

Unknown keys are errors (a silently ignored typo in a hyperparameter would
invalidate a comparison). The fully resolved config is echoed to the output
directory so any run can be reproduced from its echo alone.
"""

from __future__ import annotations

import dataclasses
import json
import os
from typing import Any, Dict

import numpy as np

from .harness import ConfigError, ExperimentConfig
from .landing import TaskConfig
from .mrac import MracConfig
from .ppo import PpoConfig
from .quadrotor import QuadrotorParams

OUTPUT_DIR_ENV = "MRACRL_OUTPUT_DIR"

_TASK_KEYS = {
    "m", "I_x", "I_y", "I_z", "L", "mu", "kappa", "g",
    "z_max", "l_max", "phi_max", "theta_max", "v_l_max", "v_z_max", "t_max",
    "platform_speed_range", "init_xy_half_width", "init_z_range",
    "init_attitude_max", "init_velocity_max",
    "uncertainty_pct", "loe_beta", "loe_index", "loe_onset",
    "u_max", "action_scale", "obs_scale", "dt_int", "dt_ctrl",
}
_PARAM_KEYS = {"m", "I_x", "I_y", "I_z", "L", "mu", "kappa", "g"}
_MRAC_KEYS = {"sigma", "Q_scale", "Gamma_scale", "gamma_xi"}
_PPO_KEYS = {f.name for f in dataclasses.fields(PpoConfig)}
_EXPERIMENT_KEYS = {
    "n_episodes", "seed_base", "conditions", "output_dir", "policies",
    "compute_divergence", "save_trajectories",
}
_TOP_KEYS = {"sim", "mrac", "task", "ppo", "experiment"}


def _reject_unknown(block: Dict[str, Any], allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _build_task(block: Dict[str, Any]) -> TaskConfig:
    _reject_unknown(block, _TASK_KEYS, "task block")
    params_kwargs = {k: block[k] for k in _PARAM_KEYS if k in block}
    params = QuadrotorParams(**params_kwargs)
    rest = {k: v for k, v in block.items() if k not in _PARAM_KEYS}
    if "platform_speed_range" in rest:
        rest["platform_speed_range"] = tuple(rest["platform_speed_range"])
    if "init_z_range" in rest:
        rest["init_z_range"] = tuple(rest["init_z_range"])
    return TaskConfig(params=params, **rest)


def resolve_config(doc: Dict[str, Any]) -> ExperimentConfig:
    """Apply defaults and validate a parsed JSON config document."""
    _reject_unknown(doc, _TOP_KEYS, "config")
    sim = dict(doc.get("sim", {}))
    _reject_unknown(sim, {"dt_int", "dt_ctrl"}, "sim block")
    task_block = dict(doc.get("task", {}))
    task_block.update(sim)  # sim block shares the integrator fields
    task = _build_task(task_block)

    mrac_block = dict(doc.get("mrac", {}))
    _reject_unknown(mrac_block, _MRAC_KEYS, "mrac block")
    mrac = MracConfig(**mrac_block)

    ppo_block = dict(doc.get("ppo", {}))
    _reject_unknown(ppo_block, _PPO_KEYS, "ppo block")
    if "hidden_sizes" in ppo_block:
        ppo_block["hidden_sizes"] = tuple(ppo_block["hidden_sizes"])
    ppo = PpoConfig(**ppo_block)

    exp_block = dict(doc.get("experiment", {}))
    _reject_unknown(exp_block, _EXPERIMENT_KEYS, "experiment block")
    if "conditions" in exp_block:
        exp_block["conditions"] = tuple(exp_block["conditions"])
    try:
        cfg = ExperimentConfig(task=task, mrac=mrac, ppo=ppo, **exp_block)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        cfg = dataclasses.replace(cfg, output_dir=env_out)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file does not parse: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return resolve_config(doc)


def config_to_doc(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Fully resolved document; loading it back reproduces cfg exactly."""
    t = cfg.task
    p = t.params
    return {
        "sim": {"dt_int": t.dt_int, "dt_ctrl": t.dt_ctrl},
        "mrac": {
            "sigma": cfg.mrac.sigma,
            "Q_scale": cfg.mrac.Q_scale,
            "Gamma_scale": cfg.mrac.Gamma_scale,
            "gamma_xi": cfg.mrac.gamma_xi,
        },
        "task": {
            "m": p.m, "I_x": p.I_x, "I_y": p.I_y, "I_z": p.I_z, "L": p.L,
            "mu": p.mu, "kappa": p.kappa.tolist(), "g": p.g,
            "z_max": t.z_max, "l_max": t.l_max, "phi_max": t.phi_max,
            "theta_max": t.theta_max, "v_l_max": t.v_l_max, "v_z_max": t.v_z_max,
            "t_max": t.t_max,
            "platform_speed_range": list(t.platform_speed_range),
            "init_xy_half_width": t.init_xy_half_width,
            "init_z_range": list(t.init_z_range),
            "init_attitude_max": t.init_attitude_max,
            "init_velocity_max": t.init_velocity_max,
            "uncertainty_pct": t.uncertainty_pct,
            "loe_beta": t.loe_beta, "loe_index": t.loe_index, "loe_onset": t.loe_onset,
            "u_max": t.u_max, "action_scale": t.action_scale,
            "obs_scale": np.asarray(t.obs_scale).tolist(),
        },
        "ppo": {
            f.name: (list(v) if isinstance(v := getattr(cfg.ppo, f.name), tuple) else v)
            for f in dataclasses.fields(PpoConfig)
        },
        "experiment": {
            "n_episodes": cfg.n_episodes,
            "seed_base": cfg.seed_base,
            "conditions": list(cfg.conditions),
            "output_dir": cfg.output_dir,
            "policies": dict(cfg.policies),
            "compute_divergence": cfg.compute_divergence,
            "save_trajectories": cfg.save_trajectories,
        },
    }


def echo_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_doc(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
