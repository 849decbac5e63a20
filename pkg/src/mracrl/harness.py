"""Seeded landing experiments: paired-condition episodes, tables, sweeps, records.

Conditions:
    rl      - the trained policy drives the true quadrotor directly.
    mrac-rl - the policy drives the nominal reference model; four adaptive
              loops convert its wrench to true-plant propeller commands.
    dr-rl   - the domain-randomized policy, applied like `rl`.

Every condition of an experiment consumes the same per-episode seeds, and every
random draw happens in a fixed order, so comparisons are paired sample-by-sample.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .landing import (
    LandingSpec,
    TaskConfig,
    landing_cost,
    observation,
    sample_episode_setup,
)
from .mrac import AdaptiveLoopState, MracConfig, build_loop, compute_xi, mrac_control, mrac_update
from .ppo import Policy, PpoConfig, load_policy, policy_mean_action
from .quadrotor import (
    Z,
    Array,
    QuadrotorParams,
    apply_loe,
    integrate_quad,
    inverse_mixer_matrix,
    linearized_subsystems,
    mixer,
    mixer_matrix,
    sample_uncertain_params,
)
from .simcore import Trajectory

CONDITIONS = ("rl", "mrac-rl", "dr-rl")


class ConfigError(ValueError):
    """Invalid experiment configuration or missing referenced file."""


class ControllerFault(RuntimeError):
    """A controller produced a non-finite command."""


def policy_key(condition: str) -> str:
    """Which trained policy a condition runs on (mrac-rl wraps the baseline)."""
    if condition in ("rl", "mrac-rl"):
        return "rl"
    if condition == "dr-rl":
        return "dr-rl"
    raise ConfigError(f"unknown condition '{condition}'")


@dataclass
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    mrac: MracConfig = field(default_factory=MracConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    n_episodes: int = 100
    seed_base: int = 1000
    conditions: Tuple[str, ...] = ("rl", "mrac-rl", "dr-rl")
    output_dir: str = "runs/experiment"
    policies: Dict[str, str] = field(default_factory=dict)
    compute_divergence: bool = True
    save_trajectories: bool = False

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be >= 1")
        if not self.conditions:
            raise ConfigError("condition list must be nonempty")
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown condition '{c}'")

    def seeds(self) -> List[int]:
        return list(range(self.seed_base, self.seed_base + self.n_episodes))


@dataclass(eq=False)
class EpisodeRecord:
    seed: int
    condition: str
    uncertainty: str
    outcome: str  # success | crash | timeout
    success_time: Optional[float]
    final_cost: int
    trajectory: Optional[Trajectory] = None
    mean_divergence: Optional[float] = None

    def __post_init__(self):
        if self.outcome not in ("success", "crash", "timeout"):
            raise ValueError(f"bad outcome '{self.outcome}'")
        if self.outcome == "success":
            if self.final_cost != -1 or self.success_time is None:
                raise ValueError("success records need final_cost -1 and a success_time")
        else:
            if self.final_cost != 1 or self.success_time is not None:
                raise ValueError("failure records need final_cost +1 and no success_time")


def uncertainty_tag(task: TaskConfig) -> str:
    parts = []
    if task.uncertainty_pct > 0:
        parts.append(f"pct:{task.uncertainty_pct:g}")
    if task.loe_beta < 1.0:
        parts.append(f"loe:{task.loe_beta:g}@{task.loe_index}")
    return "+".join(parts) if parts else "none"


class DirectPolicyController:
    """Fig.-1a wiring: mean action of the policy on the true, platform-relative state."""

    def __init__(self, policy: Policy, task: TaskConfig, spec: LandingSpec):
        self.policy = policy
        self.task = task
        self.spec = spec

    def command(self, t: float, x: Array) -> Array:
        a = policy_mean_action(self.policy, observation(x, self.spec, t))
        u = self.task.map_action(a)
        if not np.all(np.isfinite(u)):
            raise ControllerFault("direct policy produced a non-finite command")
        return u


class QuadMracRlController:
    """Fig.-1b wiring: policy drives the nominal reference; four loops adapt the wrench.

    The reference state integrates the nominal nonlinear model under the
    reference wrench, in lockstep with the plant at the same dt_int.
    """

    def __init__(
        self,
        policy: Policy,
        task: TaskConfig,
        mrac_cfg: MracConfig,
        spec: LandingSpec,
        x0: Array,
    ):
        self.policy = policy
        self.task = task
        self.spec = spec
        self.subsystems = linearized_subsystems(task.params)
        self.loops: List[AdaptiveLoopState] = [
            build_loop(sub.plant, mrac_cfg) for sub in self.subsystems
        ]
        self.x_r = np.asarray(x0, dtype=float).copy()
        self._MK = mixer_matrix(task.params)
        self._Minv = inverse_mixer_matrix(task.params)
        self._sub = task.integrator().substeps

    def command(self, t: float, x: Array) -> Array:
        task = self.task
        a = policy_mean_action(self.policy, observation(self.x_r, self.spec, t))
        u_r = task.map_action(a)
        w_r = self._MK @ u_r

        e = x - self.x_r
        w_cmd = np.empty(4)
        for i, sub in enumerate(self.subsystems):
            loop = self.loops[i]
            e_i = e[sub.state_idx]
            zeta_i = np.asarray(x, dtype=float)[sub.state_idx]
            u_ri = w_r[sub.wrench_idx] - sub.input_bias
            # identity features: e_zeta is the state-slice error itself
            xi = compute_xi(
                u_ri, e_i, e_i, sub.plant.alpha, sub.plant.b, loop.target.alpha_H
            )
            w_cmd[sub.wrench_idx] = mrac_control(loop, zeta_i, xi) + sub.input_bias
            self.loops[i] = mrac_update(loop, zeta_i, xi, e_i, task.dt_ctrl)

        u = np.maximum(self._Minv @ w_cmd, 0.0)
        if not np.all(np.isfinite(u)):
            raise ControllerFault("adaptive inner loop produced a non-finite command")
        self.x_r = integrate_quad(self.x_r, w_r, task.params, task.dt_int, self._sub)
        return u


def _make_controller(
    condition: str,
    policy: Policy,
    cfg: ExperimentConfig,
    spec: LandingSpec,
    x0: Array,
):
    if condition in ("rl", "dr-rl"):
        return DirectPolicyController(policy, cfg.task, spec)
    return QuadMracRlController(policy, cfg.task, cfg.mrac, spec, x0)


def run_episode(
    cfg: ExperimentConfig,
    condition: str,
    seed: int,
    policy: Optional[Policy] = None,
    zero_uncertainty: bool = False,
) -> EpisodeRecord:
    """Simulate one seeded landing episode under a condition's controller wiring.

    The per-episode RNG draws, in fixed order: platform motion, initial state,
    then (when parametric uncertainty is active) the true plant parameters.
    The zero-uncertainty variant of the same seed is the divergence baseline.
    """
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition '{condition}'")
    if policy is None:
        key = policy_key(condition)
        path = cfg.policies.get(key)
        if path is None or not os.path.exists(path):
            raise ConfigError(f"missing trained policy file for '{key}' (got {path!r})")
        policy = load_policy(path)

    task = cfg.task
    rng = np.random.default_rng(seed)
    spec, x0 = sample_episode_setup(task, rng)

    params_base = task.params
    tag = "none"
    if not zero_uncertainty:
        tag = uncertainty_tag(task)
        if task.uncertainty_pct > 0:
            params_base = sample_uncertain_params(task.params, task.uncertainty_pct, rng)

    def params_at(t: float) -> QuadrotorParams:
        if not zero_uncertainty and task.loe_beta < 1.0 and t >= task.loe_onset - 1e-12:
            return apply_loe(params_base, task.loe_beta, task.loe_index)
        return params_base

    controller = _make_controller(condition, policy, cfg, spec, x0)

    dt_int, dt_ctrl = task.dt_int, task.dt_ctrl
    sub = task.integrator().substeps
    n_ctrl = int(round(task.t_max / dt_ctrl))
    times = np.empty(n_ctrl * sub + 1)
    states = np.empty((n_ctrl * sub + 1, 12))
    controls = np.empty((n_ctrl * sub, 4))
    times[0] = 0.0
    states[0] = x0

    x = x0.copy()
    final_cost = 1
    outcome = "timeout"
    success_time = None
    filled = 0
    t = 0.0
    for k in range(n_ctrl):
        t = k * dt_ctrl
        try:
            u = controller.command(t, x)
        except ControllerFault:
            outcome, final_cost = "crash", 1
            break
        params = params_at(t)
        w = mixer(params, np.clip(u, 0.0, task.u_max))
        block = states[1 + k * sub : 1 + (k + 1) * sub]
        x = integrate_quad(x, w, params, dt_int, sub, out=block)
        controls[k * sub : (k + 1) * sub] = u
        for j in range(sub):
            times[1 + k * sub + j] = t + (j + 1) * dt_int
        filled = (k + 1) * sub
        if not np.all(np.isfinite(x)):
            outcome, final_cost = "crash", 1
            break
        t = (k + 1) * dt_ctrl
        cost, done = landing_cost(x, spec, t)
        if done:
            final_cost = int(cost)
            if cost == -1:
                outcome, success_time = "success", t
            else:
                dz = x[Z] - spec.platform_at(t)[2]
                outcome = "crash" if dz <= 0 else "timeout"
            break

    traj = Trajectory(
        times[: filled + 1], states[: filled + 1], controls[:filled], aborted=False
    )
    divergence = None
    if cfg.compute_divergence and tag != "none":
        baseline = run_episode(cfg, condition, seed, policy=policy, zero_uncertainty=True)
        divergence = trajectory_divergence(baseline.trajectory, traj)
    elif cfg.compute_divergence:
        divergence = 0.0

    return EpisodeRecord(
        seed=seed,
        condition=condition,
        uncertainty=tag,
        outcome=outcome,
        success_time=success_time,
        final_cost=final_cost,
        trajectory=traj,
        mean_divergence=divergence,
    )


def trajectory_divergence(a: Trajectory, b: Trajectory) -> float:
    """Mean point-wise Euclidean distance between (x, y, z) over the shared grid."""
    n = min(a.times.shape[0], b.times.shape[0])
    if n == 0:
        raise ValueError("trajectories have no overlapping samples")
    if np.max(np.abs(a.times[:n] - b.times[:n])) > 1e-9:
        raise ValueError("trajectories are not sampled on the same time grid")
    d = a.states[:n, :3] - b.states[:n, :3]
    return float(np.mean(np.sqrt(np.sum(d * d, axis=1))))


# ---------------------------------------------------------------------------
# persistence


def _record_dir(cfg: ExperimentConfig, condition: str, tag: str) -> str:
    return os.path.join(cfg.output_dir, "records", condition, tag.replace(":", "_"))


def record_path(cfg: ExperimentConfig, condition: str, tag: str, seed: int) -> str:
    return os.path.join(_record_dir(cfg, condition, tag), f"seed_{seed}.json")


def save_record(cfg: ExperimentConfig, rec: EpisodeRecord) -> str:
    path = record_path(cfg, rec.condition, rec.uncertainty, rec.seed)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    doc = {
        "seed": rec.seed,
        "condition": rec.condition,
        "uncertainty": rec.uncertainty,
        "outcome": rec.outcome,
        "success_time": rec.success_time,
        "final_cost": rec.final_cost,
        "mean_divergence": rec.mean_divergence,
    }
    if cfg.save_trajectories and rec.trajectory is not None:
        from .simcore import trajectory_to_csv

        traj_path = path[:-5] + "_trajectory.csv"
        trajectory_to_csv(rec.trajectory, traj_path)
        doc["trajectory_file"] = os.path.basename(traj_path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=0, sort_keys=True)
    return path


def load_record(path: str) -> EpisodeRecord:
    with open(path) as fh:
        doc = json.load(fh)
    return EpisodeRecord(
        seed=doc["seed"],
        condition=doc["condition"],
        uncertainty=doc["uncertainty"],
        outcome=doc["outcome"],
        success_time=doc["success_time"],
        final_cost=doc["final_cost"],
        trajectory=None,
        mean_divergence=doc.get("mean_divergence"),
    )


def run_condition(
    cfg: ExperimentConfig,
    condition: str,
    force: bool = False,
    persist: bool = True,
) -> List[EpisodeRecord]:
    """Run (or resume) all seeds for one condition; completed seeds are skipped."""
    tag = uncertainty_tag(cfg.task)
    records = []
    policy = None
    for seed in cfg.seeds():
        path = record_path(cfg, condition, tag, seed)
        if persist and not force and os.path.exists(path):
            records.append(load_record(path))
            continue
        if policy is None:
            key = policy_key(condition)
            p = cfg.policies.get(key)
            if p is None or not os.path.exists(str(p)):
                raise ConfigError(f"missing trained policy file for '{key}' (got {p!r})")
            policy = load_policy(p)
        rec = run_episode(cfg, condition, seed, policy=policy)
        if persist:
            save_record(cfg, rec)
        records.append(rec)
    return records


@dataclass
class SummaryRow:
    condition: str
    uncertainty: str
    episodes: int
    successes: int
    success_rate: float
    mean_success_time: Optional[float]
    mean_divergence: Optional[float]


def summarize(records: Sequence[EpisodeRecord]) -> SummaryRow:
    """Deterministic reduction ordered by seed."""
    recs = sorted(records, key=lambda r: r.seed)
    n = len(recs)
    succ = [r for r in recs if r.outcome == "success"]
    times = [r.success_time for r in succ]
    divs = [r.mean_divergence for r in recs if r.mean_divergence is not None]
    return SummaryRow(
        condition=recs[0].condition,
        uncertainty=recs[0].uncertainty,
        episodes=n,
        successes=len(succ),
        success_rate=len(succ) / n,
        mean_success_time=(sum(times) / len(times)) if times else None,
        mean_divergence=(sum(divs) / len(divs)) if divs else None,
    )


def success_table(
    cfg: ExperimentConfig,
    conditions: Optional[Sequence[str]] = None,
    n_episodes: Optional[int] = None,
    force: bool = False,
    persist: bool = True,
) -> List[SummaryRow]:
    """Aggregate run_episode over seeds seed_base..seed_base+n-1 per condition."""
    if conditions is None:
        conditions = cfg.conditions
    if n_episodes is not None:
        cfg = dataclasses.replace(cfg, n_episodes=n_episodes)
    rows = []
    for condition in conditions:
        records = run_condition(cfg, condition, force=force, persist=persist)
        rows.append(summarize(records))
    return rows


@dataclass
class LoeSweepRow:
    beta: float
    loe_fraction: float  # thrust lost, 1 - beta
    rl_success_rate: float
    mracrl_success_rate: float
    rl_mean_divergence: Optional[float]
    mracrl_mean_divergence: Optional[float]


def loe_sweep(
    cfg: ExperimentConfig,
    betas: Sequence[float],
    force: bool = False,
    persist: bool = True,
) -> List[LoeSweepRow]:
    """Evaluate rl and mrac-rl on identical seed sets at each LOE level."""
    rows = []
    for beta in betas:
        if not 0 < beta <= 1:
            raise ConfigError("LOE beta values must lie in (0, 1]")
        task = dataclasses.replace(cfg.task, uncertainty_pct=0.0, loe_beta=float(beta))
        level_cfg = dataclasses.replace(cfg, task=task)
        by_cond = {}
        for condition in ("rl", "mrac-rl"):
            records = run_condition(level_cfg, condition, force=force, persist=persist)
            by_cond[condition] = summarize(records)
        rows.append(
            LoeSweepRow(
                beta=float(beta),
                loe_fraction=1.0 - float(beta),
                rl_success_rate=by_cond["rl"].success_rate,
                mracrl_success_rate=by_cond["mrac-rl"].success_rate,
                rl_mean_divergence=by_cond["rl"].mean_divergence,
                mracrl_mean_divergence=by_cond["mrac-rl"].mean_divergence,
            )
        )
    return rows


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    """Aggregate summary with the stable column set; floats via repr, absent as empty."""
    with open(path, "w") as fh:
        fh.write(
            "condition,uncertainty,episodes,successes,success_rate,"
            "mean_success_time,mean_divergence\n"
        )
        for r in rows:
            mst = repr(r.mean_success_time) if r.mean_success_time is not None else ""
            mdv = repr(r.mean_divergence) if r.mean_divergence is not None else ""
            fh.write(
                f"{r.condition},{r.uncertainty},{r.episodes},{r.successes},"
                f"{repr(r.success_rate)},{mst},{mdv}\n"
            )


def write_loe_csv(rows: Sequence[LoeSweepRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(
            "beta,loe_fraction,rl_success_rate,mracrl_success_rate,"
            "rl_mean_divergence,mracrl_mean_divergence\n"
        )
        for r in rows:
            rd = repr(r.rl_mean_divergence) if r.rl_mean_divergence is not None else ""
            md = repr(r.mracrl_mean_divergence) if r.mracrl_mean_divergence is not None else ""
            fh.write(
                f"{repr(r.beta)},{repr(r.loe_fraction)},{repr(r.rl_success_rate)},"
                f"{repr(r.mracrl_success_rate)},{rd},{md}\n"
            )
