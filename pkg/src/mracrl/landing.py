"""Moving-platform landing task: success box, ternary cost, and the RL environment.

An episode ends with cost -1 (inside the landing box), or +1 (at/below the
platform without meeting the box, or timing out at T_max); otherwise each
control step costs 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .quadrotor import (
    PHI,
    PSI,
    THETA,
    VX,
    VY,
    VZ,
    X,
    Y,
    Z,
    Array,
    QuadrotorParams,
    integrate_quad,
    mixer,
    sample_uncertain_params,
)
from .simcore import IntegratorConfig


@dataclass(eq=False)
class LandingSpec:
    """Platform motion plus the thresholds that define a successful landing."""

    platform_pos: Array = field(default_factory=lambda: np.zeros(3))
    platform_vel: Array = field(default_factory=lambda: np.zeros(3))
    z_max: float = 0.10
    l_max: float = 0.25
    phi_max: float = 0.15
    theta_max: float = 0.15
    v_l_max: float = 0.5
    v_z_max: float = 0.5
    T_max: float = 20.0

    def __post_init__(self):
        self.platform_pos = np.asarray(self.platform_pos, dtype=float)
        self.platform_vel = np.asarray(self.platform_vel, dtype=float)
        for name in ("z_max", "l_max", "phi_max", "theta_max", "v_l_max", "v_z_max", "T_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def platform_at(self, t: float) -> Array:
        return self.platform_pos + self.platform_vel * t


def box_predicate(state: Array, spec: LandingSpec, t: float) -> bool:
    """True iff every landing threshold holds simultaneously (inclusive bounds)."""
    s = np.asarray(state, dtype=float)
    p = spec.platform_at(t)
    dz = s[Z] - p[2]
    dxy = math.hypot(s[X] - p[0], s[Y] - p[1])
    v_xy = math.hypot(s[VX], s[VY])
    return (
        abs(dz) <= spec.z_max
        and dxy <= spec.l_max
        and abs(s[PHI]) <= spec.phi_max
        and abs(s[THETA]) <= spec.theta_max
        and v_xy <= spec.v_l_max
        and abs(s[VZ]) <= spec.v_z_max
    )


def landing_cost(state: Array, spec: LandingSpec, t: float) -> Tuple[int, bool]:
    """Ternary cost event: (-1, terminal) on box, (+1, terminal) on crash/timeout.

    Success is checked first, so touching down inside the box wins over the
    crash branch even when dz <= 0.
    """
    s = np.asarray(state, dtype=float)
    if box_predicate(s, spec, t):
        return -1, True
    dz = s[Z] - spec.platform_at(t)[2]
    if dz <= 0 or t >= spec.T_max:
        return 1, True
    return 0, False


@dataclass
class TaskConfig:
    """Quadrotor landing task configuration (nominal plant, box, distributions)."""

    params: QuadrotorParams = field(default_factory=QuadrotorParams)
    z_max: float = 0.10
    l_max: float = 0.25
    phi_max: float = 0.15
    theta_max: float = 0.15
    v_l_max: float = 0.5
    v_z_max: float = 0.5
    t_max: float = 20.0
    platform_speed_range: Tuple[float, float] = (0.0, 1.0)
    init_xy_half_width: float = 2.0
    init_z_range: Tuple[float, float] = (2.0, 6.0)
    init_attitude_max: float = 0.1
    init_velocity_max: float = 0.5
    uncertainty_pct: float = 0.25
    loe_beta: float = 1.0
    loe_index: int = 4
    loe_onset: float = 0.0
    u_max: Optional[float] = None  # per-prop squared-speed ceiling; default 2x hover
    action_scale: Optional[float] = None  # net output unit in squared-speed units
    obs_scale: Optional[Array] = None
    dt_int: float = 0.001
    dt_ctrl: float = 0.05

    def __post_init__(self):
        hover = self.hover_command()[0]
        if self.u_max is None:
            # 4x hover per propeller: a half-effective propeller still has
            # headroom to hold its share of the weight
            self.u_max = 4.0 * hover
        if self.action_scale is None:
            self.action_scale = 0.5 * hover
        if self.obs_scale is None:
            self.obs_scale = np.array(
                [0.25, 0.25, 0.25, 0.33, 0.33, 0.33, 2.0, 2.0, 0.5, 0.5, 0.5, 0.5]
            )
        else:
            self.obs_scale = np.asarray(self.obs_scale, dtype=float)

    def hover_command(self) -> Array:
        """Squared propeller speeds holding level hover with nominal parameters."""
        p = self.params
        return (p.m * p.g / 4.0) / p.kappa

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt_int=self.dt_int, dt_ctrl=self.dt_ctrl)

    def landing_spec(self, platform_pos: Array, platform_vel: Array) -> LandingSpec:
        return LandingSpec(
            platform_pos=platform_pos,
            platform_vel=platform_vel,
            z_max=self.z_max,
            l_max=self.l_max,
            phi_max=self.phi_max,
            theta_max=self.theta_max,
            v_l_max=self.v_l_max,
            v_z_max=self.v_z_max,
            T_max=self.t_max,
        )

    def map_action(self, a: Array) -> Array:
        """Affine clamp from network output to the actuator range around hover."""
        u = self.hover_command() + self.action_scale * np.asarray(a, dtype=float)
        return np.clip(u, 0.0, self.u_max)


def sample_episode_setup(
    task: TaskConfig, rng: np.random.Generator, spread: float = 1.0
) -> Tuple[LandingSpec, Array]:
    """Draw platform motion and the initial quadrotor state for one episode.

    Draw order is fixed (platform speed, heading, position box, attitude,
    velocities) so paired conditions sharing a seed see identical episodes.
    spread < 1 shrinks the start distribution toward a gentle near-platform
    hover; evaluation always uses spread = 1 (the configured distribution).
    """
    s = float(np.clip(spread, 0.0, 1.0))
    lerp = lambda easy, full: easy + s * (full - easy)
    speed = rng.uniform(task.platform_speed_range[0] * s, task.platform_speed_range[1] * s)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    platform_vel = np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0])
    spec = task.landing_spec(np.zeros(3), platform_vel)

    x0 = np.zeros(12)
    half = lerp(0.1, task.init_xy_half_width)
    z_lo = lerp(0.05, task.init_z_range[0])
    z_hi = lerp(0.3, task.init_z_range[1])
    v_max = lerp(0.03, task.init_velocity_max)
    a_max = lerp(0.02, task.init_attitude_max)
    x0[X] = rng.uniform(-half, half)
    x0[Y] = rng.uniform(-half, half)
    x0[Z] = rng.uniform(z_lo, z_hi)
    x0[VX:VZ + 1] = rng.uniform(-v_max, v_max, size=3)
    x0[PHI:PSI + 1] = rng.uniform(-a_max, a_max, size=3)
    # body rates start at rest
    return spec, x0


def observation(state: Array, spec: LandingSpec, t: float) -> Array:
    """Platform-relative 12-dim observation (position/velocity deltas, raw attitude)."""
    s = np.asarray(state, dtype=float)
    obs = s.copy()
    p = spec.platform_at(t)
    obs[X] -= p[0]
    obs[Y] -= p[1]
    obs[Z] -= p[2]
    obs[VX] -= spec.platform_vel[0]
    obs[VY] -= spec.platform_vel[1]
    obs[VZ] -= spec.platform_vel[2]
    return obs


class LandingEnv:
    """Episodic environment for PPO training.

    reset(seed) draws platform/initial-state (and, when domain_randomized, the
    true plant parameters) from a generator seeded by that episode's seed, so
    rollouts are a pure function of the seed sequence.
    """

    # success-gated curriculum pacing: the start-state spread widens only while
    # the rolling success rate stays above the gate, so a policy regression
    # pauses the expansion instead of compounding it
    CURRICULUM_WINDOW = 50
    CURRICULUM_GATE = 0.7

    def __init__(
        self,
        task: TaskConfig,
        domain_randomized: bool = False,
        curriculum_episodes: int = 0,
    ):
        self.task = task
        self.domain_randomized = domain_randomized
        self.curriculum_episodes = curriculum_episodes
        self.obs_dim = 12
        self.act_dim = 4
        self.obs_scale = task.obs_scale
        self._spec: Optional[LandingSpec] = None
        self._params = task.params
        self._x = np.zeros(12)
        self._t = 0.0
        self._sub = task.integrator().substeps
        self._spread = 0.0 if curriculum_episodes > 0 else 1.0
        self._recent: list[bool] = []

    @property
    def curriculum_spread(self) -> float:
        return self._spread

    def reset(self, seed: int) -> Array:
        rng = np.random.default_rng(seed)
        self._spec, self._x = sample_episode_setup(self.task, rng, self._spread)
        if self.domain_randomized:
            self._params = sample_uncertain_params(
                self.task.params, self.task.uncertainty_pct, rng
            )
        else:
            self._params = self.task.params
        self._t = 0.0
        return observation(self._x, self._spec, 0.0)

    def _finish_episode(self, success: bool) -> None:
        if self.curriculum_episodes <= 0:
            return
        self._recent.append(success)
        if len(self._recent) > self.CURRICULUM_WINDOW:
            self._recent.pop(0)
        if (
            len(self._recent) >= self.CURRICULUM_WINDOW // 2
            and sum(self._recent) / len(self._recent) >= self.CURRICULUM_GATE
        ):
            self._spread = min(1.0, self._spread + 1.0 / self.curriculum_episodes)

    def step(self, action: Array) -> Tuple[Array, float, bool]:
        if self._spec is None:
            raise RuntimeError("reset() must be called before step()")
        u = self.task.map_action(action)
        w = mixer(self._params, u)
        self._x = integrate_quad(self._x, w, self._params, self.task.dt_int, self._sub)
        self._t += self.task.dt_ctrl
        cost, done = landing_cost(self._x, self._spec, self._t)
        if done:
            self._finish_episode(cost == -1)
        return observation(self._x, self._spec, self._t), float(cost), done
