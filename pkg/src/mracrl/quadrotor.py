"""Quadrotor rigid-body model, mixer, and its four hover-linearized subsystems.

State layout (12-vector): [x, y, z, vx, vy, vz, phi, theta, psi, dphi, dtheta, dpsi].
Wrench layout (4-vector): [f_z, tau_phi, tau_theta, tau_psi].

Note: the rigid-body equations apply a torque-arm factor L/I to the roll and
pitch torques on top of the L already inside the mixer rows; the design and
evaluation models share this convention, so the adaptive loops see a consistent
input gain. Do not "fix" one side without the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

Array = np.ndarray

# state indices
X, Y, Z, VX, VY, VZ, PHI, THETA, PSI, DPHI, DTHETA, DPSI = range(12)
# wrench indices
FZ, TPHI, TTHETA, TPSI = range(4)


class MixerConfigError(ValueError):
    """The nominal mixer is singular or otherwise unusable."""


@dataclass(eq=False)
class QuadrotorParams:
    m: float = 1.2
    I_x: float = 0.22
    I_y: float = 0.22
    I_z: float = 0.44
    L: float = 0.30
    mu: float = 0.1
    kappa: Array = field(default_factory=lambda: np.ones(4))
    g: float = 9.81

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=float)
        if self.kappa.shape != (4,):
            raise ValueError("kappa must hold 4 propeller thrust constants")
        for name in ("m", "I_x", "I_y", "I_z", "L"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if np.any(self.kappa <= 0):
            raise ValueError("all kappa_i must be strictly positive")


def mixer_matrix(params: QuadrotorParams) -> Array:
    """M @ diag(kappa): squared propeller speeds -> body wrench."""
    L, mu = params.L, params.mu
    M = np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [L, 0.0, -L, 0.0],
            [0.0, L, 0.0, -L],
            [mu, -mu, mu, -mu],
        ]
    )
    return M * params.kappa[None, :]


def mixer(params: QuadrotorParams, u: Array) -> Array:
    """Body wrench produced by squared propeller speeds u (componentwise >= 0)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (4,):
        raise ValueError("u must be a 4-vector of squared propeller speeds")
    if np.any(u < 0):
        raise ValueError("squared propeller speeds must be nonnegative")
    return mixer_matrix(params) @ u


def inverse_mixer_matrix(params: QuadrotorParams) -> Array:
    MK = mixer_matrix(params)
    if abs(np.linalg.det(MK)) < 1e-12:
        raise MixerConfigError("nominal mixer matrix is singular")
    return np.linalg.inv(MK)


def inverse_mixer(params: QuadrotorParams, w: Array) -> Array:
    """Nonnegative propeller commands realizing wrench w through the nominal mixer.

    When the unclamped solution is already nonnegative, mixer(inverse_mixer(w))
    reproduces w to solver precision.
    """
    w = np.asarray(w, dtype=float)
    u = inverse_mixer_matrix(params) @ w
    return np.maximum(u, 0.0)


def _quad_rhs(s: tuple, fz: float, tphi: float, ttheta: float, tpsi: float, p: QuadrotorParams):
    """Right-hand side of the rigid-body model on a 12-tuple of floats (hot path)."""
    (x, y, z, vx, vy, vz, phi, theta, psi, dphi, dtheta, dpsi) = s
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    sps, cps = math.sin(psi), math.cos(psi)
    fzm = fz / p.m
    ax = (cphi * sth * cps + sphi * sps) * fzm
    ay = (cphi * sth * sps - sphi * cps) * fzm
    az = cphi * cth * fzm - p.g
    aphi = dtheta * dpsi * (p.I_y - p.I_z) / p.I_x + (p.L / p.I_x) * tphi
    atheta = dphi * dpsi * (p.I_z - p.I_x) / p.I_y + (p.L / p.I_y) * ttheta
    apsi = dphi * dtheta * (p.I_x - p.I_y) / p.I_z + (1.0 / p.I_z) * tpsi
    return (vx, vy, vz, ax, ay, az, dphi, dtheta, dpsi, aphi, atheta, apsi)


def quad_derivative(state: Array, wrench: Array, params: QuadrotorParams) -> Array:
    """12-vector time derivative under a body wrench (velocities pass through)."""
    s = tuple(float(v) for v in np.asarray(state, dtype=float))
    if len(s) != 12:
        raise ValueError("state must be a 12-vector")
    w = np.asarray(wrench, dtype=float)
    return np.array(_quad_rhs(s, w[FZ], w[TPHI], w[TTHETA], w[TPSI], params))


def integrate_quad(
    state: Array,
    wrench: Array,
    params: QuadrotorParams,
    dt: float,
    substeps: int,
    out: Array | None = None,
) -> Array:
    """RK4 over `substeps` fixed steps with the wrench held constant.

    When `out` is given (shape (substeps, 12)) every substep state is recorded.
    Uses scalar math internally; the hot path for training and evaluation.
    """
    s = tuple(float(v) for v in np.asarray(state, dtype=float))
    w = np.asarray(wrench, dtype=float)
    fz, tphi, ttheta, tpsi = float(w[FZ]), float(w[TPHI]), float(w[TTHETA]), float(w[TPSI])
    half = 0.5 * dt
    sixth = dt / 6.0
    for j in range(substeps):
        k1 = _quad_rhs(s, fz, tphi, ttheta, tpsi, params)
        s2 = tuple(si + half * ki for si, ki in zip(s, k1))
        k2 = _quad_rhs(s2, fz, tphi, ttheta, tpsi, params)
        s3 = tuple(si + half * ki for si, ki in zip(s, k2))
        k3 = _quad_rhs(s3, fz, tphi, ttheta, tpsi, params)
        s4 = tuple(si + dt * ki for si, ki in zip(s, k3))
        k4 = _quad_rhs(s4, fz, tphi, ttheta, tpsi, params)
        s = tuple(
            si + sixth * (a + 2.0 * b + 2.0 * c + d)
            for si, a, b, c, d in zip(s, k1, k2, k3, k4)
        )
        if out is not None:
            out[j] = s
    return np.array(s)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def wrap_attitude(state: Array) -> Array:
    out = np.asarray(state, dtype=float).copy()
    for i in (PHI, THETA, PSI):
        out[i] = wrap_angle(out[i])
    return out


@dataclass(eq=False)
class QuadrotorState:
    """Named 12-state record; compute paths use the plain vector layout."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    dphi: float = 0.0
    dtheta: float = 0.0
    dpsi: float = 0.0

    def __post_init__(self):
        vec = self.vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("state entries must be finite")
        self.phi, self.theta, self.psi = (
            wrap_angle(self.phi), wrap_angle(self.theta), wrap_angle(self.psi)
        )

    def vector(self) -> Array:
        return np.array([
            self.x, self.y, self.z, self.vx, self.vy, self.vz,
            self.phi, self.theta, self.psi, self.dphi, self.dtheta, self.dpsi,
        ])

    @classmethod
    def from_vector(cls, vec: Array) -> "QuadrotorState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (12,):
            raise ValueError("state vector must have 12 entries")
        return cls(*vec)


@dataclass(eq=False)
class Wrench:
    """Body vertical force and the three torques; vector order [f_z, tau_phi, tau_theta, tau_psi]."""

    f_z: float = 0.0
    tau_phi: float = 0.0
    tau_theta: float = 0.0
    tau_psi: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector())):
            raise ValueError("wrench entries must be finite")

    def vector(self) -> Array:
        return np.array([self.f_z, self.tau_phi, self.tau_theta, self.tau_psi])

    @classmethod
    def from_vector(cls, vec: Array) -> "Wrench":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (4,):
            raise ValueError("wrench vector must have 4 entries")
        return cls(*vec)


@dataclass(eq=False)
class QuadSubsystem:
    """One hover-linearized chain with its wiring into the 12-state / wrench."""

    name: str
    plant: "CanonicalPlant"
    state_idx: Array  # indices into the 12-vector, chain order
    wrench_idx: int  # which wrench component this loop commands
    input_bias: float  # subtracted from the wrench component to get the chain input


def linearized_subsystems(params: QuadrotorParams) -> Tuple[QuadSubsystem, ...]:
    """Four decoupled canonical chains of the hover linearization.

    [x, vx, theta, dtheta] driven by tau_theta; [y, vy, phi, dphi] by tau_phi;
    [z, vz] by f_z - m*g; [psi, dpsi] by tau_psi. All have linear (identity)
    features and zero alpha; parameter changes show up purely in the input gain.
    """
    from .simcore import CanonicalPlant  # local import avoids cycle at module load

    identity = lambda x: np.asarray(x, dtype=float)
    g = params.g
    pitch = CanonicalPlant(
        delta=np.array([1.0, g, 1.0]), alpha=np.zeros(4), b=params.L / params.I_y, zeta=identity
    )
    roll = CanonicalPlant(
        delta=np.array([1.0, -g, 1.0]), alpha=np.zeros(4), b=params.L / params.I_x, zeta=identity
    )
    vertical = CanonicalPlant(
        delta=np.array([1.0]), alpha=np.zeros(2), b=1.0 / params.m, zeta=identity
    )
    yaw = CanonicalPlant(
        delta=np.array([1.0]), alpha=np.zeros(2), b=1.0 / params.I_z, zeta=identity
    )
    return (
        QuadSubsystem("pitch_x", pitch, np.array([X, VX, THETA, DTHETA]), TTHETA, 0.0),
        QuadSubsystem("roll_y", roll, np.array([Y, VY, PHI, DPHI]), TPHI, 0.0),
        QuadSubsystem("vertical", vertical, np.array([Z, VZ]), FZ, params.m * g),
        QuadSubsystem("yaw", yaw, np.array([PSI, DPSI]), TPSI, 0.0),
    )


def sample_uncertain_params(
    nominal: QuadrotorParams, pct: float, rng: np.random.Generator
) -> QuadrotorParams:
    """Independently draw m, I_x, I_y, I_z, L uniformly within +/- pct of nominal."""
    if not 0 <= pct < 1:
        raise ValueError("pct must lie in [0, 1)")
    draw = lambda v: float(v * rng.uniform(1.0 - pct, 1.0 + pct))
    return replace(
        nominal,
        m=draw(nominal.m),
        I_x=draw(nominal.I_x),
        I_y=draw(nominal.I_y),
        I_z=draw(nominal.I_z),
        L=draw(nominal.L),
        kappa=nominal.kappa.copy(),
    )


def apply_loe(params: QuadrotorParams, beta: float, index: int = 4) -> QuadrotorParams:
    """Scale propeller `index` (1-based) thrust constant by beta in (0, 1]."""
    if not 0 < beta <= 1:
        raise ValueError("loss-of-effectiveness beta must lie in (0, 1]")
    if index not in (1, 2, 3, 4):
        raise ValueError("propeller index must be 1..4")
    kappa = params.kappa.copy()
    kappa[index - 1] *= beta
    return replace(params, kappa=kappa)
