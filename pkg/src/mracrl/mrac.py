"""Inner-loop model-reference adaptive controller.

Builds a Hurwitz target matrix for the tracking-error dynamics, solves the
associated Lyapunov equation, and runs the adaptive control law

    u = K_hat' zeta(x) + k_hat * xi,
    xi = u_r - (1/b_r) alpha_r' e_zeta + (1/b_r) alpha_H' e_x,

with gain updates driven by e_x' P B_r. The matching-condition solver and the
Lyapunov-function evaluator are test instrumentation: they require the true
plant parameters and are never available to the controller itself.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .simcore import (
    Array,
    CanonicalPlant,
    IntegratorConfig,
    NonFiniteError,
    Trajectory,
    canonical_derivative,
)


class StabilityError(ValueError):
    """The requested target dynamics are not (numerically) stable."""


@dataclass(eq=False)
class HurwitzTarget:
    """Target error-dynamics matrix with its prescribed spectrum and Lyapunov solution."""

    A_H: Array
    alpha_H: Array
    sigma: Array
    P: Array
    Q: Array

    @property
    def n(self) -> int:
        return self.A_H.shape[0]


def solve_lyapunov(A: Array, Q: Array) -> Array:
    """Solve P A + A' P = -Q for symmetric positive definite P.

    Raises StabilityError when A is not Hurwitz, detected either through a
    singular solve or through the computed P failing positive definiteness.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if A.shape != Q.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and Q must be square matrices of equal size")
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ValueError("Q must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise ValueError("Q must be positive definite")
    try:
        P = solve_continuous_lyapunov(A.T, -Q)
    except np.linalg.LinAlgError as err:
        raise StabilityError(f"Lyapunov solve failed (A not Hurwitz?): {err}") from err
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)) or np.min(np.linalg.eigvalsh(P)) <= 0:
        raise StabilityError("Lyapunov solution is not positive definite; A is not Hurwitz")
    residual = np.max(np.abs(P @ A + A.T @ P + Q))
    if residual > 1e-8:
        raise StabilityError(f"Lyapunov residual {residual:.3e} exceeds 1e-8")
    return P


def build_hurwitz(delta: Array, sigma: Sequence[complex], Q: Array) -> HurwitzTarget:
    """Place the last row of the delta-scaled companion matrix so its spectrum is sigma.

    The characteristic polynomial of the chain structure is
        s^n - sum_i alpha_H[i] * prod(delta[i:]) * s^i,
    so each alpha_H entry follows from matching coefficients of the target
    polynomial prod(s - sigma_i). Complex eigenvalues must come in conjugate
    pairs so the matched coefficients (and A_H) stay real.
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=complex))
    n = sigma.shape[0]
    if delta.shape != (n - 1,):
        raise ValueError(f"delta must have {n - 1} entries for {n} eigenvalues")
    if np.any(delta == 0.0):
        raise ValueError("all chain gains delta_i must be nonzero")
    if np.any(sigma.real >= 0):
        raise StabilityError("all prescribed eigenvalues must have negative real part")
    if not np.allclose(np.sort_complex(sigma), np.sort_complex(np.conj(sigma)), atol=1e-12):
        raise ValueError("complex eigenvalues must appear in conjugate pairs")

    coeffs = np.poly(sigma)  # leading-1 coefficients, highest power first
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs.real))):
        raise ValueError("target polynomial is not real; check conjugate pairing")
    c = coeffs.real[::-1]  # c[k] multiplies s^k
    # prod of delta[i:] for the coefficient of s^i; empty product is 1 for i = n-1.
    suffix = np.ones(n)
    for i in range(n - 2, -1, -1):
        suffix[i] = suffix[i + 1] * delta[i]
    alpha_H = -c[:n] / suffix

    A_H = np.zeros((n, n))
    for i in range(n - 1):
        A_H[i, i + 1] = delta[i]
    A_H[n - 1, :] = alpha_H

    eig = np.sort_complex(np.linalg.eigvals(A_H))
    target = np.sort_complex(sigma)
    if np.max(np.abs(eig - target)) > 1e-6:
        raise StabilityError("constructed A_H eigenvalues deviate from prescribed sigma by > 1e-6")

    P = solve_lyapunov(A_H, Q)
    return HurwitzTarget(A_H=A_H, alpha_H=alpha_H, sigma=sigma, P=P, Q=np.asarray(Q, dtype=float))


@dataclass(eq=False)
class AdaptiveLoopState:
    """Adaptive gains plus the fixed pieces of one tracking loop.

    reference is the nominal plant the outer policy drives (alpha_r, b_r); its
    zeta is also the regressor the control law evaluates on the true state.
    """

    K_hat: Array
    k_hat: float
    Gamma: Array
    gamma_xi: float
    target: HurwitzTarget
    reference: CanonicalPlant

    def __post_init__(self):
        self.K_hat = np.asarray(self.K_hat, dtype=float)
        self.Gamma = np.asarray(self.Gamma, dtype=float)
        self.k_hat = float(self.k_hat)
        if not np.allclose(self.Gamma, self.Gamma.T, atol=1e-12):
            raise ValueError("Gamma must be symmetric")
        if np.min(np.linalg.eigvalsh(self.Gamma)) <= 0:
            raise ValueError("Gamma must be positive definite")
        if self.gamma_xi <= 0:
            raise ValueError("gamma_xi must be positive")

    @property
    def B_r(self) -> Array:
        out = np.zeros(self.reference.n)
        out[-1] = self.reference.b
        return out


def compute_xi(
    u_r: float,
    e_zeta: Array,
    e_x: Array,
    alpha_r: Array,
    b_r: float,
    alpha_H: Array,
) -> float:
    """Coupling signal: reference control corrected by the tracking-error terms."""
    if b_r == 0:
        raise ValueError("b_r must be nonzero")
    e_zeta = np.asarray(e_zeta, dtype=float)
    e_x = np.asarray(e_x, dtype=float)
    return float(u_r - (alpha_r @ e_zeta) / b_r + (alpha_H @ e_x) / b_r)


def mrac_control(state: AdaptiveLoopState, zeta: Array, xi: float) -> float:
    """Adaptive control law u = K_hat' zeta + k_hat * xi."""
    return float(state.K_hat @ np.asarray(zeta, dtype=float) + state.k_hat * xi)


def mrac_update(
    state: AdaptiveLoopState, zeta: Array, xi: float, e_x: Array, dt: float
) -> AdaptiveLoopState:
    """Explicit-Euler step of the gain update laws over one control period."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    zeta = np.asarray(zeta, dtype=float)
    e_x = np.asarray(e_x, dtype=float)
    if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(e_x)) and math.isfinite(xi)):
        raise NonFiniteError("non-finite inputs to adaptive gain update")
    s = float(e_x @ state.target.P @ state.B_r)
    K_new = state.K_hat - dt * (state.Gamma @ zeta) * s
    k_new = state.k_hat - dt * state.gamma_xi * xi * s
    return dataclasses.replace(state, K_hat=K_new, k_hat=k_new)


@dataclass(eq=False)
class MatchingParams:
    """Ideal gains solving the matching conditions; test oracle, not controller data."""

    K_star: Array
    k_star: float
    lam: float


def matching_params(alpha: Array, reference: CanonicalPlant, lam: float) -> MatchingParams:
    """Solve alpha + lam*b_r*K* = alpha_r and lam*k**b_r = b_r for the ideal gains."""
    if lam <= 0:
        raise ValueError("input-gain ratio lambda must be positive")
    alpha = np.asarray(alpha, dtype=float)
    b_r = reference.b
    K_star = (reference.alpha - alpha) / (lam * b_r)
    k_star = 1.0 / lam
    if np.max(np.abs(alpha + lam * b_r * K_star - reference.alpha)) > 1e-12:
        raise ArithmeticError("matching condition on alpha not satisfied to 1e-12")
    if abs(lam * k_star * b_r - b_r) > 1e-12:
        raise ArithmeticError("matching condition on b not satisfied to 1e-12")
    return MatchingParams(K_star=K_star, k_star=k_star, lam=lam)


def lyapunov_value(
    e_x: Array,
    K_tilde: Array,
    k_tilde: float,
    P: Array,
    Gamma: Array,
    gamma_xi: float,
    lam: float,
) -> float:
    """Candidate V = e'Pe + lam*tr(K~' Gamma^-1 K~) + lam*k~^2/gamma_xi (>= 0)."""
    e_x = np.asarray(e_x, dtype=float)
    K_tilde = np.asarray(K_tilde, dtype=float)
    v = float(e_x @ P @ e_x)
    v += lam * float(K_tilde @ np.linalg.solve(Gamma, K_tilde))
    v += lam * k_tilde * k_tilde / gamma_xi
    return v


@dataclass
class MracConfig:
    """Loop hyperparameters; sigma is the base pole, spread by -0.01*k per state."""

    sigma: float = -2.0
    Q_scale: float = 1.0
    Gamma_scale: float = 10.0
    gamma_xi: float = 10.0


def spread_poles(base: float, n: int) -> Array:
    """Distinct real poles base*(1 + 0.005k), keeping the placement simple-rooted.

    At the default base -2 this is -2, -2.01, -2.02, ...; the relative spacing
    keeps the companion-form eigenvalue conditioning acceptable for faster poles.
    """
    if base >= 0:
        raise StabilityError("base pole must be negative")
    return np.array([base * (1.0 + 0.005 * k) for k in range(n)])


def build_loop(
    reference: CanonicalPlant,
    cfg: MracConfig = MracConfig(),
    K0: Optional[Array] = None,
    k0: float = 1.0,
) -> AdaptiveLoopState:
    """Construct a fresh loop (gains reset to (0, 1)) around a reference plant."""
    n = reference.n
    target = build_hurwitz(reference.delta, spread_poles(cfg.sigma, n), cfg.Q_scale * np.eye(n))
    return AdaptiveLoopState(
        K_hat=np.zeros(n) if K0 is None else np.asarray(K0, dtype=float),
        k_hat=k0,
        Gamma=cfg.Gamma_scale * np.eye(n),
        gamma_xi=cfg.gamma_xi,
        target=target,
        reference=reference,
    )


def _rk4_plain(plant: CanonicalPlant, x: Array, u: float, dt: float) -> Array:
    """Unchecked RK4 on a canonical plant; finiteness is verified per control step."""
    k1 = canonical_derivative(plant, x, u)
    k2 = canonical_derivative(plant, x + 0.5 * dt * k1, u)
    k3 = canonical_derivative(plant, x + 0.5 * dt * k2, u)
    k4 = canonical_derivative(plant, x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(eq=False)
class TrackingRun:
    """Lockstep rollout of a true plant and its reference under the adaptive loop.

    Per-control-step histories hold the values observed at each boundary before
    integrating across it; trajectories are sampled at dt_int.
    """

    plant: Trajectory
    reference: Trajectory
    ctrl_times: Array
    e_hist: Array
    K_hist: Array
    k_hist: Array
    u_hist: Array
    u_r_hist: Array
    xi_hist: Array
    final_state: AdaptiveLoopState


def run_tracking(
    true_plant: CanonicalPlant,
    loop: AdaptiveLoopState,
    u_r_fn: Callable[[float, Array], float],
    x0: Array,
    horizon: float,
    cfg: IntegratorConfig,
) -> TrackingRun:
    """Simulate the two-loop closed system: reference driven by u_r, plant by the MRAC law.

    Both systems integrate RK4 at dt_int in lockstep with zero-order-hold
    controls updated every dt_ctrl; gains update once per control period.
    The reference starts at the plant's initial state.
    """
    x = np.asarray(x0, dtype=float).copy()
    x_r = x.copy()
    ref = loop.reference
    alpha_H = loop.target.alpha_H
    sub = cfg.substeps
    n_ctrl = math.ceil(horizon / cfg.dt_ctrl - 1e-9)

    times = [0.0]
    xs = [x.copy()]
    xrs = [x_r.copy()]
    us: list[float] = []
    urs: list[float] = []
    ctrl_times = np.empty(n_ctrl)
    e_hist = np.empty((n_ctrl, ref.n))
    K_hist = np.empty((n_ctrl, ref.n))
    k_hist = np.empty(n_ctrl)
    u_hist = np.empty(n_ctrl)
    u_r_hist = np.empty(n_ctrl)
    xi_hist = np.empty(n_ctrl)

    for k in range(n_ctrl):
        t = k * cfg.dt_ctrl
        u_r = float(u_r_fn(t, x_r))
        zeta_x = np.asarray(ref.zeta(x), dtype=float)
        zeta_r = np.asarray(ref.zeta(x_r), dtype=float)
        e_x = x - x_r
        xi = compute_xi(u_r, zeta_x - zeta_r, e_x, ref.alpha, ref.b, alpha_H)
        u = mrac_control(loop, zeta_x, xi)

        ctrl_times[k] = t
        e_hist[k] = e_x
        K_hist[k] = loop.K_hat
        k_hist[k] = loop.k_hat
        u_hist[k] = u
        u_r_hist[k] = u_r
        xi_hist[k] = xi

        loop = mrac_update(loop, zeta_x, xi, e_x, cfg.dt_ctrl)

        dt = cfg.dt_int
        for j in range(sub):
            x = _rk4_plain(true_plant, x, u, dt)
            x_r = _rk4_plain(ref, x_r, u_r, dt)
            times.append(k * cfg.dt_ctrl + (j + 1) * dt)
            xs.append(x.copy())
            xrs.append(x_r.copy())
            us.append(u)
            urs.append(u_r)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_r))):
            raise NonFiniteError("closed-loop state diverged during tracking run")

    plant_traj = Trajectory(np.asarray(times), np.asarray(xs), np.asarray(us).reshape(-1, 1))
    ref_traj = Trajectory(np.asarray(times), np.asarray(xrs), np.asarray(urs).reshape(-1, 1))
    return TrackingRun(
        plant=plant_traj,
        reference=ref_traj,
        ctrl_times=ctrl_times,
        e_hist=e_hist,
        K_hist=K_hist,
        k_hist=k_hist,
        u_hist=u_hist,
        u_r_hist=u_r_hist,
        xi_hist=xi_hist,
        final_state=loop,
    )
