"""Continuous-time plants in controllable-canonical form and fixed-step RK4 simulation.

State convention: an n-dimensional chain of integrators with gains delta_1..delta_{n-1}
and a scalar input entering the last component through alpha' zeta(x) + b*u.
Controls are piecewise constant (zero-order hold) between controller updates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

Array = np.ndarray
DerivFn = Callable[[Array, Union[float, Array]], Array]
# Controllers receive (t, x); return the control to hold, or None to stop.
ControllerFn = Callable[[float, Array], Union[float, Array, None]]


class DimensionError(ValueError):
    """A state or parameter vector has an incompatible dimension."""


class NonFiniteError(RuntimeError):
    """A derivative or propagated state stopped being finite."""


@dataclass(eq=False)
class CanonicalPlant:
    """Chain-of-integrators plant with the nonlinearity entering the last state.

    delta: chain gains, length n-1, all nonzero.
    alpha: nonlinearity weights, length n.
    b:     scalar input gain, nonzero.
    zeta:  deterministic feature map, state vector -> n-vector.
    """

    delta: Array
    alpha: Array
    b: float
    zeta: Callable[[Array], Array]

    def __post_init__(self):
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.b = float(self.b)
        n = self.alpha.shape[0]
        if self.delta.shape != (n - 1,):
            raise DimensionError(
                f"delta must have {n - 1} entries for an order-{n} plant, got {self.delta.shape}"
            )
        if np.any(self.delta == 0.0):
            raise ValueError("all chain gains delta_i must be nonzero")
        if self.b == 0.0:
            raise ValueError("input gain b must be nonzero")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


def canonical_derivative(plant: CanonicalPlant, x: Array, u: float) -> Array:
    """Time derivative of a canonical plant: chain pass-through plus alpha' zeta(x) + b*u."""
    x = np.asarray(x, dtype=float)
    n = plant.n
    if x.shape != (n,):
        raise DimensionError(f"state has shape {x.shape}, plant expects ({n},)")
    z = np.asarray(plant.zeta(x), dtype=float)
    if z.shape != (n,):
        raise DimensionError(f"zeta returned shape {z.shape}, expected ({n},)")
    dx = np.empty(n)
    dx[: n - 1] = plant.delta * x[1:]
    dx[n - 1] = float(plant.alpha @ z) + plant.b * float(u)
    return dx


def make_derivative(plant: CanonicalPlant) -> DerivFn:
    """Close a plant over canonical_derivative for use with rk4_step / simulate."""
    return lambda x, u: canonical_derivative(plant, x, u)


def _check_stage(k: Array, stage: str) -> Array:
    k = np.asarray(k, dtype=float)
    if not np.all(np.isfinite(k)):
        raise NonFiniteError(f"non-finite derivative at RK4 stage {stage}")
    return k


def rk4_step(f: DerivFn, x: Array, u, dt: float) -> Array:
    """One classical 4th-order Runge-Kutta step with the control held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = _check_stage(f(x, u), "k1")
    k2 = _check_stage(f(x + 0.5 * dt * k1, u), "k2")
    k3 = _check_stage(f(x + 0.5 * dt * k2, u), "k3")
    k4 = _check_stage(f(x + dt * k3, u), "k4")
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed integration step and (integer-multiple) control update period, in seconds."""

    dt_int: float = 0.001
    dt_ctrl: float = 0.05

    def __post_init__(self):
        if self.dt_int <= 0:
            raise ValueError("dt_int must be positive")
        ratio = self.dt_ctrl / self.dt_int
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_ctrl must be an exact positive integer multiple of dt_int")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_ctrl / self.dt_int))


@dataclass(eq=False)
class Trajectory:
    """Sampled rollout: states at every dt_int instant, ZOH control over each interval.

    controls has one row per interval, i.e. len(times) - 1 rows; controls[k] was
    active over [times[k], times[k+1]).
    """

    times: Array
    states: Array
    controls: Array
    aborted: bool = False
    abort_reason: Optional[str] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise DimensionError("states and times must have equal length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


def simulate(
    f: DerivFn,
    controller: ControllerFn,
    x0: Array,
    horizon: float,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Roll a plant forward under a zero-order-hold controller.

    The controller is queried once per dt_ctrl boundary with (t, state); its return
    is held across all dt_int substeps of that interval. Returning None stops the
    run. A non-finite propagated state aborts with the partial trajectory marked.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    x = np.asarray(x0, dtype=float).copy()
    sub = cfg.substeps
    n_steps = math.ceil(horizon / cfg.dt_int - 1e-9)
    times = [0.0]
    states = [x.copy()]
    controls: list[Array] = []
    u = None
    u_arr = None
    aborted = False
    reason = None
    for k in range(n_steps):
        if k % sub == 0:
            u = controller(k * cfg.dt_int, x)
            if u is None:
                break
            u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        try:
            x = rk4_step(f, x, u, cfg.dt_int)
        except NonFiniteError as err:
            aborted, reason = True, str(err)
            break
        if not np.all(np.isfinite(x)):
            aborted, reason = True, "non-finite state propagated"
            break
        times.append((k + 1) * cfg.dt_int)
        states.append(x.copy())
        controls.append(u_arr.copy())
    m = controls[0].shape[0] if controls else 0
    return Trajectory(
        np.asarray(times),
        np.asarray(states),
        np.asarray(controls).reshape(len(controls), m),
        aborted=aborted,
        abort_reason=reason,
    )


def pendulum_plant(m: float, l: float, mu: float, g: float = 9.81) -> CanonicalPlant:
    """Inverted pendulum m*l^2*th'' = m*g*l*sin(th) - mu*th' + u in canonical form.

    Maps to delta=[1], alpha=[g/l, -mu/(m*l^2)], b=1/(m*l^2), zeta=[sin x1, x2].
    """
    if m <= 0 or l <= 0:
        raise ValueError("pendulum mass and length must be positive")
    if mu < 0:
        raise ValueError("friction coefficient mu must be nonnegative")
    ml2 = m * l * l
    return CanonicalPlant(
        delta=np.array([1.0]),
        alpha=np.array([g / l, -mu / ml2]),
        b=1.0 / ml2,
        zeta=lambda x: np.array([math.sin(x[0]), x[1]]),
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write `t,x1,...,xn,u1,...,um` rows, one per dt_int sample.

    Floats are serialized with shortest round-trip repr (>= 9 significant digits).
    The control active over the final sample's preceding interval is repeated on
    the last row so every row is complete.
    """
    n = traj.states.shape[1]
    m = traj.controls.shape[1] if traj.controls.size else 0
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.times.shape[0]):
            if m:
                u = traj.controls[min(k, traj.controls.shape[0] - 1)]
                u_cells = [repr(float(v)) for v in u]
            else:
                u_cells = []
            writer.writerow(
                [repr(float(traj.times[k]))]
                + [repr(float(v)) for v in traj.states[k]]
                + u_cells
            )


def trajectory_from_csv(path) -> Trajectory:
    """Inverse of trajectory_to_csv (the repeated last control row is dropped)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        times, states, controls = [], [], []
        for row in reader:
            times.append(float(row[0]))
            states.append([float(v) for v in row[1 : 1 + n]])
            controls.append([float(v) for v in row[1 + n : 1 + n + m]])
    if controls:
        controls = controls[:-1]
    return Trajectory(
        np.asarray(times),
        np.asarray(states),
        np.asarray(controls).reshape(len(controls), m),
    )
