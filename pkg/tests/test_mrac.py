import dataclasses
import math

import numpy as np
import pytest

import example_checks as ec
from mracrl.mrac import (
    MracConfig,
    StabilityError,
    build_hurwitz,
    build_loop,
    compute_xi,
    matching_params,
    mrac_update,
    run_tracking,
    solve_lyapunov,
    spread_poles,
)
from mracrl.simcore import (
    IntegratorConfig,
    NonFiniteError,
    canonical_derivative,
    pendulum_plant,
    rk4_step,
)


def test_build_hurwitz_examples():
    ec.check_build_hurwitz()


def test_solve_lyapunov_examples():
    ec.check_solve_lyapunov()


def test_compute_xi_examples():
    ec.check_compute_xi()


def test_mrac_control_examples():
    ec.check_mrac_control()


def test_mrac_update_examples():
    ec.check_mrac_update()


def test_matching_params_examples():
    ec.check_matching_params()


def test_lyapunov_value_examples():
    ec.check_lyapunov_value()


def test_build_hurwitz_rejects_bad_spectra():
    with pytest.raises(StabilityError):
        build_hurwitz([1.0], [1.0, -2.0], np.eye(2))
    with pytest.raises(ValueError):
        build_hurwitz([1.0], [-1.0 + 1.0j, -1.0 + 2.0j], np.eye(2))


def test_build_hurwitz_conjugate_pair_stays_real():
    target = build_hurwitz([1.0, 2.0], [-1.0 + 2.0j, -1.0 - 2.0j, -3.0], np.eye(3))
    assert target.A_H.dtype == np.float64
    eig = np.sort_complex(np.linalg.eigvals(target.A_H))
    want = np.sort_complex(np.array([-1.0 + 2.0j, -1.0 - 2.0j, -3.0]))
    assert np.max(np.abs(eig - want)) < 1e-9


def test_hurwitz_target_invariants():
    target = build_hurwitz([1.0, -2.0, 0.5], spread_poles(-2.0, 4), 0.7 * np.eye(4))
    assert np.max(np.abs(target.P @ target.A_H + target.A_H.T @ target.P + target.Q)) <= 1e-8
    assert np.allclose(target.P, target.P.T)
    assert np.min(np.linalg.eigvalsh(target.P)) > 0
    assert np.min(np.linalg.eigvalsh(target.Q)) > 0


def test_solve_lyapunov_random_hurwitz():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(1, 7))
        R = rng.standard_normal((n, n))
        A = R - (np.max(np.linalg.eigvals(R).real) + 1.0) * np.eye(n)
        B = rng.standard_normal((n, n))
        Q = B @ B.T + np.eye(n)
        P = solve_lyapunov(A, Q)
        assert np.max(np.abs(P @ A + A.T @ P + Q)) <= 1e-8
        assert np.min(np.linalg.eigvalsh(P)) > 0


def test_solve_lyapunov_rejects_unstable():
    with pytest.raises(StabilityError):
        solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


def test_mrac_update_rejects_nonfinite():
    ref = pendulum_plant(1.0, 1.0, 0.1)
    loop = build_loop(ref, MracConfig())
    with pytest.raises(NonFiniteError):
        mrac_update(loop, np.array([math.nan, 0.0]), 0.0, np.zeros(2), 0.01)


def test_matching_rejects_nonpositive_lambda():
    ref = pendulum_plant(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        matching_params(ref.alpha, ref, 0.0)


def _scripted_u_r(amp=1.5, omega=1.0):
    return lambda t, xr: amp * math.sin(omega * t) - 2.0 * xr[0] - 1.0 * xr[1]


def test_reduction_property_no_uncertainty():
    # alpha = alpha_r, lambda = 1, matched start: control equals u_r throughout
    ref = pendulum_plant(1.0, 1.0, 0.1)
    loop = build_loop(ref, MracConfig())
    cfg = IntegratorConfig(dt_int=0.001, dt_ctrl=0.02)
    run = run_tracking(ref, loop, _scripted_u_r(), np.array([0.3, -0.2]), 2.0, cfg)
    assert np.max(np.abs(run.u_hist - run.u_r_hist)) < 1e-10
    assert np.max(np.abs(run.plant.states - run.reference.states)) == 0.0


def _pendulum_pair(seed, pct=0.3):
    rng = np.random.default_rng(seed)
    ref = pendulum_plant(1.0, 1.0, 0.1)
    true = pendulum_plant(
        1.0 * (1 + rng.uniform(-pct, pct)),
        1.0 * (1 + rng.uniform(-pct, pct)),
        0.1 * (1 + rng.uniform(-pct, pct)),
    )
    x0 = rng.uniform(-0.5, 0.5, size=2)
    return ref, true, x0


def _lyapunov_series(run, loop, true, ref):
    lam = true.b / ref.b
    match = matching_params(true.alpha, ref, lam)
    K_t = run.K_hist - match.K_star
    k_t = run.k_hist - match.k_star
    G_inv = np.linalg.inv(loop.Gamma)
    return (
        np.einsum("ki,ij,kj->k", run.e_hist, loop.target.P, run.e_hist)
        + lam * np.einsum("ki,ij,kj->k", K_t, G_inv, K_t)
        + lam * k_t**2 / loop.gamma_xi
    )


def test_tracking_convergence_and_lyapunov_monotone():
    cfg = IntegratorConfig(dt_int=0.001, dt_ctrl=0.001)
    for seed in range(5):
        ref, true, x0 = _pendulum_pair(seed)
        loop = build_loop(ref, MracConfig(sigma=-2.0, Gamma_scale=12.0, gamma_xi=12.0))
        run = run_tracking(true, loop, _scripted_u_r(), x0, 10.0, cfg)
        e_final = np.linalg.norm(run.plant.states[-1] - run.reference.states[-1])
        assert e_final < 1e-2
        V = _lyapunov_series(run, loop, true, ref)
        assert np.max(np.diff(V)) <= 1e-4 * cfg.dt_ctrl


def test_gain_boundedness_60s():
    ref, true, x0 = _pendulum_pair(123, pct=0.25)
    loop = build_loop(ref, MracConfig(sigma=-2.0, Gamma_scale=10.0, gamma_xi=10.0))
    cfg = IntegratorConfig(dt_int=0.001, dt_ctrl=0.01)
    run = run_tracking(true, loop, _scripted_u_r(), x0, 60.0, cfg)
    assert np.all(np.isfinite(run.K_hist)) and np.all(np.isfinite(run.k_hist))
    assert np.all(np.isfinite(run.plant.states))


def test_error_dynamics_consistency_smooth_case():
    # continuous closed loop (gains inside the ODE) stays smooth, so a
    # high-order difference of e_x must match the error equation pointwise
    ref = pendulum_plant(1.0, 1.0, 0.1)
    true = pendulum_plant(1.25, 0.85, 0.13)
    loop = build_loop(ref, MracConfig(sigma=-2.0, Gamma_scale=5.0, gamma_xi=5.0))
    A_H, P, B_r = loop.target.A_H, loop.target.P, loop.B_r
    lam = true.b / ref.b
    match = matching_params(true.alpha, ref, lam)
    u_r_fn = _scripted_u_r()

    def aug_deriv(s, _):
        t, x, xr, K, k = s[0], s[1:3], s[3:5], s[5:7], s[7]
        u_r = u_r_fn(t, xr)
        zx, zr = ref.zeta(x), ref.zeta(xr)
        e = x - xr
        xi = compute_xi(u_r, zx - zr, e, ref.alpha, ref.b, loop.target.alpha_H)
        u = K @ zx + k * xi
        s_sc = float(e @ P @ B_r)
        return np.concatenate((
            [1.0],
            canonical_derivative(true, x, u),
            canonical_derivative(ref, xr, u_r),
            -loop.Gamma @ zx * s_sc,
            [-loop.gamma_xi * xi * s_sc],
        ))

    dt, T = 0.001, 3.0
    n = int(T / dt)
    s = np.concatenate(([0.0], [0.3, -0.2], [0.3, -0.2], [0.0, 0.0], [1.0]))
    traj = np.empty((n + 1, 8))
    traj[0] = s
    for i in range(n):
        s = rk4_step(aug_deriv, s, 0.0, dt)
        traj[i + 1] = s

    e_traj = traj[:, 1:3] - traj[:, 3:5]
    de = (-e_traj[4:] + 8 * e_traj[3:-1] - 8 * e_traj[1:-3] + e_traj[:-4]) / (12 * dt)
    rhs = np.empty_like(de)
    for i in range(2, n - 1):
        t, x, xr, K, k = traj[i, 0], traj[i, 1:3], traj[i, 3:5], traj[i, 5:7], traj[i, 7]
        u_r = u_r_fn(t, xr)
        zx = ref.zeta(x)
        e = x - xr
        xi = compute_xi(u_r, zx - ref.zeta(xr), e, ref.alpha, ref.b, loop.target.alpha_H)
        rhs[i - 2] = A_H @ e + lam * B_r * ((K - match.K_star) @ zx + (k - match.k_star) * xi)
    assert np.max(np.abs(de - rhs)) < 1e-6


def test_adaptive_loop_state_invariants():
    ref = pendulum_plant(1.0, 1.0, 0.1)
    loop = build_loop(ref, MracConfig())
    b_vec = loop.B_r
    assert b_vec[-1] == ref.b
    assert np.count_nonzero(b_vec) == 1
    with pytest.raises(ValueError):
        dataclasses.replace(loop, Gamma=np.array([[1.0, 0.2], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        dataclasses.replace(loop, gamma_xi=-1.0)
