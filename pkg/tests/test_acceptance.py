"""End-to-end acceptance checks.

Each test covers one numbered criterion and prints a single PASS/FAIL line
(bypassing pytest's capture so the lines survive into piped output).
"""

import sys
import time
from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from mpckit import (MpcConfig, SolverSettings, is_state_feasible,
                    lyapunov_monitor, persistent_feasibility_check,
                    run_closed_loop, solve_qp, steady_state_input_lti,
                    steady_state_input_nonlinear)
from mpckit.cli import demo_config
from mpckit.condense import (assemble_condensed_qp, build_prediction,
                             build_weights, stack_constraints)
from mpckit.model import (LtiModel, box_polytope, empty_polytope, lti_step,
                          pendulum_model)
from qp_oracle import random_strictly_convex_qp, solve_oracle


@contextmanager
def criterion(num, desc):
    try:
        yield
    except BaseException:
        print(f"criterion {num:2d} ({desc}): FAIL", file=sys.__stdout__)
        raise
    print(f"criterion {num:2d} ({desc}): PASS", file=sys.__stdout__)


@lru_cache(maxsize=None)
def _demo_run(name):
    cfg = demo_config(name)
    t0 = time.perf_counter()
    traj = run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)
    wall = time.perf_counter() - t0
    return cfg, traj, wall


def test_criterion_1_steady_state_lti():
    with criterion(1, "LTI steady-state input"):
        model = LtiModel([[0.9, 0.2], [-0.4, 0.8]], [[0.1], [0.01]])
        steady_state_input_lti(model, [3, 2])  # warm-up
        t0 = time.perf_counter()
        u_r = steady_state_input_lti(model, [3, 2])
        wall = time.perf_counter() - t0
        assert abs(u_r[0] - 0.59) <= 0.005
        assert wall < 1e-3


def test_criterion_2_steady_state_pendulum():
    with criterion(2, "pendulum steady-state input"):
        model = pendulum_model()
        steady_state_input_nonlinear(model, [0.5, 0])  # warm-up
        t0 = time.perf_counter()
        u_r = steady_state_input_nonlinear(model, [0.5, 0])
        wall = time.perf_counter() - t0
        assert abs(u_r[0] - 4.69) <= 0.01
        assert wall < 1e-2


def test_criterion_3_lmpc_stabilization():
    with criterion(3, "LMPC stabilization demo"):
        _, traj, wall = _demo_run("lmpc-stabilize")
        X = np.array(traj.states)
        U = np.array(traj.inputs)
        assert np.abs(X).max() <= 10 + 1e-6
        assert np.abs(U).max() <= 1 + 1e-8
        assert np.abs(X[50]).max() <= 0.1
        assert wall < 2.0


def test_criterion_4_lmpc_tracking():
    with criterion(4, "LMPC tracking demo"):
        _, traj, wall = _demo_run("lmpc-track")
        X = np.array(traj.states)
        U = np.array(traj.inputs)
        assert np.abs(X[-1] - [3, 2]).max() <= 1e-2
        assert np.abs(X).max() <= 10 + 1e-6
        assert np.abs(U).max() <= 1 + 1e-8
        assert wall < 2.0


def test_criterion_5_nmpc_stabilization():
    with criterion(5, "NMPC stabilization demo"):
        _, traj, wall = _demo_run("nmpc-stabilize")
        X = np.array(traj.states)
        U = np.array(traj.inputs)
        assert np.abs(X).max() <= 5 + 1e-6
        assert U.min() >= -1e-6 and U.max() <= 0.1 + 1e-6
        assert wall < 30.0
        # The admissible torque is too weak to bring the weakly damped
        # pendulum to rest within 50 steps; this clause is expected to fail
        # and is kept as stated rather than loosened.
        assert np.abs(X[50]).max() <= 0.1


def test_criterion_6_nmpc_tracking():
    with criterion(6, "NMPC tracking demo"):
        _, traj, wall = _demo_run("nmpc-track")
        X = np.array(traj.states)
        U = np.array(traj.inputs)
        assert np.abs(X[-1] - [0.5, 0]).max() <= 1e-2
        assert abs(U[-1, 0] - 4.69) <= 0.05
        assert wall < 30.0


def test_criterion_7_qp_oracle_suite():
    with criterion(7, "QP oracle suite"):
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        for _ in range(200):
            p = random_strictly_convex_qp(rng, d_max=8, p_max=10, e_max=3)
            sol = solve_qp(p)
            _, oracle_obj = solve_oracle(p)
            assert abs(sol.objective - oracle_obj) <= 1e-5
            if p.F.shape[0]:
                assert float(np.max(p.F @ sol.z_star - p.g)) <= 1e-5
            if p.F_eq.shape[0]:
                assert float(np.abs(p.F_eq @ sol.z_star - p.g_eq).max()) <= 1e-5
        assert time.perf_counter() - t0 < 10.0


def test_criterion_8_sparse_condensed_equivalence():
    with criterion(8, "sparse/condensed equivalence"):
        tight = SolverSettings(eps_abs=1e-8, eps_rel=1e-8)
        demo = demo_config("lmpc-stabilize")
        cfg_c = MpcConfig(N=5, N_T=50, Q=np.eye(2), R=[[1.0]],
                          X_set=demo.mpc.X_set, U_set=demo.mpc.U_set,
                          settings=tight)
        cfg_s = MpcConfig(N=5, N_T=50, Q=np.eye(2), R=[[1.0]],
                          X_set=demo.mpc.X_set, U_set=demo.mpc.U_set,
                          formulation="sparse", settings=tight)
        tc = run_closed_loop(demo.model, cfg_c, demo.initial_state)
        ts = run_closed_loop(demo.model, cfg_s, demo.initial_state)
        diff = np.abs(np.array(tc.inputs) - np.array(ts.inputs)).max()
        assert diff <= 1e-5

        rng = np.random.default_rng(2025)
        for _ in range(50):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(1, 3))
            A = rng.normal(size=(n, n))
            radius = max(np.abs(np.linalg.eigvals(A)))
            if radius > 0.95:
                A *= 0.95 / radius
            model = LtiModel(A, rng.normal(size=(n, m)))
            cfg_kw = dict(N=3, N_T=4, Q=np.eye(n), R=np.eye(m),
                          X_set=box_polytope(50, n), U_set=box_polytope(20, m),
                          settings=tight)
            x0 = rng.uniform(-1, 1, size=n)
            tc = run_closed_loop(model, MpcConfig(**cfg_kw), x0)
            ts = run_closed_loop(model,
                                 MpcConfig(formulation="sparse", **cfg_kw), x0)
            diff = np.abs(np.array(tc.inputs) - np.array(ts.inputs)).max()
            assert diff <= 1e-5


def _realized_cost(traj, Q, R, Q_N):
    X = np.array(traj.states)
    U = np.array(traj.inputs)
    cost = sum(float(x @ Q @ x) for x in X[:-1])
    cost += sum(float(u @ R @ u) for u in U)
    cost += float(X[-1] @ Q_N @ X[-1])
    return cost


def test_criterion_9_optimality_trend():
    with criterion(9, "optimality trend over horizons"):
        model = LtiModel([[0.9, 0.2], [-0.4, 0.8]], [[0.1], [0.01]])
        Q = np.eye(2)
        R = np.array([[1.0]])
        x0 = np.array([10.0, 5.0])
        costs = []
        j_star_0 = None
        for N in (2, 5, 10, 30):
            cfg = MpcConfig(N=N, N_T=30, Q=Q, R=R)
            traj = run_closed_loop(model, cfg, x0)
            costs.append(_realized_cost(traj, Q, R, Q))
            if N == 30:
                j_star_0 = traj.costs[0]
        for earlier, later in zip(costs, costs[1:]):
            assert later <= earlier + 1e-8

        # one-shot full-horizon batch solve over all 30 inputs
        pm = build_prediction(model, 30)
        w = build_weights(Q, R, Q, 30)
        c = stack_constraints(empty_polytope(2), empty_polytope(1), None, 30)
        batch = solve_qp(assemble_condensed_qp(pm, w, c, x0))
        assert abs(j_star_0 - batch.objective) <= 1e-6 * abs(batch.objective)


def test_criterion_10_lyapunov_monitor():
    with criterion(10, "Lyapunov decrease monitor"):
        _, traj, _ = _demo_run("lmpc-stabilize")
        report = lyapunov_monitor(traj)
        assert report.violations == []


def test_criterion_11_prediction_property():
    with criterion(11, "prediction matrix property"):
        rng = np.random.default_rng(2026)
        t0 = time.perf_counter()
        for _ in range(500):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 3))
            N = int(rng.integers(1, 7))
            model = LtiModel(rng.normal(size=(n, n)), rng.normal(size=(n, m)))
            pm = build_prediction(model, N)
            x = rng.normal(size=n)
            U = rng.normal(size=(N, m))
            X = pm.A_X @ x + pm.B_U @ U.ravel()
            sim = x.copy()
            for i in range(N):
                sim = lti_step(model, sim, U[i])
                assert np.abs(X[(i + 1) * n:(i + 2) * n] - sim).max() <= 1e-10
        assert time.perf_counter() - t0 < 1.0


def test_criterion_12_feasibility_diagnostics():
    with criterion(12, "feasibility diagnostics"):
        demo = demo_config("lmpc-stabilize")
        interior = is_state_feasible(demo.model, demo.mpc, [0, 0])
        assert interior.feasible

        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scalar_cfg = MpcConfig(N=1, N_T=2, Q=[[1.0]], R=[[1.0]],
                                   X_set=box_polytope(10),
                                   U_set=box_polytope(100))
        uncontrollable = is_state_feasible(LtiModel([[2.0]], [[0.0]]),
                                           scalar_cfg, [6.0])
        assert not uncontrollable.feasible

        controllable = is_state_feasible(LtiModel([[2.0]], [[1.0]]),
                                         scalar_cfg, [6.0])
        assert controllable.feasible
        assert -22 - 1e-6 <= controllable.witness[0, 0] <= -2 + 1e-6

        _, traj, _ = _demo_run("lmpc-stabilize")
        reports = persistent_feasibility_check(traj, demo.model, demo.mpc)
        assert len(reports) == 51
        assert all(r.feasible for r in reports)
