"""Feasible-set diagnostics and the Lyapunov decrease monitor."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .condense import build_prediction, stack_constraints
from .model import LtiModel, lti_step, polytope_contains
from .numerics import as_vector
from .qp_solver import QpProblem, QpStatus, solve_qp

FEASIBILITY_TOL = 1e-8
PHASE1_SLACK_TOL = 1e-6
LYAPUNOV_FLOOR = 1e-9


@dataclass
class FeasibilityReport:
    feasible: bool
    phase1_slack: float
    witness: Optional[np.ndarray] = None   # (N, m) input sequence


@dataclass
class LyapunovReport:
    values: List[float]
    deltas: List[float]
    violations: List[int]


def is_control_sequence_feasible(model, cfg, x_k, U, tol=FEASIBILITY_TOL):
    """Roll out U from x_k; true iff all inputs and predicted states stay in
    their sets (terminal state checked against the terminal set if given)."""
    x_k = as_vector(x_k, "x_k")
    U = np.asarray(U, dtype=float).reshape(cfg.N, -1)
    X_set = cfg.state_set()
    U_set = cfg.input_set()
    x = x_k.copy()
    if not polytope_contains(X_set, x, tol):
        return False
    for i in range(cfg.N):
        if not polytope_contains(U_set, U[i], tol):
            return False
        if isinstance(model, LtiModel):
            x = lti_step(model, x, U[i])
        else:
            x = as_vector(model.step(x, U[i]))
        last = i == cfg.N - 1
        target = cfg.terminal_set if (last and cfg.terminal_set is not None) else X_set
        if not polytope_contains(target, x, tol):
            return False
    return True


def is_state_feasible(model, cfg, x_k):
    """Phase-I slack program deciding whether some input sequence keeps the
    N-step prediction inside the constraint sets. LTI models only."""
    x_k = as_vector(x_k, "x_k")
    X_set = cfg.state_set()
    if not polytope_contains(X_set, x_k, FEASIBILITY_TOL):
        return FeasibilityReport(feasible=False, phase1_slack=np.inf, witness=None)
    pm = build_prediction(model, cfg.N)
    c = stack_constraints(X_set, cfg.input_set(), cfg.terminal_set, cfg.N)
    nU = pm.m * pm.N
    # decision vector (U, s): minimize s (plus tiny regularization on U)
    free = pm.A_X @ x_k
    rows_x = c.F_X.shape[0]
    rows_u = c.F_U.shape[0]
    F = np.zeros((rows_x + rows_u, nU + 1))
    F[:rows_x, :nU] = c.F_X @ pm.B_U
    F[rows_x:, :nU] = c.F_U
    F[:, nU] = -1.0
    g = np.concatenate([c.g_X - c.F_X @ free, c.g_U])
    H = np.zeros((nU + 1, nU + 1))
    H[:nU, :nU] = 1e-8 * np.eye(nU)
    H[nU, nU] = 1e-8
    q = np.zeros(nU + 1)
    q[nU] = 1.0
    # slack below -1 is equally conclusive; the bound keeps the program bounded
    lb = np.full(nU + 1, -np.inf)
    lb[nU] = -1.0
    sol = solve_qp(QpProblem(H=H, q=q, F=F, g=g, lb=lb))
    slack = float(sol.z_star[nU])
    feasible = sol.status is not QpStatus.INFEASIBLE and slack <= PHASE1_SLACK_TOL
    witness = sol.z_star[:nU].reshape(pm.N, pm.m) if feasible else None
    return FeasibilityReport(feasible=feasible, phase1_slack=max(slack, 0.0),
                             witness=witness)


def persistent_feasibility_check(traj, model, cfg):
    """is_state_feasible at every visited state of a closed-loop trajectory."""
    return [is_state_feasible(model, cfg, x) for x in traj.states]


def lyapunov_monitor(traj, floor=LYAPUNOV_FLOOR):
    """Consecutive differences of the per-step optimal costs.

    A violation is a non-decrease (delta >= -1e-12) at a point where the
    cost is still above the absolute floor; below the floor solver noise
    dominates and deltas are ignored.
    """
    values = [float(v) for v in traj.costs]
    deltas = [values[k + 1] - values[k] for k in range(len(values) - 1)]
    violations = [k for k, dv in enumerate(deltas)
                  if dv >= -1e-12 and values[k] > floor]
    return LyapunovReport(values=values, deltas=deltas, violations=violations)
