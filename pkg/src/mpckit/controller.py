"""Receding-horizon loops for linear and nonlinear MPC, with set-point tracking."""

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .condense import (assemble_condensed_qp, assemble_sparse_qp,
                       build_prediction, build_weights,
                       reduce_control_horizon, stack_constraints)
from .exceptions import (InfeasibleStepError, InvalidHorizonError,
                         InvalidWeightError, ReferenceInfeasibleError)
from .model import (LtiModel, NonlinearModel, Polytope, empty_polytope,
                    lti_step, polytope_contains, steady_state_input_lti,
                    steady_state_input_nonlinear)
from .nlp_solver import NlpProblem, build_feq, build_feq_jacobian, solve_nlp
from .numerics import as_matrix, as_vector
from .qp_solver import QpStatus, SolverSettings, solve_qp

SPARSE = "sparse"
CONDENSED = "condensed"


@dataclass
class MpcConfig:
    """Horizons, weights, constraint sets and solver options for one controller."""

    N: int
    N_T: int
    Q: np.ndarray
    R: np.ndarray
    N_C: Optional[int] = None
    Q_N: Optional[np.ndarray] = None
    X_set: Optional[Polytope] = None
    U_set: Optional[Polytope] = None
    terminal_set: Optional[Polytope] = None
    formulation: str = CONDENSED
    reference: Optional[np.ndarray] = None
    settings: SolverSettings = field(default_factory=SolverSettings)
    warm_start: bool = True

    def __post_init__(self):
        self.Q = as_matrix(self.Q, "Q")
        self.R = as_matrix(self.R, "R")
        self.Q_N = self.Q.copy() if self.Q_N is None else as_matrix(self.Q_N, "Q_N")
        if self.N_C is None:
            self.N_C = self.N
        if self.N < 1:
            raise InvalidHorizonError(f"prediction horizon must be >= 1, got {self.N}")
        if self.N == 1:
            warnings.warn("prediction horizon N=1 is below the usual 2 <= N <= N_T range")
        if self.N > self.N_T:
            raise InvalidHorizonError(f"N={self.N} exceeds N_T={self.N_T}")
        if not 1 <= self.N_C <= self.N:
            raise InvalidHorizonError(f"control horizon must satisfy 1 <= N_C <= N, got {self.N_C}")
        if self.formulation not in (SPARSE, CONDENSED):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        r_eigs = np.linalg.eigvalsh(0.5 * (self.R + self.R.T))
        if r_eigs.min() <= 0:
            raise InvalidWeightError("R must be positive definite")
        q_eigs = np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))
        if q_eigs.min() < -1e-10:
            raise InvalidWeightError("Q must be positive semidefinite")
        if q_eigs.min() <= 1e-12:
            warnings.warn("Q is only positive semidefinite")
        if self.reference is not None:
            self.reference = as_vector(self.reference, "reference")

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]

    def state_set(self):
        return self.X_set if self.X_set is not None else empty_polytope(self.n)

    def input_set(self):
        return self.U_set if self.U_set is not None else empty_polytope(self.m)


@dataclass
class MpcStepResult:
    u_k: np.ndarray
    U_star: np.ndarray      # (N, m)
    X_star: np.ndarray      # (N+1, n)
    J_star: float
    solver_status: object
    iterations: int
    solution: object = None  # raw solver output, used for warm starting


@dataclass
class Trajectory:
    states: List[np.ndarray] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)
    statuses: List[object] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)


class _LmpcMatrices:
    """Per-configuration matrices shared by every LMPC step."""

    def __init__(self, model, cfg):
        self.pm = build_prediction(model, cfg.N)
        self.w = build_weights(cfg.Q, cfg.R, cfg.Q_N, cfg.N)
        self.c = stack_constraints(cfg.state_set(), cfg.input_set(),
                                   cfg.terminal_set, cfg.N)


def lmpc_step(model, cfg, x_k, warm=None, _mats=None):
    """One LMPC solve: returns the applied input and the full predicted sequences."""
    x_k = as_vector(x_k, "x_k")
    mats = _mats if _mats is not None else _LmpcMatrices(model, cfg)
    pm, w, c = mats.pm, mats.w, mats.c
    n, m, N = pm.n, pm.m, pm.N

    if cfg.formulation == SPARSE:
        qp = assemble_sparse_qp(pm, w, c, x_k)
        sol = solve_qp(qp, warm=warm, settings=cfg.settings)
        if sol.status is QpStatus.INFEASIBLE:
            raise InfeasibleStepError("LMPC problem infeasible", state=x_k)
        z = sol.z_star
        X = z[:n * (N + 1)].reshape(N + 1, n)
        U = z[n * (N + 1):].reshape(N, m)
        J = sol.objective
    else:
        qp = assemble_condensed_qp(pm, w, c, x_k)
        qp_red = reduce_control_horizon(qp, N, cfg.N_C)
        sol = solve_qp(qp_red, warm=warm, settings=cfg.settings)
        if sol.status is QpStatus.INFEASIBLE:
            raise InfeasibleStepError("LMPC problem infeasible", state=x_k)
        U_free = sol.z_star
        U = np.zeros(m * N)
        U[:U_free.shape[0]] = U_free
        X = (pm.A_X @ x_k + pm.B_U @ U).reshape(N + 1, n)
        U = U.reshape(N, m)
        J = sol.objective  # includes the carried constant r_k
    return MpcStepResult(u_k=U[0].copy(), U_star=U, X_star=X, J_star=J,
                         solver_status=sol.status, iterations=sol.iterations,
                         solution=sol)


def nmpc_step(model, cfg, x_k, warm=None):
    """One NMPC solve via SQP on the trajectory decision vector."""
    x_k = as_vector(x_k, "x_k")
    n, m, N = model.n, model.m, cfg.N
    residual, d = build_feq(model, x_k, N)
    jacobian = build_feq_jacobian(model, x_k, N)
    w = build_weights(cfg.Q, cfg.R, cfg.Q_N, N)
    c = stack_constraints(cfg.state_set(), cfg.input_set(), cfg.terminal_set, N)
    nX = n * (N + 1)
    H = np.zeros((d, d))
    H[:nX, :nX] = w.Q_X
    H[nX:, nX:] = w.R_U
    F = np.zeros((c.F_X.shape[0] + c.F_U.shape[0], d))
    F[:c.F_X.shape[0], :nX] = c.F_X
    F[c.F_X.shape[0]:, nX:] = c.F_U
    g = np.concatenate([c.g_X, c.g_U])
    p = NlpProblem(H=H, F=F if F.shape[0] else None, g=g if F.shape[0] else None,
                   residual=residual, jacobian=jacobian)
    if warm is not None and np.shape(warm) == (d,):
        z0 = np.asarray(warm, dtype=float)
    else:
        z0 = np.concatenate([np.tile(x_k, N + 1), np.zeros(m * N)])
    sol = solve_nlp(p, z0, settings=cfg.settings)
    z = sol.z_star
    X = z[:nX].reshape(N + 1, n)
    U = z[nX:].reshape(N, m)
    return MpcStepResult(u_k=U[0].copy(), U_star=U, X_star=X, J_star=sol.objective,
                         solver_status=sol.status, iterations=sol.iterations,
                         solution=sol)


def tracking_transform(cfg, model, x_r):
    """Steady input and constraint sets shifted into error coordinates.

    Returns (u_r, shifted X_set, shifted U_set, error-dynamics model or None).
    """
    x_r = as_vector(x_r, "x_r")
    X_set = cfg.state_set()
    U_set = cfg.input_set()
    if X_set.rows and not polytope_contains(X_set, x_r):
        raise ReferenceInfeasibleError("reference state lies outside the state constraint set")
    if isinstance(model, LtiModel):
        u_r = steady_state_input_lti(model, x_r)
        err_model = None
    else:
        u_r = steady_state_input_nonlinear(model, x_r)
        err_model = NonlinearModel(
            n=model.n, m=model.m,
            step=lambda xe, ue: as_vector(model.step(xe + x_r, ue + u_r)) - x_r,
            jac_x=(lambda xe, ue: model.jac_x(xe + x_r, ue + u_r)) if model.jac_x else None,
            jac_u=(lambda xe, ue: model.jac_u(xe + x_r, ue + u_r)) if model.jac_u else None,
        )
    if U_set.rows and not polytope_contains(U_set, u_r):
        raise ReferenceInfeasibleError(
            "steady-state input for the reference violates the input constraints")
    X_shift = Polytope(X_set.F, X_set.g - X_set.F @ x_r) if X_set.rows else X_set
    U_shift = Polytope(U_set.F, U_set.g - U_set.F @ u_r) if U_set.rows else U_set
    return u_r, X_shift, U_shift, err_model


def run_closed_loop(model, cfg, x_0):
    """Simulate the receding-horizon loop for N_T steps.

    An infeasible step raises InfeasibleStepError carrying the partial
    trajectory and the failing state.
    """
    x_0 = as_vector(x_0, "x_0")
    is_lti = isinstance(model, LtiModel)

    x_r = cfg.reference
    u_r = None
    if x_r is not None:
        u_r, X_shift, U_shift, err_model = tracking_transform(cfg, model, x_r)
        inner_cfg = replace(cfg, X_set=X_shift, U_set=U_shift, reference=None)
        # The plant is the same model the controller predicts with: in
        # tracking mode that is the error-coordinate model, so the loop
        # simulates in error coordinates and translates back for the record.
        inner_model = model if is_lti else err_model
    else:
        inner_cfg = cfg
        inner_model = model

    mats = _LmpcMatrices(inner_model, inner_cfg) if is_lti else None

    traj = Trajectory()
    xe = x_0 - x_r if x_r is not None else x_0.copy()
    traj.states.append(xe + x_r if x_r is not None else xe.copy())
    warm = None
    for k in range(cfg.N_T):
        try:
            if is_lti:
                step = lmpc_step(inner_model, inner_cfg, xe, warm=warm, _mats=mats)
            else:
                step = nmpc_step(inner_model, inner_cfg, xe, warm=warm)
        except InfeasibleStepError as err:
            state = xe + x_r if x_r is not None else xe
            raise InfeasibleStepError(
                f"closed loop infeasible at step {k}",
                state=state.copy(), step=k, trajectory=traj) from err
        if is_lti:
            xe = lti_step(inner_model, xe, step.u_k)
        else:
            xe = as_vector(inner_model.step(xe, step.u_k))
        u = step.u_k + u_r if u_r is not None else step.u_k
        x = xe + x_r if x_r is not None else xe
        traj.states.append(x.copy())
        traj.inputs.append(np.asarray(u, dtype=float).copy())
        traj.costs.append(step.J_star)
        traj.statuses.append(step.solver_status)
        traj.iterations.append(step.iterations)
        if cfg.warm_start:
            warm = _next_warm(step, inner_cfg, inner_model, is_lti)
        else:
            warm = None
    return traj


def _next_warm(step, cfg, model, is_lti):
    """Shift the step-k solution one block forward as the k+1 initial guess."""
    n, m, N = (model.n, model.m, cfg.N)
    X_s = np.vstack([step.X_star[1:], step.X_star[-1]])
    U_s = np.vstack([step.U_star[1:], np.zeros((1, m))])
    if is_lti:
        if cfg.formulation == SPARSE:
            return np.concatenate([X_s.ravel(), U_s.ravel()])
        return U_s.ravel()[:m * cfg.N_C]
    return np.concatenate([X_s.ravel(), U_s.ravel()])
