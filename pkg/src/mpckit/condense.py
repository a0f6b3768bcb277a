"""Batch prediction matrices and sparse/condensed QP assembly for LMPC."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidHorizonError, InvalidWeightError, ShapeError
from .numerics import as_matrix, as_vector
from .qp_solver import QpProblem

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class PredictionMatrices:
    """X = A_X x_k + B_U U with A_X stacking I, A, ..., A^N."""

    A_X: np.ndarray
    B_U: np.ndarray
    N: int
    n: int
    m: int


@dataclass(frozen=True)
class StackedWeights:
    """Block-diagonal Q_X (N copies of Q then Q_N) and R_U (N copies of R)."""

    Q_X: np.ndarray
    R_U: np.ndarray


@dataclass(frozen=True)
class StackedConstraints:
    """Block-diagonal replication of the state/input polytopes over the horizon."""

    F_X: np.ndarray
    g_X: np.ndarray
    F_U: np.ndarray
    g_U: np.ndarray


def build_prediction(model, N):
    """Stack the free and forced response matrices over an N-step horizon."""
    if N < 1:
        raise InvalidHorizonError(f"prediction horizon must be >= 1, got {N}")
    n, m = model.n, model.m
    A_X = np.zeros((n * (N + 1), n))
    B_U = np.zeros((n * (N + 1), m * N))
    power = np.eye(n)
    A_X[0:n] = power
    # powers[i] = A^i
    powers = [power]
    for i in range(1, N + 1):
        power = model.A @ power
        powers.append(power)
        A_X[i * n:(i + 1) * n] = power
    for i in range(1, N + 1):
        for j in range(i):
            B_U[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - j - 1] @ model.B
    return PredictionMatrices(A_X=A_X, B_U=B_U, N=N, n=n, m=m)


def _check_symmetric(M, name):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise InvalidWeightError(f"{name} must be square, got {M.shape}")
    if np.abs(M - M.T).max() > SYMMETRY_TOL:
        raise InvalidWeightError(f"{name} is not symmetric (asymmetry > {SYMMETRY_TOL})")
    return M


def build_weights(Q, R, Q_N, N):
    """Block-diagonal stacking of the stage and terminal weights."""
    if N < 1:
        raise InvalidHorizonError(f"horizon must be >= 1, got {N}")
    Q = _check_symmetric(Q, "Q")
    R = _check_symmetric(R, "R")
    Q_N = _check_symmetric(Q_N, "Q_N")
    if Q_N.shape != Q.shape:
        raise InvalidWeightError(f"Q_N shape {Q_N.shape} != Q shape {Q.shape}")
    n = Q.shape[0]
    m = R.shape[0]
    Q_X = np.zeros((n * (N + 1), n * (N + 1)))
    for i in range(N):
        Q_X[i * n:(i + 1) * n, i * n:(i + 1) * n] = Q
    Q_X[N * n:, N * n:] = Q_N
    R_U = np.zeros((m * N, m * N))
    for i in range(N):
        R_U[i * m:(i + 1) * m, i * m:(i + 1) * m] = R
    return StackedWeights(Q_X=Q_X, R_U=R_U)


def stack_constraints(X_set, U_set, terminal, N):
    """Replicate the polytopes blockwise; the last state block may be terminal."""
    if N < 1:
        raise InvalidHorizonError(f"horizon must be >= 1, got {N}")
    n = X_set.dim
    m = U_set.dim
    if terminal is not None and terminal.dim != n:
        raise ShapeError(f"terminal set dimension {terminal.dim} != state dimension {n}")
    last = terminal if terminal is not None else X_set
    px = X_set.rows
    pl = last.rows
    F_X = np.zeros((px * N + pl, n * (N + 1)))
    g_X = np.zeros(px * N + pl)
    for i in range(N):
        F_X[i * px:(i + 1) * px, i * n:(i + 1) * n] = X_set.F
        g_X[i * px:(i + 1) * px] = X_set.g
    F_X[px * N:, N * n:] = last.F
    g_X[px * N:] = last.g
    pu = U_set.rows
    F_U = np.zeros((pu * N, m * N))
    g_U = np.zeros(pu * N)
    for i in range(N):
        F_U[i * pu:(i + 1) * pu, i * m:(i + 1) * m] = U_set.F
        g_U[i * pu:(i + 1) * pu] = U_set.g
    return StackedConstraints(F_X=F_X, g_X=g_X, F_U=F_U, g_U=g_U)


def assemble_sparse_qp(pm, w, c, x_k):
    """QP over z = (X, U) with the dynamics as equality rows [I, -B_U] z = A_X x_k."""
    x_k = as_vector(x_k, "x_k")
    if x_k.shape[0] != pm.n:
        raise ShapeError(f"state has dimension {x_k.shape[0]}, expected {pm.n}")
    nX = pm.n * (pm.N + 1)
    nU = pm.m * pm.N
    if w.Q_X.shape[0] != nX or w.R_U.shape[0] != nU:
        raise ShapeError("weights inconsistent with prediction matrices")
    if c.F_X.shape[1] != nX or c.F_U.shape[1] != nU:
        raise ShapeError("constraints inconsistent with prediction matrices")
    d = nX + nU
    H = np.zeros((d, d))
    H[:nX, :nX] = w.Q_X
    H[nX:, nX:] = w.R_U
    F = np.zeros((c.F_X.shape[0] + c.F_U.shape[0], d))
    F[:c.F_X.shape[0], :nX] = c.F_X
    F[c.F_X.shape[0]:, nX:] = c.F_U
    g = np.concatenate([c.g_X, c.g_U])
    F_eq = np.hstack([np.eye(nX), -pm.B_U])
    g_eq = pm.A_X @ x_k
    return QpProblem(H=H, q=np.zeros(d), r=0.0, F=F, g=g, F_eq=F_eq, g_eq=g_eq)


def assemble_condensed_qp(pm, w, c, x_k):
    """QP over z = U only, with the states eliminated through the prediction."""
    x_k = as_vector(x_k, "x_k")
    if x_k.shape[0] != pm.n:
        raise ShapeError(f"state has dimension {x_k.shape[0]}, expected {pm.n}")
    nX = pm.n * (pm.N + 1)
    if w.Q_X.shape[0] != nX or c.F_X.shape[1] != nX:
        raise ShapeError("weights/constraints inconsistent with prediction matrices")
    QA = w.Q_X @ pm.A_X
    H = pm.B_U.T @ w.Q_X @ pm.B_U + w.R_U
    H = 0.5 * (H + H.T)
    q = 2.0 * pm.B_U.T @ (QA @ x_k)
    r = float(x_k @ (pm.A_X.T @ (QA @ x_k)))
    free = pm.A_X @ x_k
    F = np.vstack([c.F_X @ pm.B_U, c.F_U])
    g = np.concatenate([c.g_X - c.F_X @ free, c.g_U])
    return QpProblem(H=H, q=q, r=r, F=F, g=g)


def reduce_control_horizon(qp, N, N_C):
    """Restrict a condensed QP to the first N_C input blocks (tail fixed to zero)."""
    if N_C < 1 or N_C > N:
        raise InvalidHorizonError(f"control horizon must satisfy 1 <= N_C <= N, got {N_C}")
    if N_C == N:
        return qp
    d = qp.d
    if d % N != 0:
        raise ShapeError(f"decision dimension {d} is not a multiple of N={N}")
    keep = (d // N) * N_C
    H = qp.H[:keep, :keep]
    q = qp.q[:keep]
    F = qp.F[:, :keep]
    g = qp.g
    if F.shape[0]:
        vacuous = (np.abs(F).max(axis=1) == 0.0) & (g >= 0.0)
        F = F[~vacuous]
        g = g[~vacuous]
    return QpProblem(H=H, q=q, r=qp.r, F=F, g=g)
