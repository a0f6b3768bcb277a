"""SQP solver for the NMPC program: quadratic cost, linear inequalities,
nonlinear equality constraints (the stacked dynamics residual)."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ShapeError
from .numerics import as_matrix, as_vector, finite_diff_jacobian
from .qp_solver import (NlpStatus, QpProblem, QpStatus, SolverSettings,
                        solve_qp)


@dataclass
class NlpProblem:
    """min z'Hz + q'z + r  s.t.  F z <= g,  residual(z) = 0."""

    H: np.ndarray
    q: Optional[np.ndarray] = None
    r: float = 0.0
    F: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    residual: Callable[[np.ndarray], np.ndarray] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        H = as_matrix(self.H, "H")
        d = H.shape[0]
        if np.abs(H - H.T).max() > 1e-10:
            raise ShapeError("H must be symmetric")
        self.H = H
        self.q = np.zeros(d) if self.q is None else as_vector(self.q, "q")
        if self.F is None:
            self.F = np.zeros((0, d))
            self.g = np.zeros(0)
        else:
            self.F = as_matrix(self.F, "F")
            self.g = as_vector(self.g, "g")
        if self.residual is None:
            raise ShapeError("an equality residual map is required")

    @property
    def d(self):
        return self.H.shape[0]

    def objective(self, z):
        return float(z @ self.H @ z + self.q @ z + self.r)


@dataclass
class NlpSolution:
    z_star: np.ndarray
    objective: float
    status: NlpStatus
    iterations: int
    kkt_residual: float
    eq_violation: float
    elastic_used: bool = False
    # (merit before, merit after) per accepted step, at that step's penalty
    merit_history: list = None


def build_feq(model, x_k, N):
    """Stacked dynamics residual for the trajectory decision vector.

    z is ordered as all N+1 state blocks followed by all N input blocks.
    Returns (residual map, decision dimension). The residual's first block
    pins the initial state; block i+1 is x_{i+1} - f(x_i, u_i).
    """
    x_k = as_vector(x_k, "x_k")
    n, m = model.n, model.m
    if x_k.shape[0] != n:
        raise ShapeError(f"state has dimension {x_k.shape[0]}, expected {n}")
    d = n * (N + 1) + m * N

    def residual(z):
        z = as_vector(z, "z")
        if z.shape[0] != d:
            raise ShapeError(f"decision vector has length {z.shape[0]}, expected {d}")
        X = z[:n * (N + 1)].reshape(N + 1, n)
        U = z[n * (N + 1):].reshape(N, m)
        out = np.empty(n * (N + 1))
        out[:n] = X[0] - x_k
        for i in range(N):
            out[(i + 1) * n:(i + 2) * n] = X[i + 1] - as_vector(model.step(X[i], U[i]))
        return out

    return residual, d


def build_feq_jacobian(model, x_k, N):
    """Analytic Jacobian of build_feq's residual; needs model.jac_x/jac_u."""
    if model.jac_x is None or model.jac_u is None:
        return None
    n, m = model.n, model.m
    d = n * (N + 1) + m * N

    def jacobian(z):
        z = as_vector(z, "z")
        X = z[:n * (N + 1)].reshape(N + 1, n)
        U = z[n * (N + 1):].reshape(N, m)
        J = np.zeros((n * (N + 1), d))
        J[:n, :n] = np.eye(n)
        for i in range(N):
            r0 = (i + 1) * n
            J[r0:r0 + n, r0:r0 + n] = np.eye(n)
            J[r0:r0 + n, i * n:(i + 1) * n] = -as_matrix(model.jac_x(X[i], U[i]))
            c0 = n * (N + 1) + i * m
            J[r0:r0 + n, c0:c0 + m] = -as_matrix(model.jac_u(X[i], U[i]))
        return J

    return jacobian


def _merit(p, z, c_norm1, mu):
    return p.objective(z) + mu * c_norm1


def solve_nlp(p, z0, settings=None):
    """SQP with an l1 merit line search; subproblems go through solve_qp.

    Infeasible linearizations are retried with elastic slack on the
    equality rows (flagged in the returned solution).
    """
    s = settings or SolverSettings()
    z = as_vector(z0, "z0").copy()
    if z.shape[0] != p.d:
        raise ShapeError(f"z0 has length {z.shape[0]}, expected {p.d}")
    d = p.d
    n_in = p.F.shape[0]

    mu = 10.0
    elastic_used = False
    qp_warm = None
    status = NlpStatus.MAX_ITERATIONS
    merit_history = []
    it = 0
    c = as_vector(p.residual(z))
    kkt = np.inf
    for it in range(1, s.sqp_max_iter + 1):
        if p.jacobian is not None:
            J = as_matrix(p.jacobian(z))
        else:
            J = finite_diff_jacobian(p.residual, z)
        e = J.shape[0]

        grad = 2.0 * p.H @ z + p.q
        slack = p.g - p.F @ z if n_in else np.zeros(0)
        # subproblem in the step: min s'Hs + (2Hz+q)'s  s.t. Fs <= g-Fz, Js = -c
        sub = QpProblem(H=p.H, q=grad,
                        F=p.F if n_in else None, g=slack if n_in else None,
                        F_eq=J, g_eq=-c)
        sol = solve_qp(sub, warm=qp_warm, settings=s)
        if sol.status is QpStatus.INFEASIBLE:
            elastic_used = True
            sol = _solve_elastic(p, z, grad, slack, J, c, s)
        step = sol.z_star[:d]
        nu = sol.duals[n_in:n_in + e] if sol.duals.shape[0] >= n_in + e else np.zeros(e)
        qp_warm = sol if sol.z_star.shape[0] == d else None

        mu = max(10.0, 2.0 * float(np.abs(nu).max()) if e else 10.0, mu)
        c_norm1 = float(np.abs(c).sum())
        phi0 = _merit(p, z, c_norm1, mu)
        # directional derivative of the merit function along the step
        dderiv = float(grad @ step) - mu * c_norm1
        t = 1.0
        accepted = False
        for _ in range(s.line_search_max):
            z_try = z + t * step
            c_try = as_vector(p.residual(z_try))
            phi_try = _merit(p, z_try, float(np.abs(c_try).sum()), mu)
            if phi_try <= phi0 + s.armijo * t * min(dderiv, 0.0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = NlpStatus.LINE_SEARCH_FAILURE
            break
        merit_history.append((phi0, phi_try))
        z = z_try
        c = c_try

        eq_violation = float(np.abs(c).max()) if c.size else 0.0
        lam = sol.duals[:n_in] if sol.duals.shape[0] >= n_in else np.zeros(n_in)
        stat = 2.0 * p.H @ z + p.q
        if n_in:
            stat = stat + p.F.T @ lam
        if e:
            # recompute Jacobian-transposed term at the new point lazily:
            # reuse J from the accepted step (first-order accurate)
            stat = stat + J.T @ nu
        kkt = float(np.abs(stat).max())
        if float(np.abs(t * step).max()) <= s.step_tol or \
                (kkt <= s.sqp_tol and eq_violation <= s.sqp_tol):
            status = NlpStatus.OPTIMAL
            break

    eq_violation = float(np.abs(c).max()) if c.size else 0.0
    return NlpSolution(
        z_star=z,
        objective=p.objective(z),
        status=status,
        iterations=it,
        kkt_residual=kkt,
        eq_violation=eq_violation,
        elastic_used=elastic_used,
        merit_history=merit_history,
    )


def _solve_elastic(p, z, grad, slack, J, c, s):
    """Relaxed subproblem: J step + c = e_plus - e_minus, penalized l1 slack."""
    d = p.d
    e = J.shape[0]
    n_in = p.F.shape[0]
    dim = d + 2 * e
    H = np.zeros((dim, dim))
    H[:d, :d] = p.H
    # tiny curvature keeps H PSD on the slack block
    H[d:, d:] = 1e-8 * np.eye(2 * e)
    q = np.concatenate([grad, np.full(2 * e, s.elastic_penalty)])
    F = None
    g = None
    if n_in:
        F = np.hstack([p.F, np.zeros((n_in, 2 * e))])
        g = slack
    F_eq = np.hstack([J, -np.eye(e), np.eye(e)])
    lb = np.concatenate([np.full(d, -np.inf), np.zeros(2 * e)])
    sub = QpProblem(H=H, q=q, F=F, g=g, F_eq=F_eq, g_eq=-c, lb=lb)
    return solve_qp(sub, settings=s)
