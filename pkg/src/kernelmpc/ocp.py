"""Finite-horizon optimal control with zero-order-hold inputs.

The decision variable is the stacked input sequence; states are eliminated
through the exact constant-input flow, so objective and gradient are free of
integration error.  The box constraint is handled by projection, the wall
constraint by an augmented Lagrangian, and the inner solves use a spectral
(Barzilai-Borwein) projected-gradient method with monotone Armijo
backtracking.  The hot path is compiled with numba.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import CostKind, InputBox, _flow, _flow_jac, _stage_cost, _stage_cost_grad
from .viability import WallConstraint

__all__ = [
    "ControlSequence",
    "OcpProblem",
    "OcpSolution",
    "OcpInfeasibleError",
    "rollout",
    "trajectory_cost",
    "solve_ocp",
    "value_function",
    "reduced_objective_grad",
]

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9  # wall violation accepted as feasible
INFEAS_TOL = 1e-6  # violation above this after a full solve means infeasible
PG_TOL = 1e-8
REL_TOL = 1e-10
MAX_ITER = 5000
MAX_OUTER = 30


@dataclass
class ControlSequence:
    """Zero-order-hold input sequence: steps[k] is held on [k*dt, (k+1)*dt)."""

    steps: np.ndarray
    dt: float

    def __post_init__(self):
        self.steps = np.atleast_2d(np.asarray(self.steps, dtype=float))
        if self.steps.shape[1] != 2:
            raise ValueError("control steps must be (N, 2)")
        if self.steps.shape[0] < 1 or self.dt <= 0.0:
            raise ValueError("need N >= 1 and dt > 0")

    @property
    def n_steps(self) -> int:
        return self.steps.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass
class OcpProblem:
    x0: np.ndarray
    n_steps: int
    dt: float
    cost: CostKind = CostKind.QUARTIC
    box: InputBox = field(default_factory=InputBox)
    wall: WallConstraint = field(default_factory=WallConstraint)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (4,) or not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be a finite 4-vector")
        if self.n_steps < 1 or self.dt <= 0.0:
            raise ValueError("need N >= 1 and dt > 0")


@dataclass
class OcpSolution:
    controls: ControlSequence
    trajectory: np.ndarray  # (N+1, 4) states at step boundaries
    value: float
    feasible: bool
    converged: bool
    iterations: int
    max_violation: float


class OcpInfeasibleError(RuntimeError):
    """No input sequence satisfying the wall constraint was found."""

    def __init__(self, solution: OcpSolution):
        super().__init__(
            f"OCP infeasible: best wall violation {solution.max_violation:.3e}"
        )
        self.solution = solution


@njit(cache=True)
def _rollout_core(x0, U, dt):
    N = U.shape[0]
    X = np.empty((N + 1, 4))
    X[0] = x0
    for k in range(N):
        r = _flow(X[k, 0], X[k, 1], X[k, 2], X[k, 3], U[k, 0], U[k, 1], dt)
        X[k + 1, 0] = r[0]
        X[k + 1, 1] = r[1]
        X[k + 1, 2] = r[2]
        X[k + 1, 3] = r[3]
    return X


@njit(cache=True)
def _cost_core(X, U, dt, kind):
    J = 0.0
    for k in range(U.shape[0]):
        J += _stage_cost(X[k, 0], X[k, 1], X[k, 2], X[k, 3], U[k, 0], U[k, 1], kind) * dt
    return J


@njit(cache=True)
def _al_value_grad(x0, U, dt, kind, a1, a2, b, mu, rho, G):
    """Augmented-Lagrangian merit, its gradient w.r.t. U, the plain cost and
    the worst wall-constraint value, in one forward/backward sweep."""
    N = U.shape[0]
    X = np.empty((N + 1, 4))
    A = np.empty((N, 4, 4))
    B = np.empty((N, 4, 2))
    X[0] = x0
    J = 0.0
    for k in range(N):
        xn, Ak, Bk = _flow_jac(X[k, 0], X[k, 1], X[k, 2], X[k, 3], U[k, 0], U[k, 1], dt)
        X[k + 1] = xn
        A[k] = Ak
        B[k] = Bk
        J += _stage_cost(X[k, 0], X[k, 1], X[k, 2], X[k, 3], U[k, 0], U[k, 1], kind) * dt
    pen = 0.0
    cmax = -1e300
    p = np.zeros(4)
    gx = np.empty(4)
    gu = np.empty(2)
    cN = a1 * X[N, 0] + a2 * X[N, 1] - b
    if cN > cmax:
        cmax = cN
    if rho > 0.0:
        m = mu[N - 1] + rho * cN
        if m > 0.0:
            pen += (m * m - mu[N - 1] * mu[N - 1]) / (2.0 * rho)
            p[0] += m * a1
            p[1] += m * a2
        elif mu[N - 1] > 0.0:
            pen -= mu[N - 1] * mu[N - 1] / (2.0 * rho)
    for k in range(N - 1, -1, -1):
        _stage_cost_grad(X[k, 0], X[k, 1], X[k, 2], X[k, 3], U[k, 0], U[k, 1], kind, gx, gu)
        G[k, 0] = gu[0] * dt
        G[k, 1] = gu[1] * dt
        for j in range(4):
            G[k, 0] += B[k, j, 0] * p[j]
            G[k, 1] += B[k, j, 1] * p[j]
        pn = np.empty(4)
        for i in range(4):
            s = gx[i] * dt
            for j in range(4):
                s += A[k, j, i] * p[j]
            pn[i] = s
        if k >= 1:
            ck = a1 * X[k, 0] + a2 * X[k, 1] - b
            if ck > cmax:
                cmax = ck
            if rho > 0.0:
                mk = mu[k - 1] + rho * ck
                if mk > 0.0:
                    pen += (mk * mk - mu[k - 1] * mu[k - 1]) / (2.0 * rho)
                    pn[0] += mk * a1
                    pn[1] += mk * a2
                elif mu[k - 1] > 0.0:
                    pen -= mu[k - 1] * mu[k - 1] / (2.0 * rho)
        p = pn
    return J + pen, J, cmax


@njit(cache=True)
def _pg_solve(x0, U, dt, kind, a1, a2, b, mu, rho, lo0, lo1, hi0, hi1,
              tol_pg, tol_rel, max_iter):
    """Monotone projected-gradient descent with a BB trial step.

    Returns (U, merit, J, cmax, iterations, pg_norm)."""
    N = U.shape[0]
    G = np.empty((N, 2))
    Gn = np.empty((N, 2))
    Un = np.empty((N, 2))
    L, J, cmax = _al_value_grad(x0, U, dt, kind, a1, a2, b, mu, rho, G)
    gmax = 0.0
    for k in range(N):
        if abs(G[k, 0]) > gmax:
            gmax = abs(G[k, 0])
        if abs(G[k, 1]) > gmax:
            gmax = abs(G[k, 1])
    alpha = 1.0 if gmax == 0.0 else min(1.0, 1.0 / gmax)
    it = 0
    pg = 0.0
    while it < max_iter:
        it += 1
        pg = 0.0
        for k in range(N):
            d0 = U[k, 0] - min(hi0, max(lo0, U[k, 0] - G[k, 0]))
            d1 = U[k, 1] - min(hi1, max(lo1, U[k, 1] - G[k, 1]))
            if abs(d0) > pg:
                pg = abs(d0)
            if abs(d1) > pg:
                pg = abs(d1)
        if pg < tol_pg:
            break
        accepted = False
        t = alpha
        Ln = L
        Jn = J
        cn = cmax
        for _ls in range(60):
            decr = 0.0
            for k in range(N):
                Un[k, 0] = min(hi0, max(lo0, U[k, 0] - t * G[k, 0]))
                Un[k, 1] = min(hi1, max(lo1, U[k, 1] - t * G[k, 1]))
                decr += G[k, 0] * (U[k, 0] - Un[k, 0]) + G[k, 1] * (U[k, 1] - Un[k, 1])
            if decr <= 0.0:
                break
            Ln, Jn, cn = _al_value_grad(x0, Un, dt, kind, a1, a2, b, mu, rho, Gn)
            if Ln <= L - 1e-4 * decr:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        # BB step from the accepted move
        ss = 0.0
        sy = 0.0
        for k in range(N):
            s0 = Un[k, 0] - U[k, 0]
            s1 = Un[k, 1] - U[k, 1]
            ss += s0 * s0 + s1 * s1
            sy += s0 * (Gn[k, 0] - G[k, 0]) + s1 * (Gn[k, 1] - G[k, 1])
        alpha = min(1e8, max(1e-12, ss / sy)) if sy > 0.0 else min(1e8, t * 2.0)
        rel = (L - Ln) / max(1.0, abs(L))
        for k in range(N):
            U[k, 0] = Un[k, 0]
            U[k, 1] = Un[k, 1]
            G[k, 0] = Gn[k, 0]
            G[k, 1] = Gn[k, 1]
        L = Ln
        J = Jn
        cmax = cn
        if rel < tol_rel:
            break
    return U, L, J, cmax, it, pg


@njit(cache=True)
def _al_solve(x0, U0, dt, kind, a1, a2, b, lo0, lo1, hi0, hi1,
              feas_tol, tol_pg, tol_rel, max_total, max_outer, diag):
    """Outer augmented-Lagrangian loop.  diag rows: (J, violation, inner iters)."""
    N = U0.shape[0]
    U = np.empty((N, 2))
    for k in range(N):
        U[k, 0] = min(hi0, max(lo0, U0[k, 0]))
        U[k, 1] = min(hi1, max(lo1, U0[k, 1]))
    mu = np.zeros(N)
    X = _rollout_core(x0, U, dt)
    J = _cost_core(X, U, dt, kind)
    rho = 10.0
    total = 0
    viol = 1e300
    n_outer = 0
    stalled = 0
    for outer in range(max_outer):
        n_outer = outer + 1
        budget = min(max_total - total, 800)
        if budget <= 0:
            break
        U, _L, J, cmax, it, _pg = _pg_solve(
            x0, U, dt, kind, a1, a2, b, mu, rho, lo0, lo1, hi0, hi1,
            tol_pg, tol_rel, budget)
        total += it
        v = max(0.0, cmax)
        diag[outer, 0] = J
        diag[outer, 1] = v
        diag[outer, 2] = it
        if v <= feas_tol:
            viol = v
            break
        if v > 0.25 * viol:
            stalled += 1
            rho = min(rho * 10.0, 1e12)
        else:
            stalled = 0
        if stalled >= 4 and rho >= 1e12:
            viol = v
            break
        viol = v
        X = _rollout_core(x0, U, dt)
        for k in range(1, N + 1):
            ck = a1 * X[k, 0] + a2 * X[k, 1] - b
            mu[k - 1] = max(0.0, mu[k - 1] + rho * ck)
    return U, J, viol, total, n_outer


def rollout(x0, controls: ControlSequence) -> np.ndarray:
    """States at step boundaries under the exact flow; shape (N+1, 4)."""
    x0 = np.asarray(x0, dtype=float)
    return _rollout_core(x0, controls.steps, controls.dt)


def trajectory_cost(traj, controls: ControlSequence, kind: CostKind) -> float:
    """Left-endpoint rectangle quadrature of the running cost."""
    traj = np.asarray(traj, dtype=float)
    if traj.shape[0] != controls.n_steps + 1:
        raise ValueError("trajectory and control lengths inconsistent")
    return float(_cost_core(traj, controls.steps, controls.dt, kind.code))


def reduced_objective_grad(p: OcpProblem, U):
    """Plain cost J(U) and its gradient, constraints ignored (for checks)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    G = np.empty_like(U)
    mu = np.zeros(U.shape[0])
    L, J, _ = _al_value_grad(
        p.x0, U, p.dt, p.cost.code, p.wall.a1, p.wall.a2, p.wall.b, mu, 0.0, G
    )
    return J, G


def _default_starts(p: OcpProblem, warm_start):
    N = p.n_steps
    brake = p.box.lo[1] if p.x0[3] >= 0.0 else p.box.hi[1]
    starts = []
    if warm_start is not None:
        starts.append(np.array(warm_start, dtype=float))
    starts.append(np.zeros((N, 2)))
    starts.append(np.column_stack([np.zeros(N), np.full(N, brake)]))
    # full brake with either full turn, to break the saddle of head-on states
    starts.append(np.column_stack([np.full(N, p.box.hi[0]), np.full(N, brake)]))
    starts.append(np.column_stack([np.full(N, p.box.lo[0]), np.full(N, brake)]))
    return starts


def _solve_one(p: OcpProblem, U0) -> OcpSolution:
    diag = np.zeros((MAX_OUTER, 3))
    U, J, viol, total, n_outer = _al_solve(
        p.x0, U0, p.dt, p.cost.code, p.wall.a1, p.wall.a2, p.wall.b,
        p.box.lo[0], p.box.lo[1], p.box.hi[0], p.box.hi[1],
        FEAS_TOL, PG_TOL, REL_TOL, MAX_ITER, MAX_OUTER, diag)
    if log.isEnabledFor(logging.DEBUG):
        for i in range(n_outer):
            log.debug(
                "ocp outer=%d value=%.9g violation=%.3e inner_iters=%d",
                i, diag[i, 0], diag[i, 1], int(diag[i, 2]),
            )
    controls = ControlSequence(U, p.dt)
    traj = rollout(p.x0, controls)
    return OcpSolution(
        controls=controls,
        trajectory=traj,
        value=float(J),
        feasible=bool(viol <= FEAS_TOL),
        converged=bool(total < MAX_ITER),
        iterations=int(total),
        max_violation=float(viol),
    )


def solve_ocp(p: OcpProblem, warm_start=None) -> OcpSolution:
    """Solve the horizon problem from a warm start and a fixed multi-start set.

    A feasible, converged warm-started solve is returned immediately;
    otherwise every start is solved and the best candidate wins (feasibility
    first, then value, ties broken by start order).  Raises
    :class:`OcpInfeasibleError` when no start reaches an acceptably small
    wall violation.
    """
    starts = _default_starts(p, warm_start)
    best = None
    for i, U0 in enumerate(starts):
        sol = _solve_one(p, U0)
        if i == 0 and warm_start is not None and sol.feasible and sol.converged:
            return sol
        if best is None:
            best = sol
        elif (sol.feasible, -sol.value) > (best.feasible, -best.value):
            best = sol
    if not best.feasible and best.max_violation > INFEAS_TOL:
        raise OcpInfeasibleError(best)
    return best


def value_function(
    x0,
    n_steps: int,
    dt: float,
    kind: CostKind = CostKind.QUARTIC,
    box: InputBox | None = None,
    wall: WallConstraint | None = None,
    warm_start=None,
) -> float:
    """Optimal finite-horizon cost; +inf when the problem is infeasible."""
    p = OcpProblem(
        x0=np.asarray(x0, dtype=float),
        n_steps=n_steps,
        dt=dt,
        cost=kind,
        box=box if box is not None else InputBox(),
        wall=wall if wall is not None else WallConstraint(),
    )
    try:
        return solve_ocp(p, warm_start=warm_start).value
    except OcpInfeasibleError:
        return math.inf
