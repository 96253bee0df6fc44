"""Vehicle dynamics: vector field, exact constant-input flow, adjoint, stage costs.

State convention throughout the package: ``x = (x1, x2, x3, x4)`` with
``(x1, x2)`` the planar position [m], ``x3`` the heading [rad] and ``x4``
the forward speed [m/s].  Inputs are ``u = (u1, u2)`` with ``u1`` the turn
rate [rad/s] and ``u2`` the acceleration [m/s^2].

The heading is stored unwrapped; geometric queries wrap it where needed.
All flow formulas are exact for piecewise-constant inputs, which is what
makes high-accuracy barrier tracing and cheap MPC rollouts possible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "CostKind",
    "InputBox",
    "eval_dynamics",
    "flow_constant_input",
    "eval_adjoint",
    "flow_state_costate",
    "eval_homogeneous",
    "flow_homogeneous",
    "stage_cost",
    "stage_cost_grad",
    "min_stage_cost",
    "HOMOGENEITY_WEIGHTS",
    "INPUT_WEIGHTS",
    "HOMOGENEITY_DEGREE",
]

# Dilation weights of the homogeneous approximation: x2 scales quadratically,
# everything else (and both inputs) linearly; degree zero.
HOMOGENEITY_WEIGHTS = (1, 2, 1, 1)
INPUT_WEIGHTS = (1, 1)
HOMOGENEITY_DEGREE = 0


class CostKind(enum.Enum):
    """Stage-cost selector: the mixed quartic cost or the purely quadratic one."""

    QUARTIC = "quartic"
    QUADRATIC = "quadratic"

    @property
    def code(self) -> int:
        return 0 if self is CostKind.QUARTIC else 1


@dataclass(frozen=True)
class InputBox:
    """Per-axis input bounds; the origin must lie strictly inside."""

    lo: np.ndarray = field(default_factory=lambda: np.array([-2.0, -2.0]))
    hi: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0]))

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (2,) or hi.shape != (2,):
            raise ValueError("input box bounds must be 2-vectors")
        if not (np.all(lo < 0.0) and np.all(hi > 0.0)):
            raise ValueError("input box must satisfy lo < 0 < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, u) -> np.ndarray:
        """Componentwise clamp onto the box (idempotent)."""
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    def contains(self, u, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.lo, -self.hi))


@njit(cache=True)
def _trig_moments(theta, omega, t):
    """Moments C_n = int_0^t s^n cos(theta + omega s) ds and the sine analogues.

    Returns (C0, S0, C1, S1, C2, S2).  For |omega * t| below a threshold the
    closed forms lose digits to cancellation, so a truncated series in omega
    (through omega^3, smooth across the switch) is used instead.
    """
    wt = omega * t
    ct = math.cos(theta)
    st = math.sin(theta)
    if abs(wt) < 1e-3:
        # series in (omega t); relative truncation error ~ (omega t)^4 / 100
        c0 = t * (ct - wt * st / 2.0 - wt * wt * ct / 6.0 + wt * wt * wt * st / 24.0)
        s0 = t * (st + wt * ct / 2.0 - wt * wt * st / 6.0 - wt * wt * wt * ct / 24.0)
        c1 = t * t * (ct / 2.0 - wt * st / 3.0 - wt * wt * ct / 8.0 + wt * wt * wt * st / 30.0)
        s1 = t * t * (st / 2.0 + wt * ct / 3.0 - wt * wt * st / 8.0 - wt * wt * wt * ct / 30.0)
        c2 = t * t * t * (ct / 3.0 - wt * st / 4.0 - wt * wt * ct / 10.0 + wt * wt * wt * st / 36.0)
        s2 = t * t * t * (st / 3.0 + wt * ct / 4.0 - wt * wt * st / 10.0 - wt * wt * wt * ct / 36.0)
        return c0, s0, c1, s1, c2, s2
    ctt = math.cos(theta + wt)
    stt = math.sin(theta + wt)
    c0 = (stt - st) / omega
    s0 = -(ctt - ct) / omega
    c1 = (t * stt - s0) / omega
    s1 = (-t * ctt + c0) / omega
    c2 = (t * t * stt - 2.0 * s1) / omega
    s2 = (-t * t * ctt + 2.0 * c1) / omega
    return c0, s0, c1, s1, c2, s2


@njit(cache=True)
def _flow(x1, x2, x3, x4, u1, u2, t):
    """Exact constant-input flow of the vehicle over a (signed) duration t."""
    c0, s0, c1, s1, _, _ = _trig_moments(x3, u1, t)
    return (
        x1 + x4 * c0 + u2 * c1,
        x2 + x4 * s0 + u2 * s1,
        x3 + u1 * t,
        x4 + u2 * t,
    )


@njit(cache=True)
def _flow_jac(x1, x2, x3, x4, u1, u2, t):
    """Flow plus its Jacobians: returns (x_next, A = dPhi/dx, B = dPhi/du)."""
    c0, s0, c1, s1, c2, s2 = _trig_moments(x3, u1, t)
    icos = x4 * c0 + u2 * c1
    isin = x4 * s0 + u2 * s1
    xn = np.empty(4)
    xn[0] = x1 + icos
    xn[1] = x2 + isin
    xn[2] = x3 + u1 * t
    xn[3] = x4 + u2 * t
    A = np.eye(4)
    A[0, 2] = -isin
    A[0, 3] = c0
    A[1, 2] = icos
    A[1, 3] = s0
    B = np.zeros((4, 2))
    B[0, 0] = -(x4 * s1 + u2 * s2)
    B[0, 1] = c1
    B[1, 0] = x4 * c1 + u2 * c2
    B[1, 1] = s1
    B[2, 0] = t
    B[3, 1] = t
    return xn, A, B


@njit(cache=True)
def _costate_flow(x3, x4, l1, l2, l3, l4, u1, u2, t):
    """Exact constant-input flow of the adjoint over a signed duration t.

    l1 and l2 are constants of motion; l3 and l4 integrate the same trig
    moments as the position components.
    """
    c0, s0, c1, s1, _, _ = _trig_moments(x3, u1, t)
    icos = x4 * c0 + u2 * c1
    isin = x4 * s0 + u2 * s1
    return (
        l1,
        l2,
        l3 + l1 * isin - l2 * icos,
        l4 - l1 * c0 - l2 * s0,
    )


def eval_dynamics(x, u) -> np.ndarray:
    """Vehicle vector field: (x4 cos x3, x4 sin x3, u1, u2)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([x[3] * math.cos(x[2]), x[3] * math.sin(x[2]), u[0], u[1]])


def flow_constant_input(x, u, dt: float) -> np.ndarray:
    """Exact solution of the dynamics under a constant input for duration dt.

    The heading and speed evolve linearly; the position components use the
    closed-form trigonometric integrals, with a series branch that makes the
    turn-rate-to-zero limit smooth.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array(_flow(x[0], x[1], x[2], x[3], u[0], u[1], float(dt)))


def eval_adjoint(x, lam) -> np.ndarray:
    """Adjoint vector field -(df/dx)^T lam for the vehicle."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    s3, c3 = math.sin(x[2]), math.cos(x[2])
    return np.array(
        [
            0.0,
            0.0,
            x[3] * s3 * lam[0] - x[3] * c3 * lam[1],
            -c3 * lam[0] - s3 * lam[1],
        ]
    )


def flow_state_costate(x, lam, u, dt: float):
    """Exact joint flow of state and costate under a constant input.

    Returns (x_next, lam_next).  Used for barrier tracing, where the
    Hamiltonian lam^T f must be conserved to machine precision.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = np.asarray(u, dtype=float)
    lam_next = np.array(
        _costate_flow(x[2], x[3], lam[0], lam[1], lam[2], lam[3], u[0], u[1], float(dt))
    )
    x_next = np.array(_flow(x[0], x[1], x[2], x[3], u[0], u[1], float(dt)))
    return x_next, lam_next


def eval_homogeneous(x, u) -> np.ndarray:
    """Homogeneous approximation of the vector field near the origin: (x4, x3 x4, u1, u2)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([x[3], x[2] * x[3], u[0], u[1]])


def flow_homogeneous(x, u, dt: float) -> np.ndarray:
    """Closed-form constant-input flow of the homogeneous approximation."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    t = float(dt)
    return np.array(
        [
            x[0] + x[3] * t + u[1] * t * t / 2.0,
            x[1]
            + x[2] * x[3] * t
            + (x[2] * u[1] + x[3] * u[0]) * t * t / 2.0
            + u[0] * u[1] * t * t * t / 3.0,
            x[2] + u[0] * t,
            x[3] + u[1] * t,
        ]
    )


@njit(cache=True)
def _stage_cost(x1, x2, x3, x4, u1, u2, kind):
    if kind == 0:
        return x1**4 + x2 * x2 + x3**4 + x4**4 + u1**4 + u2**4
    return x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4 + u1 * u1 + u2 * u2


@njit(cache=True)
def _stage_cost_grad(x1, x2, x3, x4, u1, u2, kind, gx, gu):
    if kind == 0:
        gx[0] = 4.0 * x1**3
        gx[1] = 2.0 * x2
        gx[2] = 4.0 * x3**3
        gx[3] = 4.0 * x4**3
        gu[0] = 4.0 * u1**3
        gu[1] = 4.0 * u2**3
    else:
        gx[0] = 2.0 * x1
        gx[1] = 2.0 * x2
        gx[2] = 2.0 * x3
        gx[3] = 2.0 * x4
        gu[0] = 2.0 * u1
        gu[1] = 2.0 * u2


def stage_cost(x, u, kind: CostKind = CostKind.QUARTIC) -> float:
    """Running cost; x2 is always penalized quadratically in the quartic kind."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return float(_stage_cost(x[0], x[1], x[2], x[3], u[0], u[1], kind.code))


def stage_cost_grad(x, u, kind: CostKind = CostKind.QUARTIC):
    """Gradients (d/dx, d/du) of the stage cost."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    gx = np.empty(4)
    gu = np.empty(2)
    _stage_cost_grad(x[0], x[1], x[2], x[3], u[0], u[1], kind.code, gx, gu)
    return gx, gu


def min_stage_cost(x, kind: CostKind = CostKind.QUARTIC) -> float:
    """Stage cost minimized over unconstrained inputs, attained at u = 0."""
    return stage_cost(x, np.zeros(2), kind)
