"""Viability kernel of the wall-constrained vehicle via barrier extremals.

The admissible set for the half-plane constraint is bounded by a barrier made
of bang-bang extremal arcs that brush the wall tangentially.  Everything here
is closed-form: tangent points, the constant extremal control per tangent
family, backward traces of state and costate, the kink locus where mirrored
curve families intersect, and the resulting barrier sheet as a graph of the
maximal admissible ``x1`` over heading and speed.

``ViabilityKernel`` packages the construction behind a scikit-learn style
``fit``/``predict`` interface so membership queries compose with ordinary
array tooling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils import check_array

from .dynamics import InputBox, _trig_moments, flow_state_costate

__all__ = [
    "TangentFamily",
    "WallConstraint",
    "BarrierCurve",
    "StoppingTrajectory",
    "wrap_angle",
    "tangentiality_residual",
    "barrier_control",
    "trace_barrier_curve",
    "kink_locus",
    "wall_excursion",
    "barrier_sheet",
    "ViabilityKernel",
    "build_kernel_surface",
    "kernel_membership",
    "stopping_maneuver",
    "normalize_halfplane",
    "denormalize_halfplane",
]

INTERIOR = "interior"
BOUNDARY = "boundary"
EXTERIOR = "exterior"


class TangentFamily(enum.Enum):
    """The four one-parameter families of ultimate-tangency points."""

    T1 = "T1"  # heading +pi/2, forward
    T2 = "T2"  # heading +pi/2, reversing
    T3 = "T3"  # heading -pi/2, forward
    T4 = "T4"  # heading -pi/2, reversing


@dataclass(frozen=True)
class WallConstraint:
    """Half-plane state constraint a1*x1 + a2*x2 <= b."""

    a1: float = 1.0
    a2: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.a1 == 0.0 and self.a2 == 0.0:
            raise ValueError("degenerate half-plane normal")

    @property
    def is_canonical(self) -> bool:
        return self.a1 == 1.0 and self.a2 == 0.0 and self.b == 1.0

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.a1 * x[..., 0] + self.a2 * x[..., 1] - self.b)


@dataclass
class BarrierCurve:
    """One extremal arc of the barrier, from its kink to its tangent point.

    Times are relative to the tangency instant (``t_bar = 0``), so samples run
    over ``[t_hat, 0]`` with ``t_hat = -pi / (u1_max - u1_min)``.
    """

    family: TangentFamily
    tangent_point: np.ndarray
    control: np.ndarray
    t_bar: float
    t_hat: float
    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray

    @property
    def kink_state(self) -> np.ndarray:
        return self.states[0]

    def hamiltonian(self) -> np.ndarray:
        """lam^T f(x, u) at every sample; identically zero along the barrier."""
        x, lam, u = self.states, self.costates, self.control
        return (
            lam[:, 0] * x[:, 3] * np.cos(x[:, 2])
            + lam[:, 1] * x[:, 3] * np.sin(x[:, 2])
            + lam[:, 2] * u[0]
            + lam[:, 3] * u[1]
        )


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return -((-np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi)


def tangentiality_residual(z, box: InputBox | None = None) -> float:
    """min over admissible u of the wall-ward velocity at z; zero at tangency.

    For this system the minimum does not depend on the box: it is z4*cos(z3).
    """
    z = np.asarray(z, dtype=float)
    return float(z[3] * math.cos(z[2]))


def barrier_control(fam: TangentFamily, box: InputBox) -> np.ndarray:
    """Constant extremal control of the barrier arcs ending on a tangent family.

    The assignments follow the bang-bang selection of the adjoint: forward
    families brake at full deceleration and turn into the wall-parallel
    heading; reversing families mirror both channels.
    """
    lo, hi = box.lo, box.hi
    table = {
        TangentFamily.T1: (hi[0], lo[1]),
        TangentFamily.T2: (lo[0], hi[1]),
        TangentFamily.T3: (lo[0], lo[1]),
        TangentFamily.T4: (hi[0], hi[1]),
    }
    return np.array(table[fam])


_FAMILY_SIGNS = {
    TangentFamily.T1: (1, 1),  # (sign of z3, sign of z4)
    TangentFamily.T2: (1, -1),
    TangentFamily.T3: (-1, 1),
    TangentFamily.T4: (-1, -1),
}


def _check_family(z, fam: TangentFamily, tol: float = 1e-9):
    s3, s4 = _FAMILY_SIGNS[fam]
    z3 = float(wrap_angle(z[2]))
    if abs(z3 - s3 * math.pi / 2.0) > tol:
        raise ValueError(f"tangent-point heading {z3:g} inconsistent with family {fam.value}")
    if z[3] * s4 <= 0.0:
        raise ValueError(f"tangent-point speed {z[3]:g} inconsistent with family {fam.value}")


def trace_barrier_curve(
    z, fam: TangentFamily, box: InputBox, n_samples: int = 64
) -> BarrierCurve:
    """Backward trace of a barrier arc from a tangent point to its kink.

    State and costate use the exact constant-input flow; the terminal costate
    is the constraint gradient (1, 0, 0, 0).
    """
    z = np.asarray(z, dtype=float)
    if abs(tangentiality_residual(z)) > 1e-9:
        raise ValueError("z is not a point of ultimate tangentiality")
    if z[3] == 0.0:
        raise ValueError("tangent point must have nonzero speed")
    _check_family(z, fam)
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    u = barrier_control(fam, box)
    duration = math.pi / (box.hi[0] - box.lo[0])
    t_bar, t_hat = 0.0, -duration
    times = np.linspace(t_hat, t_bar, n_samples)
    lam_bar = np.array([1.0, 0.0, 0.0, 0.0])
    states = np.empty((n_samples, 4))
    costates = np.empty((n_samples, 4))
    for i, t in enumerate(times):
        states[i], costates[i] = flow_state_costate(z, lam_bar, u, t)
    return BarrierCurve(
        family=fam,
        tangent_point=z,
        control=u,
        t_bar=t_bar,
        t_hat=t_hat,
        times=times,
        states=states,
        costates=costates,
    )


def kink_locus(v: float, box: InputBox) -> np.ndarray:
    """Kink state (x1, 0, 0, v) where mirrored forward barrier arcs intersect.

    Requires a symmetric input box and a kink speed v large enough that the
    corresponding tangent speed is positive.
    """
    if v <= 0.0:
        raise ValueError("kink speed must be positive")
    if not box.is_symmetric():
        raise ValueError("kink locus closed form assumes a symmetric input box")
    duration = math.pi / (box.hi[0] - box.lo[0])
    z4 = v + box.lo[1] * duration
    if z4 <= 0.0:
        raise ValueError(f"no kink for speed {v:g}: tangent speed would be nonpositive")
    x1 = 1.0 - wall_excursion(0.0, v, box)
    return np.array([x1, 0.0, 0.0, v])


def wall_excursion(x3: float, x4: float, box: InputBox) -> float:
    """Largest future increase of x1 under the best avoid maneuver.

    Full braking plus full turning toward the nearer wall-parallel heading,
    applied until the vehicle either stops or brushes past parallel.  Zero
    when the vehicle is not moving toward the wall.  The barrier sheet is
    exactly ``x1 = 1 - wall_excursion(x3, x4)``.
    """
    if x4 == 0.0:
        return 0.0
    if x4 > 0.0:
        th = float(wrap_angle(x3))
        v = x4
        dec = -box.lo[1]
    else:
        th = float(wrap_angle(x3 + math.pi))
        v = -x4
        dec = box.hi[1]
    ath = abs(th)
    if ath >= math.pi / 2.0:
        return 0.0
    rate = box.hi[0] if th >= 0.0 else -box.lo[0]
    t_star = min(v / dec, (math.pi / 2.0 - ath) / rate)
    c0, _, c1, _, _, _ = _trig_moments(ath, rate, t_star)
    return v * c0 - dec * c1


def barrier_sheet(x3: float, x4: float, box: InputBox) -> float:
    """Maximal admissible x1 at the given heading and speed."""
    return 1.0 - wall_excursion(x3, x4, box)


class ViabilityKernel(BaseEstimator):
    """Viability kernel of the wall constraint, with membership queries.

    ``fit`` traces the four barrier-curve families over a log-uniform sample
    of tangent speeds and assembles the barrier sheet as a graph of maximal
    ``x1`` over a structured (heading, speed) grid.  ``predict`` classifies
    states as ``"interior"``, ``"boundary"`` or ``"exterior"``; lateral
    position is ignored by translation invariance.

    Parameters
    ----------
    box : InputBox, optional
        Input bounds; defaults to the symmetric [-2, 2]^2 box.
    speed_range : (float, float)
        Positive range of tangent speeds to trace; mirrored negatives are
        traced for the reversing families.
    n_tangent_speeds, n_curve_samples : int
        Curves per family and samples per curve.
    n_heading_grid, n_speed_grid : int
        Resolution of the structured sheet grid over (-pi, pi] x [-v, v].
    boundary_tol : float
        Absolute half-width (in x1) of the boundary classification band.
    """

    def __init__(
        self,
        box: InputBox | None = None,
        speed_range: tuple[float, float] = (0.5, 17.604),
        n_tangent_speeds: int = 24,
        n_curve_samples: int = 64,
        n_heading_grid: int = 181,
        n_speed_grid: int = 121,
        boundary_tol: float = 1e-6,
    ):
        self.box = box
        self.speed_range = speed_range
        self.n_tangent_speeds = n_tangent_speeds
        self.n_curve_samples = n_curve_samples
        self.n_heading_grid = n_heading_grid
        self.n_speed_grid = n_speed_grid
        self.boundary_tol = boundary_tol

    # -- construction --------------------------------------------------

    def fit(self, X=None, y=None):
        box = self.box if self.box is not None else InputBox()
        lo, hi = self.speed_range
        if not (0.0 < lo < hi):
            raise ValueError("speed_range must satisfy 0 < lo < hi")
        if self.n_tangent_speeds < 2 or self.n_curve_samples < 2:
            raise ValueError("resolution must be at least 2 per axis")
        self.box_ = box
        speeds = np.geomspace(lo, hi, self.n_tangent_speeds)
        self.curves_ = []
        for fam in TangentFamily:
            s3, s4 = _FAMILY_SIGNS[fam]
            for v in speeds:
                z = np.array([1.0, 0.0, s3 * math.pi / 2.0, s4 * v])
                self.curves_.append(
                    trace_barrier_curve(z, fam, box, self.n_curve_samples)
                )
        self.kinks_ = np.array([c.kink_state for c in self.curves_])
        # speed coverage: queried |x4| must stay within the traced envelope
        duration = math.pi / (box.hi[0] - box.lo[0])
        self.v_cover_ = hi + min(-box.lo[1], box.hi[1]) * duration

        x3g = np.linspace(-math.pi, math.pi, self.n_heading_grid)
        x4g = np.linspace(-self.v_cover_, self.v_cover_, self.n_speed_grid)
        sheet = np.empty((x3g.size, x4g.size))
        for i, a in enumerate(x3g):
            for j, v in enumerate(x4g):
                sheet[i, j] = barrier_sheet(a, v, box)
        self.sheet_x3_ = x3g
        self.sheet_x4_ = x4g
        self.sheet_x1_ = sheet
        self.interp_ = RegularGridInterpolator(
            (x3g, x4g), sheet, method="linear", bounds_error=True
        )
        return self

    # -- queries -------------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "box_"):
            raise RuntimeError("ViabilityKernel must be fitted before querying")

    def _check_coverage(self, x4):
        if np.any(np.abs(x4) > self.v_cover_ + 1e-12):
            raise ValueError(
                f"query speed outside surface coverage |x4| <= {self.v_cover_:g}"
            )

    def decision_function(self, X) -> np.ndarray:
        """Signed distance (in x1) to the barrier sheet; negative inside."""
        self._require_fitted()
        X = check_array(X, ensure_min_features=4)
        self._check_coverage(X[:, 3])
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            out[i] = row[0] - barrier_sheet(row[2], row[3], self.box_)
        return out

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_array(X, ensure_min_features=4)
        r = self.decision_function(X)
        labels = np.where(r > 0, EXTERIOR, INTERIOR).astype(object)
        labels[np.abs(r) <= self.boundary_tol] = BOUNDARY
        labels[X[:, 0] > 1.0 + self.boundary_tol] = EXTERIOR
        return labels.astype(str)

    def sheet_interpolated(self, x3, x4) -> np.ndarray:
        """Piecewise-linear sheet lookup on the structured grid."""
        self._require_fitted()
        pts = np.column_stack([wrap_angle(np.atleast_1d(x3)), np.atleast_1d(x4)])
        return self.interp_(pts)


def build_kernel_surface(
    box: InputBox,
    speed_range: tuple[float, float],
    resolution: tuple[int, int] = (24, 64),
) -> ViabilityKernel:
    """Trace all four families and assemble the kernel surface."""
    kern = ViabilityKernel(
        box=box,
        speed_range=tuple(speed_range),
        n_tangent_speeds=int(resolution[0]),
        n_curve_samples=int(resolution[1]),
    )
    return kern.fit()


def kernel_membership(x, surface: ViabilityKernel) -> str:
    """Classify a single state against the kernel surface."""
    return str(surface.predict(np.asarray(x, dtype=float).reshape(1, 4))[0])


@dataclass
class StoppingTrajectory:
    """Piecewise-constant-input trajectory ending at zero speed."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray  # input applied on [t_i, t_{i+1})
    n_switches: int

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if self.times.size else 0.0


def _turn_command(x, box: InputBox) -> float:
    """Full turn toward the wall-parallel heading of the active barrier family."""
    if x[3] > 0.0:
        th = float(wrap_angle(x[2]))
    else:
        th = float(wrap_angle(x[2] + math.pi))
    return box.hi[0] if th >= 0.0 else box.lo[0]


def stopping_maneuver(
    x,
    surface: ViabilityKernel,
    box: InputBox | None = None,
    max_step: float = 0.01,
    event_tol: float = 1e-9,
) -> StoppingTrajectory:
    """Brake to rest while switching to the barrier turn whenever the barrier
    sheet is reached, keeping the wall constraint satisfied throughout.

    Barrier contact is located by bisection on the sheet residual and the
    switch is applied on the inside bracket, so the followed arc stays within
    the kernel (states at equal heading and speed keep their x1 offset under
    the extremal control).
    """
    x = np.asarray(x, dtype=float)
    if box is None:
        box = surface.box_
    if kernel_membership(x, surface) == EXTERIOR:
        raise ValueError("stopping maneuver requires a non-exterior start state")
    if x[3] == 0.0:
        return StoppingTrajectory(
            times=np.array([0.0]),
            states=x.reshape(1, 4),
            inputs=np.zeros((0, 2)),
            n_switches=0,
        )
    brake = box.lo[1] if x[3] > 0.0 else box.hi[1]
    t_stop = -x[3] / brake

    def residual(state) -> float:
        return state[0] - barrier_sheet(state[2], state[3], box)

    times = [0.0]
    states = [x.copy()]
    inputs = []
    t = 0.0
    cur = x.copy()
    tracking = residual(cur) >= -1e-12
    n_switches = 1 if tracking else 0
    release_margin = 1e-6
    while t < t_stop - 1e-15:
        u = np.array([_turn_command(cur, box) if tracking else 0.0, brake])
        h = min(max_step, t_stop - t)
        nxt = flow_state_costate(cur, np.zeros(4), u, h)[0]
        if not tracking and residual(nxt) > 0.0:
            # bisect the contact time; keep the inside endpoint
            a, b = 0.0, h
            while b - a > event_tol:
                m = 0.5 * (a + b)
                xm = flow_state_costate(cur, np.zeros(4), u, m)[0]
                if residual(xm) > 0.0:
                    b = m
                else:
                    a = m
            if a > 0.0:
                cur = flow_state_costate(cur, np.zeros(4), u, a)[0]
                t += a
                times.append(t)
                states.append(cur.copy())
                inputs.append(u.copy())
            tracking = True
            n_switches += 1
            continue
        if tracking and residual(nxt) < -release_margin:
            tracking = False
            n_switches += 1
        cur = nxt
        t += h
        times.append(t)
        states.append(cur.copy())
        inputs.append(u.copy())
    # land exactly at zero speed
    states[-1][3] = 0.0
    return StoppingTrajectory(
        times=np.array(times),
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, 2),
        n_switches=n_switches,
    )


def _frame(w: WallConstraint):
    norm = math.hypot(w.a1, w.a2)
    phi = math.atan2(w.a2, w.a1)
    return norm, phi


def normalize_halfplane(w: WallConstraint, x) -> np.ndarray:
    """Rigid transform taking the constraint a1*x1 + a2*x2 <= b to x1 <= 1.

    Rotates positions and heading by the normal's angle and shifts along the
    constrained axis; speed is unchanged.
    """
    x = np.asarray(x, dtype=float)
    norm, phi = _frame(w)
    c, s = math.cos(phi), math.sin(phi)
    d = (w.a1 * x[0] + w.a2 * x[1]) / norm
    lat = (-w.a2 * x[0] + w.a1 * x[1]) / norm
    return np.array([d - w.b / norm + 1.0, lat, x[2] - phi, x[3]])


def denormalize_halfplane(w: WallConstraint, x) -> np.ndarray:
    """Inverse of :func:`normalize_halfplane`."""
    x = np.asarray(x, dtype=float)
    norm, phi = _frame(w)
    d = x[0] - 1.0 + w.b / norm
    lat = x[1]
    c, s = math.cos(phi), math.sin(phi)
    return np.array([d * c - lat * s, d * s + lat * c, x[2] + phi, x[3]])
