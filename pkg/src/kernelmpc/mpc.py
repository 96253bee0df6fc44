"""Sampled-data receding-horizon control without terminal conditions.

At every sampling instant the finite-horizon problem is re-solved from the
measured state, the first input is applied for one sampling period through
the exact flow, and the remainder of the solution seeds the next solve
(shift by one step, repeat the last input).  Stability comes from the
horizon length alone, which is what the horizon-search module probes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import CostKind, InputBox, stage_cost
from .ocp import OcpInfeasibleError, OcpProblem, solve_ocp
from .viability import WallConstraint

__all__ = [
    "MpcConfig",
    "ClosedLoopRun",
    "run_mpc",
    "weighted_norm",
    "is_converged",
    "convergence_time",
    "check_feasibility",
    "descent_ratios",
]

log = logging.getLogger(__name__)


def weighted_norm(x) -> float:
    """Origin-distance measure matched to the dilation weights of the
    dynamics: quadratic in x1, x3, x4 and linear in x2 under the square root."""
    x = np.asarray(x, dtype=float)
    return math.sqrt(x[0] * x[0] + abs(x[1]) + x[2] * x[2] + x[3] * x[3])


@dataclass
class MpcConfig:
    n_steps: int
    dt: float
    cost: CostKind = CostKind.QUARTIC
    box: InputBox = field(default_factory=InputBox)
    wall: WallConstraint = field(default_factory=WallConstraint)
    sim_duration: float = 60.0
    conv_tol: float = 1e-2
    settle_time: float = 2.0

    def __post_init__(self):
        if self.n_steps < 1 or self.dt <= 0.0:
            raise ValueError("need n_steps >= 1 and dt > 0")
        if self.sim_duration <= 0.0 or self.conv_tol <= 0.0 or self.settle_time < 0.0:
            raise ValueError("sim_duration, conv_tol must be positive; settle_time >= 0")


@dataclass
class ClosedLoopRun:
    """Closed-loop record at sampling instants.

    ``values[k]`` is the optimal horizon cost from ``states[k]``; both arrays
    stop at the step where the loop halted (convergence, infeasibility, or
    the simulation budget).
    """

    config: MpcConfig
    times: np.ndarray  # (M+1,)
    states: np.ndarray  # (M+1, 4)
    inputs: np.ndarray  # (M, 2)
    values: np.ndarray  # (M,)
    converged: bool
    convergence_time: float | None
    failure_step: int | None = None

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[0]


def run_mpc(x0, config: MpcConfig, predictor=None) -> ClosedLoopRun:
    """Run the receding-horizon loop from x0.

    ``predictor``, when given, is called with each solved
    :class:`~kernelmpc.ocp.OcpSolution` (useful for logging or plotting).
    The loop halts early once the state has stayed within ``conv_tol`` of the
    origin (in the weighted norm) for ``settle_time`` seconds, and reports
    failure instead of raising when some solve is infeasible.
    """
    x0 = np.asarray(x0, dtype=float)
    cfg = config
    max_steps = int(math.ceil(cfg.sim_duration / cfg.dt))
    dwell_needed = int(math.ceil(cfg.settle_time / cfg.dt))

    times = [0.0]
    states = [x0.copy()]
    inputs: list[np.ndarray] = []
    values: list[float] = []
    warm = None
    dwell = 0
    converged = False
    conv_time: float | None = None
    failure_step: int | None = None

    if weighted_norm(x0) < cfg.conv_tol:
        # already inside the target ball: trivially converged, no steps taken
        return ClosedLoopRun(
            config=cfg,
            times=np.array(times),
            states=np.array(states),
            inputs=np.empty((0, 2)),
            values=np.empty(0),
            converged=True,
            convergence_time=0.0,
        )

    x = x0.copy()
    for k in range(max_steps):
        problem = OcpProblem(
            x0=x, n_steps=cfg.n_steps, dt=cfg.dt, cost=cfg.cost,
            box=cfg.box, wall=cfg.wall,
        )
        try:
            sol = solve_ocp(problem, warm_start=warm)
        except OcpInfeasibleError as err:
            failure_step = k
            log.warning(
                "mpc step=%d infeasible (violation %.3e)", k, err.solution.max_violation
            )
            break
        if predictor is not None:
            predictor(sol)
        u = sol.controls.steps[0].copy()
        x = sol.trajectory[1].copy()
        inputs.append(u)
        values.append(sol.value)
        times.append((k + 1) * cfg.dt)
        states.append(x.copy())
        warm = np.vstack([sol.controls.steps[1:], sol.controls.steps[-1:]])
        if weighted_norm(x) < cfg.conv_tol:
            dwell += 1
            if dwell >= dwell_needed + 1:
                converged = True
                conv_time = times[-1] - dwell_needed * cfg.dt
                break
        else:
            dwell = 0
    return ClosedLoopRun(
        config=cfg,
        times=np.array(times),
        states=np.array(states),
        inputs=np.array(inputs).reshape(len(inputs), 2),
        values=np.array(values),
        converged=converged,
        convergence_time=conv_time,
        failure_step=failure_step,
    )


def convergence_time(run: ClosedLoopRun) -> float | None:
    """First sampling instant after which the weighted norm stays below the
    tolerance for the configured settle time; None when that never happens."""
    cfg = run.config
    dwell_needed = int(math.ceil(cfg.settle_time / cfg.dt))
    norms = np.array([weighted_norm(x) for x in run.states])
    small = norms < cfg.conv_tol
    run_len = 0
    for i, ok in enumerate(small):
        run_len = run_len + 1 if ok else 0
        if run_len >= dwell_needed + 1:
            return float(run.times[i] - dwell_needed * cfg.dt)
    return None


def is_converged(run: ClosedLoopRun) -> bool:
    return convergence_time(run) is not None


def check_feasibility(run: ClosedLoopRun, n_sub: int = 10, tol: float = 1e-9) -> bool:
    """Inter-sample check: inputs inside the box and the wall satisfied at
    ``n_sub`` checkpoints inside every sampling interval."""
    from .dynamics import flow_constant_input

    cfg = run.config
    for k in range(run.n_steps):
        u = run.inputs[k]
        if not cfg.box.contains(u, tol=tol):
            return False
        x = run.states[k]
        for j in range(1, n_sub + 1):
            xs = flow_constant_input(x, u, cfg.dt * j / n_sub)
            if cfg.wall.value(xs) > tol:
                return False
    return True


def descent_ratios(run: ClosedLoopRun) -> np.ndarray:
    """Per-step ratios (V(x_k) - V(x_{k+1})) / (dt * cost(x_k, u_k)).

    A uniformly positive lower bound over the run certifies relaxed
    dynamic-programming descent of the horizon cost along the closed loop.
    Steps after the last solved one are excluded; steps with a vanishing
    stage cost are skipped.
    """
    cfg = run.config
    out = []
    for k in range(run.n_steps - 1):
        denom = cfg.dt * stage_cost(run.states[k], run.inputs[k], cfg.cost)
        if denom <= 0.0:
            continue
        out.append((run.values[k] - run.values[k + 1]) / denom)
    return np.array(out)
