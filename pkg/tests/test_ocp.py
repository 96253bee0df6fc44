import itertools
import math

import numpy as np
import pytest

from kernelmpc.dynamics import CostKind, InputBox
from kernelmpc.ocp import (
    ControlSequence,
    OcpInfeasibleError,
    OcpProblem,
    reduced_objective_grad,
    rollout,
    solve_ocp,
    trajectory_cost,
    value_function,
)
from kernelmpc.viability import kink_locus


class TestRollout:
    def test_left_endpoint_quadrature(self):
        controls = ControlSequence(np.array([[0.5, -0.3], [0.1, 0.2]]), dt=0.4)
        traj = rollout([0.2, -0.1, 0.3, 1.0], controls)
        from kernelmpc.dynamics import stage_cost

        manual = sum(
            stage_cost(traj[k], controls.steps[k], CostKind.QUARTIC) * 0.4
            for k in range(2)
        )
        assert trajectory_cost(traj, controls, CostKind.QUARTIC) == pytest.approx(manual)

    def test_control_sequence_validation(self):
        with pytest.raises(ValueError):
            ControlSequence(np.zeros((3, 2)), dt=0.0)
        with pytest.raises(ValueError):
            ControlSequence(np.zeros((3, 3)), dt=0.1)


class TestGradient:
    @pytest.mark.parametrize("kind", list(CostKind))
    def test_matches_central_differences(self, kind, rng):
        p = OcpProblem(
            x0=np.array([0.3, -0.4, 0.7, 1.2]), n_steps=6, dt=0.25, cost=kind
        )
        U = rng.uniform(-1.5, 1.5, (6, 2))
        _, G = reduced_objective_grad(p, U)
        h = 1e-5
        for k in range(6):
            for j in range(2):
                up, um = U.copy(), U.copy()
                up[k, j] += h
                um[k, j] -= h
                fd = (reduced_objective_grad(p, up)[0] - reduced_objective_grad(p, um)[0]) / (2 * h)
                assert abs(G[k, j] - fd) <= 1e-5 * max(1.0, abs(fd))


class TestSolver:
    def test_origin_costs_nothing(self):
        sol = solve_ocp(OcpProblem(x0=np.zeros(4), n_steps=8, dt=0.5))
        assert sol.value == pytest.approx(0.0, abs=1e-12)
        assert sol.feasible

    def test_beats_coarse_grid_enumeration(self):
        # two-step problem small enough for brute force over a control grid
        x0 = np.array([0.0, 1.0, 0.0, 0.0])
        p = OcpProblem(x0=x0, n_steps=2, dt=1.0)
        grid = np.linspace(-2, 2, 13)
        best = math.inf
        for combo in itertools.product(grid, repeat=4):
            U = np.array(combo).reshape(2, 2)
            controls = ControlSequence(U, 1.0)
            traj = rollout(x0, controls)
            if np.any(traj[1:, 0] > 1.0):
                continue
            best = min(best, trajectory_cost(traj, controls, CostKind.QUARTIC))
        sol = solve_ocp(p)
        assert sol.feasible
        assert sol.value <= best + 1e-9

    def test_feasible_solution_respects_wall_on_replay(self, box):
        sol = solve_ocp(OcpProblem(x0=kink_locus(9.67, box), n_steps=34, dt=0.25))
        traj = rollout(sol.trajectory[0], sol.controls)
        assert traj[:, 0].max() <= 1 + 1e-9

    def test_boundary_kink_needs_extremal_first_input(self, box):
        sol = solve_ocp(OcpProblem(x0=kink_locus(9.67, box), n_steps=34, dt=0.25))
        assert sol.controls.steps[0, 0] == pytest.approx(2.0, abs=0.05)
        assert sol.controls.steps[0, 1] == pytest.approx(-2.0, abs=0.05)

    def test_exterior_state_infeasible(self):
        with pytest.raises(OcpInfeasibleError) as err:
            solve_ocp(OcpProblem(x0=np.array([0.5, 0, 0, 9.67]), n_steps=20, dt=0.25))
        assert err.value.solution.max_violation > 1e-6

    def test_warm_start_never_worse_than_shifted_tail(self, box):
        p = OcpProblem(x0=np.array([-3.0, 0.5, 0.1, 6.0]), n_steps=12, dt=0.25)
        sol = solve_ocp(p)
        x1 = sol.trajectory[1]
        shifted = np.vstack([sol.controls.steps[1:], sol.controls.steps[-1:]])
        tail_controls = ControlSequence(shifted, p.dt)
        tail_cost = trajectory_cost(rollout(x1, tail_controls), tail_controls, p.cost)
        resolved = solve_ocp(
            OcpProblem(x0=x1, n_steps=12, dt=0.25), warm_start=shifted
        )
        assert resolved.value <= tail_cost * (1 + 1e-9) + 1e-12


class TestValueFunction:
    def test_origin_zero(self):
        assert value_function(np.zeros(4), 5, 0.5) == 0.0

    def test_nondecreasing_in_horizon(self):
        x0 = np.array([0.2, 0.4, -0.1, 0.8])
        vals = [value_function(x0, n, 0.5) for n in (1, 2, 4, 8)]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_infeasible_maps_to_inf(self):
        assert value_function(np.array([0.5, 0, 0, 9.67]), 10, 0.25) == math.inf
