import math

import numpy as np
import pytest

from kernelmpc.dynamics import CostKind, InputBox, flow_homogeneous
from kernelmpc.horizon import (
    TABLE_NAMES,
    cost_controllability_probe,
    minimal_stabilizing_horizon,
    null_control,
    replay_homogeneous,
    table_cases,
)
from kernelmpc.horizon import _double_integrator_arcs
from kernelmpc.mpc import MpcConfig


class TestDoubleIntegratorArcs:
    def test_trivial_at_origin(self):
        assert _double_integrator_arcs(0.0, 0.0, 2.0) == []

    def test_single_arc_on_switching_curve(self):
        # p = v|v|/(2m) with v < 0 brakes straight to zero
        arcs = _double_integrator_arcs(1.0, -2.0, 2.0)
        assert len(arcs) == 1
        a, t = arcs[0]
        assert a == 2.0 and t == pytest.approx(1.0)

    def test_steers_to_origin_random(self, rng):
        for _ in range(200):
            p, v = rng.uniform(-5, 5, 2)
            m = rng.uniform(0.5, 3.0)
            arcs = _double_integrator_arcs(p, v, m)
            assert len(arcs) <= 2
            for a, t in arcs:
                assert abs(a) <= m + 1e-12 and t >= 0.0
                p += v * t + 0.5 * a * t * t
                v += a * t
            assert abs(p) < 1e-9 and abs(v) < 1e-9

    def test_rejects_nonpositive_bound(self):
        with pytest.raises(ValueError):
            _double_integrator_arcs(1.0, 0.0, 0.0)


class TestNullControl:
    def test_origin_needs_nothing(self, box):
        assert null_control(np.zeros(4), box) == []

    def test_reaches_origin_random(self, box, rng):
        for _ in range(100):
            x0 = rng.uniform([-5, -5, -2, -8], [5, 5, 2, 8])
            segs = null_control(x0, box)
            end = replay_homogeneous(x0, segs)
            assert np.max(np.abs(end)) < 1e-6
            for u, t in segs:
                assert np.all(u >= box.lo - 1e-12) and np.all(u <= box.hi + 1e-12)
                assert t > 0.0

    def test_zero_speed_with_lateral_error_gets_a_pulse(self, box):
        x0 = np.array([0.0, 3.0, 0.0, 0.0])
        segs = null_control(x0, box)
        # the first segment spins up the speed so the turn phase has authority
        u0, _ = segs[0]
        assert u0[0] == 0.0 and u0[1] == box.hi[1]
        assert np.max(np.abs(replay_homogeneous(x0, segs))) < 1e-6

    def test_pure_longitudinal_state(self, box):
        x0 = np.array([2.0, 0.0, 0.0, -1.5])
        segs = null_control(x0, box)
        assert all(u[0] == 0.0 for u, _ in segs)  # no turning needed
        assert np.max(np.abs(replay_homogeneous(x0, segs))) < 1e-6

    def test_replay_matches_manual_flow(self, box, rng):
        x0 = rng.uniform(-2, 2, 4)
        segs = null_control(x0, box)
        x = x0.copy()
        for u, t in segs:
            x = flow_homogeneous(x, u, t)
        assert np.allclose(replay_homogeneous(x0, segs), x, atol=0)


class TestHorizonScan:
    def test_origin_stabilized_at_one(self):
        res = minimal_stabilizing_horizon(np.zeros(4), MpcConfig(n_steps=1, dt=1.0))
        assert res.found and res.n_hat == 1
        assert res.verdicts == [(1, True, None)]

    def test_near_origin_small_horizon(self):
        res = minimal_stabilizing_horizon(
            [0.0, 1.0, 0.0, 0.0],
            MpcConfig(n_steps=1, dt=1.0, sim_duration=60.0, conv_tol=5e-3),
            n_max=16,
        )
        assert res.found and 3 <= res.n_hat <= 8
        # every horizon below the minimum was probed and rejected
        assert [n for n, _, _ in res.verdicts] == list(range(1, res.n_hat + 1))
        assert all(not conv for n, conv, _ in res.verdicts[:-1])

    def test_not_found_reported_as_none(self, box):
        from kernelmpc.viability import kink_locus

        res = minimal_stabilizing_horizon(
            kink_locus(9.67, box),
            MpcConfig(n_steps=1, dt=0.02, sim_duration=120.0, conv_tol=0.25, box=box),
            n_max=3,
        )
        assert not res.found and res.n_hat is None
        assert len(res.verdicts) == 3

    def test_keep_runs_returns_trajectories(self):
        res, runs = minimal_stabilizing_horizon(
            np.zeros(4), MpcConfig(n_steps=1, dt=1.0), keep_runs=True
        )
        assert len(runs) == len(res.verdicts) == 1

    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            minimal_stabilizing_horizon(np.zeros(4), MpcConfig(n_steps=1, dt=1.0), n_min=5, n_max=2)


class TestTableCases:
    def test_known_names_only(self, box):
        for name in TABLE_NAMES:
            assert len(table_cases(name, box)) > 0
        with pytest.raises(ValueError):
            table_cases("table9", box)

    def test_boundary_sweep_is_mirrored(self, box):
        cases = table_cases("table1", box)
        assert len(cases) == 5
        x0 = np.array([c.x0 for c in cases])
        # opposite-turn pairs share x1 and x4 and mirror the heading
        for i, j in ((0, 4), (1, 3)):
            assert x0[i, 0] == pytest.approx(x0[j, 0], abs=1e-12)
            assert x0[i, 3] == pytest.approx(x0[j, 3], abs=1e-12)
            assert x0[i, 2] == pytest.approx(-x0[j, 2], abs=1e-12)
        assert np.all(x0[:, 1] == 0.0)
        assert np.allclose(x0[2], [-3.55, 0, 0, 9.67], atol=5e-3)

    def test_kink_sweep_lies_on_boundary(self, box):
        from kernelmpc.viability import barrier_sheet

        for case in table_cases("table2", box):
            x = case.x0
            assert barrier_sheet(x[2], x[3], box) == pytest.approx(x[0], abs=1e-9)

    def test_approach_sweep_marches_toward_kink(self, box):
        cases = table_cases("table3", box)
        x1 = [c.x0[0] for c in cases]
        assert x1 == sorted(x1) and x1[-1] == -3.55

    def test_near_origin_sweep_pairs_both_costs(self, box):
        cases = table_cases("table4", box)
        assert len(cases) == 16
        kinds = {c.config.cost for c in cases}
        assert kinds == {CostKind.QUARTIC, CostKind.QUADRATIC}
        assert all(c.config.dt == 1.0 for c in cases)
        x2 = sorted({c.x0[1] for c in cases})
        assert x2[0] == 2.0**-6 and x2[-1] == 2.0


class TestProbe:
    def test_ratios_finite_and_nondecreasing(self, box):
        states = [[0.0, 1.0, 0.0, 0.0], [-3.0, 0.0, 0.0, 2.0]]
        ratios = cost_controllability_probe(states, [2, 4, 8], dt=0.5, box=box)
        assert np.all(np.isfinite(ratios))
        assert np.all(np.diff(ratios, axis=1) >= -1e-6)

    def test_saturation_signature(self, box):
        # doubling an already-sufficient horizon barely moves the ratio
        ratios = cost_controllability_probe(
            [[0.0, 1.0, 0.0, 0.0]], [8, 16], dt=1.0, box=box
        )[0]
        assert ratios[1] <= ratios[0] * 1.05 + 1e-9

    def test_zero_cost_state_maps_to_inf(self, box):
        ratios = cost_controllability_probe([np.zeros(4)], [2], dt=0.5, box=box)
        assert math.isinf(ratios[0, 0])
