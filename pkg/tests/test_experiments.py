"""Experiment-layer tests on deliberately small instances: the policy
comparison, transmission regions, and the required-charging-rate search."""

import dataclasses
import math

import numpy as np
import pytest

from semsched.core import MetricKind, SystemParams, params_stamp
from semsched.experiments import (
    POLICY_NAMES,
    SweepSpec,
    TargetUnreachable,
    action_map,
    charging_sweep,
    compare_policies,
    comparison_grid,
    format_action_map,
    format_comparison,
    format_ratio_table,
    required_charging_rate,
    solve_policy,
)
from semsched.mdp import evaluate_policy_exact
from semsched.policies import greedy_policy
from semsched.sim import SimConfig

SMALL = SystemParams(
    p_s=0.8, p_v=0.25, p_q=0.3, p_e=0.1, B=2, delta_max=6,
    allow_tight_truncation=True,
)


class TestSweepSpec:
    def test_accepts_a_sane_spec(self):
        SweepSpec(
            varying="p_e",
            grid=(0.1, 0.2),
            base=SMALL,
            kinds=(MetricKind.QVAOI,),
            policies=("greedy", "qvaoi"),
        )

    def test_rejects_unknown_parameter(self):
        with pytest.raises(ValueError, match="unknown parameter"):
            SweepSpec("p_x", (0.1,), SMALL, (), ("greedy",))

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError, match="non-empty"):
            SweepSpec("p_e", (), SMALL, (), ())
        with pytest.raises(ValueError, match="increasing"):
            SweepSpec("p_e", (0.2, 0.1), SMALL, (), ())

    def test_rejects_unknown_policy_and_mode(self):
        with pytest.raises(ValueError, match="unknown policy"):
            SweepSpec("p_e", (0.1,), SMALL, (), ("optimal",))
        with pytest.raises(ValueError, match="mode"):
            SweepSpec("p_e", (0.1,), SMALL, (), (), mode="closed-form")


class TestSolvePolicy:
    def test_greedy_bypasses_the_solver(self):
        assert np.array_equal(
            solve_policy(SMALL, "greedy").actions, greedy_policy(SMALL).actions
        )

    def test_named_kinds_come_back_stamped(self):
        pol = solve_policy(SMALL, "qvaoi")
        assert pol.kind is MetricKind.QVAOI
        assert pol.params_stamp == params_stamp(SMALL)


class TestComparePolicies:
    def test_greedy_row_matches_direct_evaluation(self):
        rows = compare_policies(SMALL, policy_set=("greedy",))
        (row,) = rows
        direct = evaluate_policy_exact(SMALL, MetricKind.QVAOI, greedy_policy(SMALL))
        assert row.eval_mode == "exact"
        assert row.error is None
        assert row.qvaoi == pytest.approx(direct, abs=1e-12)
        assert row.qvaoi_per_query == pytest.approx(direct / SMALL.p_q, abs=1e-12)
        assert row.monitor_qvaoi == pytest.approx(
            row.qvaoi_per_query + SMALL.N * SMALL.p_v, abs=1e-12
        )

    def test_the_matching_policy_wins_its_own_meter(self):
        rows = compare_policies(SMALL)
        by_name = {r.policy: r for r in rows}
        best = by_name["qvaoi"].qvaoi
        for r in rows:
            assert best <= r.qvaoi + 1e-9

    def test_simulated_mode_is_close_to_exact(self):
        cfg = SimConfig(horizon=300_000, seed=3, warmup=5000)
        sim_rows = compare_policies(
            SMALL, policy_set=("greedy",), mode="simulated", sim_cfg=cfg
        )
        exact_rows = compare_policies(SMALL, policy_set=("greedy",))
        assert sim_rows[0].eval_mode == "simulated"
        assert sim_rows[0].qvaoi == pytest.approx(exact_rows[0].qvaoi, rel=0.05)


class TestComparisonGrid:
    def test_cells_cover_the_grid_in_order(self):
        cells = comparison_grid(
            SMALL,
            policy_set=("greedy", "qvaoi"),
            pe_values=(0.1, 0.3),
            pq_values=(0.2,),
        )
        assert [(c.p_e, c.p_q) for c in cells] == [(0.1, 0.2), (0.3, 0.2)]
        assert all(len(c.rows) == 2 for c in cells)

    def test_workers_do_not_change_the_numbers(self):
        kw = dict(policy_set=("greedy",), pe_values=(0.1, 0.2), pq_values=(0.3,))
        seq = comparison_grid(SMALL, jobs=1, **kw)
        par = comparison_grid(SMALL, jobs=2, **kw)
        assert [c.rows[0].qvaoi for c in seq] == [c.rows[0].qvaoi for c in par]


class TestActionMap:
    def test_greedy_region_is_battery_feasibility(self):
        am = action_map(SMALL, "greedy")
        assert am.grid.shape == (SMALL.delta_max + 1, SMALL.B + 1)
        assert not am.grid[:, 0].any()
        assert am.grid[:, 1:].all()
        assert am.thresholds is not None
        assert am.warning is None

    def test_solved_version_region_spares_zero_lag(self):
        am = action_map(SMALL, MetricKind.QVAOI)
        assert am.policy_id == "qvaoi"
        assert am.params_stamp == params_stamp(SMALL)
        assert not am.grid[0].any()


class TestRequiredChargingRate:
    def test_bracket_and_feasibility_invariants(self):
        r = required_charging_rate("qvaoi", 2.5, SMALL, p_q=0.3, tol=1e-2)
        assert r.bracket_hi - r.bracket_lo <= 1e-2 + 1e-15
        assert r.p_e_star == r.bracket_hi
        assert 0.0 < r.p_e_star <= 1.0
        assert r.evaluations[0][0] == 1.0
        at_star = dataclasses.replace(SMALL, p_e=r.p_e_star, p_q=0.3)
        val = (
            evaluate_policy_exact(
                at_star, MetricKind.QVAOI, solve_policy(at_star, "qvaoi")
            )
            / 0.3
        )
        assert val <= 2.5 + 1e-9

    def test_easier_targets_need_less_charging(self):
        tight = required_charging_rate("qvaoi", 2.0, SMALL, p_q=0.3, tol=1e-2)
        loose = required_charging_rate("qvaoi", 3.5, SMALL, p_q=0.3, tol=1e-2)
        assert loose.p_e_star <= tight.p_e_star + 1e-12

    def test_impossible_target_is_reported_with_the_best_value(self):
        with pytest.raises(TargetUnreachable) as exc:
            required_charging_rate("qvaoi", 0.0, SMALL, p_q=0.3, tol=1e-2)
        assert exc.value.value_at_one > 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="tol"):
            required_charging_rate("qvaoi", 2.5, SMALL, p_q=0.3, tol=0.0)
        with pytest.raises(ValueError, match="unknown policy"):
            required_charging_rate("optimal", 2.5, SMALL, p_q=0.3)


class TestChargingSweep:
    def test_greedy_against_itself_is_ratio_one(self):
        (pt,) = charging_sweep(SMALL, "greedy", 3.0, (0.3,), tol=1e-2)
        assert pt.error is None
        assert pt.ratio == 1.0
        assert pt.ratio_lo <= 1.0 <= pt.ratio_hi

    def test_aware_policy_never_needs_more_energy(self):
        (pt,) = charging_sweep(SMALL, "qvaoi", 2.5, (0.3,), tol=1e-2)
        assert pt.error is None
        assert pt.ratio <= 1.0 + 1e-12
        assert pt.pe_policy <= pt.pe_greedy + 1e-12

    def test_failed_points_do_not_stop_the_sweep(self):
        pts = charging_sweep(SMALL, "qvaoi", 0.0, (0.2, 0.3), tol=1e-2)
        assert len(pts) == 2
        assert all(pt.error is not None for pt in pts)
        assert all(math.isnan(pt.ratio) for pt in pts)


class TestFormatting:
    def test_comparison_tables_carry_header_and_rows(self):
        cells = comparison_grid(
            SMALL, policy_set=("greedy", "qvaoi"), pe_values=(0.1,), pq_values=(0.3,)
        )
        text = format_comparison(SMALL, cells)
        assert f"# params_stamp = {params_stamp(SMALL)}" in text
        data = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert len(data) == 1 + 2  # column header + one row per policy
        wide = format_comparison(SMALL, cells, gnuplot=True)
        assert "greedy" in wide and "qvaoi" in wide

    def test_action_map_matrix_has_one_row_per_metric_value(self):
        am = action_map(SMALL, "greedy")
        text = format_action_map(SMALL, am, gnuplot=True)
        data = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert len(data) == SMALL.delta_max + 1
        long = format_action_map(SMALL, am)
        rows = [l for l in long.splitlines() if l and not l.startswith("#")]
        assert len(rows) == 1 + (SMALL.delta_max + 1) * (SMALL.B + 1)

    def test_ratio_table_lists_every_point(self):
        pts = charging_sweep(SMALL, "greedy", 3.0, (0.3,), tol=5e-2)
        text = format_ratio_table(SMALL, pts, "greedy", 3.0)
        assert "# target = 3" in text
        data = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert len(data) == 1 + len(pts)
