import math

import numpy as np
import pytest

from crbplan import (
    InvalidScenario,
    LinearConstraintSet,
    Method,
    ResourceBudget,
    SamplingPolicy,
    Scenario,
    Setting,
    SingularEverywhere,
    Target,
    Task,
    constraints_for,
    crb_t3,
    joint_priority_threshold,
    maximize_linear,
    plan,
    plan_linear,
    plan_t1_closed_form,
    plan_t3,
    validate,
)
from crbplan.strategy import Constraint


def model(rho, var_x=1.0, var_y=1.0):
    return validate((0, 0, var_x, var_y, rho))


def dec(task, alpha, e1, target=None):
    return Scenario(task, Setting.DECENTRALIZED, ResourceBudget(alpha, e1), target)


def cen(task, alpha, e1, e2, target=None):
    return Scenario(task, Setting.CENTRALIZED, ResourceBudget(alpha, e1, e2), target)


# --- scenario and budget validation ---


def test_budget_rejects_negative_fields():
    with pytest.raises(InvalidScenario):
        ResourceBudget(-1.0, 2.0)
    with pytest.raises(InvalidScenario):
        ResourceBudget(1.0, -2.0)


def test_scenario_e2_presence_matches_setting():
    with pytest.raises(InvalidScenario):
        Scenario(Task.T1, Setting.CENTRALIZED, ResourceBudget(1, 1))
    with pytest.raises(InvalidScenario):
        Scenario(Task.T1, Setting.DECENTRALIZED, ResourceBudget(1, 1, 1))


def test_scenario_default_target():
    assert dec(Task.T1, 1, 1).target is Target.MU_Y
    assert dec(Task.T3, 1, 1).target is Target.MU_X


# --- constraint sets ---


def test_constraints_decentralized_t1():
    cons = constraints_for(dec(Task.T1, alpha=2, e1=2))
    # p_y + 3 p_xy <= 2, p_x = 0, simplex, p >= 0
    assert cons.is_feasible(SamplingPolicy(0, 0.5, 0.5))
    assert cons.is_feasible(SamplingPolicy(0, 0, 2 / 3))
    assert not cons.is_feasible(SamplingPolicy(0, 0.2, 0.61))  # budget
    assert not cons.is_feasible(SamplingPolicy(0.1, 0.4, 0.4))  # p_x pinned to 0
    assert "no_marginal_x" in cons.violations(SamplingPolicy(0.1, 0.0, 0.0))


def test_constraints_decentralized_t3():
    cons = constraints_for(dec(Task.T3, alpha=2, e1=2))
    # p_z + 5 p_xy <= 2 for both sensors, plus simplex
    assert cons.is_feasible(SamplingPolicy(0.5, 0.1, 0.3))
    assert cons.is_feasible(SamplingPolicy(0.4, 0.4, 0.2))
    assert not cons.is_feasible(SamplingPolicy(0.1, 0.0, 0.39))
    assert not cons.is_feasible(SamplingPolicy(0.0, 0.1, 0.39))
    assert cons.is_feasible(SamplingPolicy(0.3, 0.3, 0.0))


def test_constraints_centralized_dc_binding():
    cons = constraints_for(cen(Task.T1, alpha=1, e1=10, e2=1))
    # DC row: p_x + p_y + 2 p_xy <= 1 dominates
    assert cons.is_feasible(SamplingPolicy(0, 0, 0.5))
    assert not cons.is_feasible(SamplingPolicy(0, 0, 0.51))
    assert cons.is_feasible(SamplingPolicy(0.5, 0.5, 0))
    assert not cons.is_feasible(SamplingPolicy(0.4, 0.4, 0.15))
    assert "dc_budget" in cons.violations(SamplingPolicy(0, 0, 0.51))


def test_constraints_origin_always_feasible():
    for scenario in (
        dec(Task.T1, 0.5, 0.2),
        dec(Task.T3, 4, 0),
        cen(Task.T2, 2, 1, 0),
        cen(Task.T3, 1, math.inf, math.inf),
    ):
        assert constraints_for(scenario).is_feasible(SamplingPolicy(0, 0, 0))


# --- prioritization threshold ---


def test_threshold_decentralized_values():
    assert joint_priority_threshold(2, Setting.DECENTRALIZED) == pytest.approx(
        math.sqrt(2 / 3), rel=1e-12
    )
    assert joint_priority_threshold(0, Setting.DECENTRALIZED) == 0.0


def test_threshold_centralized_is_sqrt_half():
    value = joint_priority_threshold(2, Setting.CENTRALIZED)
    assert value == pytest.approx(0.7071067811865476, rel=1e-12)
    # matches the cost-ratio-1 decentralized special case
    assert value == joint_priority_threshold(1, Setting.DECENTRALIZED)


# --- closed-form planner ---


def test_closed_form_moderate_budget_low_rho():
    result = plan_t1_closed_form(2, 2, model(0.5))
    assert result.policy.p_y == pytest.approx(0.5)
    assert result.policy.p_xy == pytest.approx(0.5)
    assert result.method is Method.CLOSED_FORM
    assert not result.tie


def test_closed_form_stringent_budget():
    result = plan_t1_closed_form(2, 0.8, model(0.5))
    assert result.policy.p_xy == 0.0
    assert result.policy.p_y == pytest.approx(0.8)


def test_closed_form_high_rho_spends_all_on_joint():
    result = plan_t1_closed_form(2, 2, model(0.9))
    assert result.policy.p_xy == pytest.approx(2 / 3)
    assert result.policy.p_y == 0.0


def test_closed_form_ample_budget():
    for rho in (0.1, 0.5, 0.9):
        result = plan_t1_closed_form(2, 3.5, model(rho))
        assert result.policy.p_xy == 1.0


def test_closed_form_tie_at_threshold():
    rho_star = math.sqrt(2 / 3)
    assert plan_t1_closed_form(2, 2, model(rho_star)).tie
    assert not plan_t1_closed_form(2, 2, model(rho_star + 1e-3)).tie
    assert not plan_t1_closed_form(2, 2, model(rho_star - 1e-3)).tie


def test_closed_form_policy_feasible():
    for alpha in (0.0, 0.5, 2.0, 4.0):
        for e1 in (0.0, 0.3, 1.0, 1.7, alpha + 1.0, alpha + 2.0):
            result = plan_t1_closed_form(alpha, e1, model(0.6))
            cons = constraints_for(dec(Task.T1, alpha, e1))
            assert cons.is_feasible(result.policy), (alpha, e1)


# --- vertex-enumeration planner ---


def test_plan_linear_matches_closed_form_spot():
    scenario = dec(Task.T1, 2, 2)
    result = plan_linear(scenario, model(0.5))
    assert result.policy.p_y == pytest.approx(0.5, abs=1e-12)
    assert result.policy.p_xy == pytest.approx(0.5, abs=1e-12)
    assert result.method is Method.VERTEX_ENUM


def test_plan_linear_rejects_t3():
    with pytest.raises(InvalidScenario):
        plan_linear(dec(Task.T3, 1, 1), model(0.5))


def test_plan_linear_centralized_large_budgets():
    result = plan_linear(cen(Task.T1, 2, 3, 100), model(0.9))
    assert result.policy.p_xy == pytest.approx(1.0)


def test_plan_linear_centralized_dc_bound():
    result = plan_linear(cen(Task.T1, 2, 10, 1), model(0.9))
    assert result.policy.p_xy == pytest.approx(0.25, abs=1e-9)
    assert result.policy.p_x == pytest.approx(0.0, abs=1e-12)
    assert result.policy.p_y == pytest.approx(0.0, abs=1e-12)


def test_plan_linear_proves_marginal_x_useless():
    # rebuild the t1 polytope WITHOUT the p_x = 0 row: the optimizer must
    # discover p_x = 0 on its own since p_x consumes budget without reward
    scenario = cen(Task.T1, 2, 2, 2)
    rows = tuple(
        r for r in constraints_for(scenario).rows if r.name != "no_marginal_x"
    )
    m = model(0.6)
    shrink = 1 - m.rho**2
    vertex, value, _ = maximize_linear(
        LinearConstraintSet(rows), (0.0, 1.0 / m.var_y, 1.0 / (shrink * m.var_y))
    )
    assert vertex[0] == pytest.approx(0.0, abs=1e-12)
    assert value > 0


def test_plan_linear_agreement_smoke():
    # closed form and vertex enumeration give the same bound everywhere
    for alpha in (0.5, 2.0):
        for e1 in (0.4, 1.0, 1.8, alpha + 1.2):
            for rho in (0.0, 0.4, 0.82, 0.95):
                m = model(rho)
                a = plan_t1_closed_form(alpha, e1, m)
                b = plan_linear(dec(Task.T1, alpha, e1), m)
                assert a.objective_value == pytest.approx(
                    b.objective_value, rel=1e-9
                ), (alpha, e1, rho)
                if not (a.tie or b.tie):
                    assert a.policy.p_y == pytest.approx(b.policy.p_y, abs=1e-9)
                    assert a.policy.p_xy == pytest.approx(b.policy.p_xy, abs=1e-9)


def test_plan_linear_threshold_jump_bracketed():
    alpha, e1 = 2.0, 2.0
    rho_star = joint_priority_threshold(alpha, Setting.DECENTRALIZED)
    scenario = dec(Task.T1, alpha, e1)

    def joint_first(rho):
        return plan_linear(scenario, model(rho)).policy.p_xy > 0.58

    lo, hi = 0.7, 0.9
    assert not joint_first(lo) and joint_first(hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if joint_first(mid):
            hi = mid
        else:
            lo = mid
    assert abs(0.5 * (lo + hi) - rho_star) <= 1e-6


def test_plan_linear_infeasible_guard_unreachable():
    # zero budgets still leave the origin; planner reports an infinite bound
    result = plan_linear(dec(Task.T1, 2, 0), model(0.5))
    assert math.isinf(result.objective_value)


# --- t3 grid planner ---


def test_plan_t3_unconstrained_flat_optimum():
    for rho in (0.0, 0.3, 0.6, 0.9):
        result = plan_t3(dec(Task.T3, 2, math.inf, Target.MU_X), model(rho))
        assert result.objective_value == pytest.approx(1.0, abs=1e-4)
        assert result.tie
        assert result.method is Method.GRID_REFINE


def test_plan_t3_zero_budget_degenerate():
    with pytest.raises(SingularEverywhere):
        plan_t3(dec(Task.T3, 2, 0), model(0.5))


def test_plan_t3_centralized_interior_optimum():
    result = plan_t3(cen(Task.T3, 2, 2, 2, Target.MU_X), model(0.8))
    assert result.policy.p_x > 0
    assert result.policy.p_y > 0
    assert result.policy.p_xy > 0
    # cross-check against an independent fine brute-force grid
    grid = np.linspace(0.0, 1.0, 401)
    best = math.inf
    cons = constraints_for(cen(Task.T3, 2, 2, 2, Target.MU_X))
    m = model(0.8)
    for px in grid:
        for pxy in grid[grid <= 1.0 - px + 1e-12]:
            py = min(1.0 - px - pxy, 2 / 3 - pxy, 1.0 - px - 2 * pxy)
            if py < 0:
                continue
            pol = SamplingPolicy.clamped(px, py, pxy)
            if not cons.is_feasible(pol):
                continue
            if pol.p_x == 0.0 and pol.p_xy == 0.0:
                continue  # no information about mu_x at all
            best = min(best, crb_t3(pol, m, Target.MU_X))
    assert result.objective_value <= best + 1e-5


def test_plan_t3_policy_always_feasible():
    cases = [
        (dec(Task.T3, 2, 1.5), 0.5),
        (dec(Task.T3, 0.5, 1.0, Target.MU_Y), 0.8),
        (cen(Task.T3, 2, 2, 2), 0.8),
        (cen(Task.T3, 1, 3, 1, Target.MU_Y), 0.4),
    ]
    for scenario, rho in cases:
        result = plan_t3(scenario, model(rho))
        cons = constraints_for(scenario)
        assert cons.is_feasible(result.policy)


def test_plan_t3_objective_nonincreasing_in_budget():
    values_e1 = [
        plan_t3(dec(Task.T3, 2, e1), model(0.8)).objective_value
        for e1 in (0.5, 1.0, 2.0, 5.0)
    ]
    assert all(a >= b - 1e-6 for a, b in zip(values_e1, values_e1[1:]))
    values_e2 = [
        plan_t3(cen(Task.T3, 2, 3, e2), model(0.8)).objective_value
        for e2 in (0.5, 1.0, 2.0, 4.0)
    ]
    assert all(a >= b - 1e-6 for a, b in zip(values_e2, values_e2[1:]))


def test_plan_dispatcher_routes_by_scenario():
    m = model(0.5)
    assert plan(dec(Task.T1, 2, 2), m).method is Method.CLOSED_FORM
    assert plan(cen(Task.T2, 2, 2, 2), m).method is Method.VERTEX_ENUM
    assert plan(cen(Task.T3, 2, 2, 2), m).method is Method.GRID_REFINE


def test_t2_planning_reuses_t1_solution():
    # unknown correlation leaves the mean entry of the (diagonal) information
    # matrix untouched, so the optimal policy coincides with the t1 answer
    m = model(0.82)
    for scenario_t1, scenario_t2 in [
        (dec(Task.T1, 2, 1.4), dec(Task.T2, 2, 1.4)),
        (cen(Task.T1, 2, 2, 1.2), cen(Task.T2, 2, 2, 1.2)),
    ]:
        a = plan(scenario_t1, m)
        b = plan(scenario_t2, m)
        assert a.policy == b.policy
        assert a.objective_value == b.objective_value


def test_constraint_slack_evaluation():
    row = Constraint("sensor_y_budget", (0.0, 1.0, 3.0), 2.0)
    assert row.slack(SamplingPolicy(0, 0.5, 0.5)) == pytest.approx(0.0)
    assert row.value(0.0, 1.0, 0.0) == 1.0
