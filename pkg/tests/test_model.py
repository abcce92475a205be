import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from adaptagg import solver
from adaptagg.clustering import AggregationResult
from adaptagg.model import (
    BASE_CASE,
    ConsistencyError,
    InternalConsistencyError,
    ModelError,
    PlanSolution,
    Policy,
    SolveFailed,
    TechCatalog,
    VariantMismatchError,
    audit,
    base_catalog,
    build_full,
    build_reduced,
    build_slice,
    config_from_dict,
    config_to_dict,
    cost_breakdown,
    extract_costs,
    load_config,
    solve_instance,
)
from adaptagg.timeseries import HorizonData, TimeSlice, slice_horizon

from conftest import toy_catalog, toy_data, weekly_toy

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _zeros(hours, resources=("solar", "wind")):
    return HorizonData(load=np.zeros(hours), profiles={r: np.full(hours, 0.5) for r in resources})


# ---------------------------------------------------------------- catalog


def test_base_case_published_values():
    cat = base_catalog()
    solar, wind = cat.ire
    (bat,) = cat.storage
    (the,) = cat.thermal
    # $/kW and $/kWh in the config, $/MW and $/MWh in the model
    assert solar.capex == 1_000_000.0
    assert wind.capex == 1_500_000.0
    assert bat.energy_capex == 200_000.0
    assert bat.power_capex == 70_000.0
    assert bat.deg_cost == 50.0
    assert the.capex == 1_000_000.0
    assert the.op_cost == 30.0
    assert the.min_up == 6 and the.min_down == 6


def test_shipped_configs_match_builtin():
    assert json.loads((CONFIGS / "base.json").read_text()) == BASE_CASE
    cat, policy = load_config(CONFIGS / "linear.json")
    assert cat == base_catalog().without_thermal()
    assert policy == Policy()


def test_config_round_trip():
    cat, pol = config_from_dict(BASE_CASE)
    assert config_from_dict(config_to_dict(cat, pol)) == (cat, pol)


@pytest.mark.parametrize("patch", [
    {"xi_min": 0.8, "xi_max": 0.5},
    {"xi_max": 1.2},
    {"n_units": -1},
    {"unit_size_mw": 12.5},
    {"opex_usd_per_mwh": -1.0},
])
def test_thermal_validation(patch):
    d = json.loads(json.dumps(BASE_CASE["catalog"]))
    d["thermal"][0].update(patch)
    with pytest.raises(ModelError):
        TechCatalog.from_dict(d)


@pytest.mark.parametrize("eff", [0.0, 1.5])
def test_storage_efficiency_range(eff):
    d = json.loads(json.dumps(BASE_CASE["catalog"]))
    d["storage"][0]["efficiency"] = eff
    with pytest.raises(ModelError):
        TechCatalog.from_dict(d)


def test_policy_range():
    with pytest.raises(ModelError):
        Policy(rps=1.2)
    with pytest.raises(ModelError):
        Policy(rps=-0.1)


def test_capex_multipliers():
    cat = base_catalog().with_capex_multipliers({"wind": 1.25, "solar": 0.75})
    assert cat.ire[0].capex == 750_000.0
    assert cat.ire[1].capex == 1_875_000.0
    with pytest.raises(ModelError):
        cat.with_capex_multipliers({"hydro": 2.0})


# ------------------------------------------------------------- structure


def _hand_count_linear(T, n_ire=2, n_sto=1):
    # y_IRE per resource, y_ENE and y_POW per store, then per hour:
    # x_DIS, x_CHA, E per store and one curtailment variable
    return n_ire + 2 * n_sto + T * (3 * n_sto + 1)


def test_linear_variable_count():
    cat = toy_catalog(thermal=False)
    assert _hand_count_linear(2) == 12
    inst2 = build_full(toy_data(2), cat, Policy(), "linear")
    assert inst2.num_vars == 12
    assert sorted(inst2.names) == sorted([
        "y_IRE(solar)", "y_IRE(wind)", "y_ENE(battery)", "y_POW(battery)",
        "x_DIS(battery,0)", "x_DIS(battery,1)", "x_CHA(battery,0)", "x_CHA(battery,1)",
        "E(battery,0)", "E(battery,1)", "w(0)", "w(1)",
    ])
    inst = build_full(toy_data(168), cat, Policy(), "linear")
    assert inst.num_vars == 676 == _hand_count_linear(168)
    assert not inst.integer.any()
    assert inst.rps_row is None


def test_integer_flags_on_two_hours():
    inst = build_full(toy_data(2), toy_catalog(), Policy(), "integer")
    flagged = sorted(np.asarray(inst.names)[inst.integer].tolist())
    assert flagged == sorted([
        "n(thermal,0)", "n(thermal,1)", "n_UP(thermal,0)", "n_UP(thermal,1)",
        "n_DN(thermal,0)", "n_DN(thermal,1)", "y_THE(thermal)",
    ])


def test_variant_mismatch():
    with pytest.raises(VariantMismatchError):
        build_full(toy_data(4), toy_catalog(thermal=True), Policy(), "linear")
    with pytest.raises(VariantMismatchError):
        build_full(toy_data(4), toy_catalog(thermal=False), Policy(), "integer")
    with pytest.raises(ModelError):
        build_full(toy_data(4), toy_catalog(thermal=False), Policy(), "quadratic")


def test_missing_profile_is_error():
    data = HorizonData(load=np.ones(4), profiles={"solar": np.ones(4)})
    with pytest.raises(ModelError):
        build_full(data, toy_catalog(thermal=False), Policy(), "linear")


def test_counts_are_deterministic():
    a = build_full(toy_data(30, seed=1), toy_catalog(), Policy(), "integer")
    b = build_full(toy_data(30, seed=2), toy_catalog(), Policy(), "integer")
    assert (a.num_vars, a.num_rows) == (b.num_vars, b.num_rows)
    assert a.names == b.names and a.row_names == b.row_names


def test_every_row_references_declared_variables():
    inst = build_full(toy_data(10), toy_catalog(), Policy(), "integer")
    assert inst.matrix.shape == (inst.num_rows, inst.num_vars)
    assert inst.matrix.indices.max() < inst.num_vars


# ------------------------------------------------------------------ costs


def test_zero_primal_costs_nothing():
    inst = build_full(toy_data(5), toy_catalog(), Policy(), "integer")
    costs = cost_breakdown(inst, np.zeros(inst.num_vars))
    assert all(v == 0.0 for k, v in costs.items() if k not in ("C_FIX", "total"))
    cat = toy_catalog(thermal=False)
    lin = build_full(toy_data(5), cat, Policy(), "linear")
    assert all(v == 0.0 for v in cost_breakdown(lin, np.zeros(lin.num_vars)).values())


def test_thermal_operating_cost_arithmetic():
    inst = build_full(toy_data(4), base_catalog(), Policy(), "integer")
    x = np.zeros(inst.num_vars)
    x[inst.index["x_THE"][0, 0]] = [10.0, 20.0, 30.0, 40.0]
    costs = cost_breakdown(inst, x)
    assert costs["C_OP"] == 3000.0
    assert costs["C_VAR"] == 3000.0


def test_cost_breakdown_matches_objective_vector():
    inst = build_full(toy_data(24, seed=3), toy_catalog(), Policy(), "integer")
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 5, inst.num_vars)
    costs = cost_breakdown(inst, x)
    assert costs["total"] == pytest.approx(float(inst.cost @ x), rel=1e-12)
    assert costs["total"] == pytest.approx(costs["C_VAR"] + costs["C_FIX"], rel=1e-15)


def test_extract_costs_rejects_missing_solution():
    inst = build_full(toy_data(4), toy_catalog(thermal=False), Policy(), "linear")
    out = solver.SolveOutcome(solver.Status.INFEASIBLE)
    with pytest.raises(SolveFailed) as err:
        extract_costs(inst, out)
    assert err.value.status is solver.Status.INFEASIBLE


def test_extract_costs_detects_objective_mismatch():
    inst = build_full(toy_data(4), toy_catalog(thermal=False), Policy(), "linear")
    x = np.zeros(inst.num_vars)
    x[inst.index["y_IRE"][0]] = 1.0
    out = solver.SolveOutcome(solver.Status.OPTIMAL, x=x, objective=123.0)
    with pytest.raises(InternalConsistencyError):
        extract_costs(inst, out)


# ---------------------------------------------------------------- solving


@pytest.mark.parametrize("backend", ["reference", "highs"])
def test_zero_demand_costs_nothing(backend):
    inst = build_full(_zeros(6), toy_catalog(thermal=False), Policy(), "linear")
    sol, out = solve_instance(inst, backend)
    assert sol.objective == 0.0
    assert np.all(out.x == 0.0)


def test_zero_demand_integer_slice():
    data = _zeros(8)
    inst = build_slice(data, TimeSlice(0, 0, 8), toy_catalog(), Policy(), "integer")
    sol, out = solve_instance(inst, "highs")
    # the fixed thermal fleet is still paid for; nothing else is built or run
    assert sol.cost_breakdown["C_VAR"] == 0.0
    assert sol.capacities["solar"] == sol.capacities["wind"] == 0.0
    assert np.all(out.x[inst.index["n"]] == 0.0)


def test_full_solution_passes_audit():
    inst = build_full(toy_data(48, seed=4), toy_catalog(), Policy(rps=0.6), "integer")
    sol, out = solve_instance(inst, "highs")
    assert audit(inst, out.x) == []
    assert sol.objective == pytest.approx(sol.cost_breakdown["C_VAR"] + sol.cost_breakdown["C_FIX"])
    thermal_share = out.x[inst.index["x_THE"]].sum() / inst.blocks[0].load.sum()
    assert thermal_share <= 0.4 + 1e-9


def test_audit_flags_broken_points():
    inst = build_full(toy_data(24, seed=5), toy_catalog(), Policy(), "integer")
    _, out = solve_instance(inst, "highs")
    x = out.x.copy()
    x[inst.index["w"][0, 3]] += 1.0
    assert any("energy balance" in p for p in audit(inst, x))
    x = out.x.copy()
    x[inst.index["n"][0, 0, 5]] += 0.5
    assert any("not an integer" in p for p in audit(inst, x))
    x = out.x.copy()
    x[inst.index["E"][0, 0, 2]] += 1.0
    assert any("SOC" in p for p in audit(inst, x))


def test_full_infeasible_without_renewables_is_reported():
    hours = 6
    data = HorizonData(load=np.full(hours, 5.0), profiles={"solar": np.zeros(hours), "wind": np.zeros(hours)})
    inst = build_full(data, toy_catalog(), Policy(rps=1.0), "integer")
    with pytest.raises(SolveFailed) as err:
        solve_instance(inst, "highs")
    assert err.value.status is solver.Status.INFEASIBLE


def test_empty_soc_boundary():
    data = toy_data(24, seed=9)
    cat = toy_catalog(thermal=False)
    cyc, _ = solve_instance(build_full(data, cat, Policy(), "linear"))
    inst = build_full(data, cat, Policy(), "linear", soc_boundary="empty")
    emp, out = solve_instance(inst)
    assert audit(inst, out.x) == []
    # starting empty is a restriction the cyclic model does not have, and vice versa;
    # both must at least be feasible and priced consistently
    assert emp.objective > 0 and cyc.objective > 0


def test_slice_over_whole_horizon_equals_full():
    data = toy_data(48, seed=2)
    cat = toy_catalog()
    full = build_full(data, cat, Policy(), "integer")
    sl = build_slice(data, TimeSlice(0, 0, 48), cat, Policy(), "integer")
    assert sl.scope.fixed_cost_scale == 1.0
    assert full.names == sl.names
    np.testing.assert_array_equal(full.cost, sl.cost)
    assert (full.matrix != sl.matrix).nnz == 0
    np.testing.assert_array_equal(full.rhs, sl.rhs)


def test_slice_fixed_cost_scale():
    data = toy_data(170, seed=2)
    slices = slice_horizon(data, 24)
    inst = build_slice(data, slices[2], toy_catalog(thermal=False), Policy(), "linear")
    assert inst.scope.fixed_cost_scale == 24 / 168
    assert inst.cost[inst.index["y_IRE"][0]] == pytest.approx(1000.0 * 24 / 168)


def test_identical_slices_give_identical_instances():
    day = toy_data(24, seed=11)
    data = HorizonData(
        load=np.tile(day.load, 2), profiles={k: np.tile(v, 2) for k, v in day.profiles.items()}
    )
    s0, s1 = slice_horizon(data, 24)
    cat = toy_catalog(thermal=False)
    a = build_slice(data, s0, cat, Policy(), "linear")
    b = build_slice(data, s1, cat, Policy(), "linear")
    np.testing.assert_array_equal(a.cost, b.cost)
    assert (a.matrix != b.matrix).nnz == 0
    sa, _ = solve_instance(a)
    sb, _ = solve_instance(b)
    assert sa.capacities == sb.capacities


def test_slice_rps_can_be_switched_off():
    data = toy_data(24)
    on = build_slice(data, TimeSlice(0, 0, 24), toy_catalog(), Policy(slice_rps=True), "integer")
    off = build_slice(data, TimeSlice(0, 0, 24), toy_catalog(), Policy(slice_rps=False), "integer")
    assert on.rps_row is not None and off.rps_row is None
    assert off.num_rows == on.num_rows - 1


# ---------------------------------------------------------------- reduced


def _agg(assign, reps, slice_length):
    assign = np.asarray(assign)
    return AggregationResult(assignments=assign, representatives=list(reps),
                             weights=np.bincount(assign), slice_length=slice_length)


def test_single_cluster_reduced_model():
    data = toy_data(96, seed=5)
    cat = toy_catalog()
    pol = Policy(rps=0.5)
    red = build_reduced(data, _agg([0, 0, 0, 0], [2], 24), cat, pol, "integer")
    sl = build_slice(data, TimeSlice(2, 48, 24), cat, pol, "integer", horizon_hours=96)
    assert red.num_vars == sl.num_vars and red.num_rows == sl.num_rows
    cap = np.concatenate([red.index[k] for k in ("y_IRE", "y_ENE", "y_POW", "y_THE")])
    hourly = np.setdiff1d(np.arange(red.num_vars), cap)
    np.testing.assert_allclose(red.cost[hourly], 4 * sl.cost[hourly])
    np.testing.assert_allclose(red.cost[cap], sl.cost[cap] * 96 / 24)
    # renewable share row is scaled by the weight on both sides
    assert red.rhs[red.rps_row] == pytest.approx(4 * sl.rhs[sl.rps_row])


def test_weighted_rps_right_hand_side():
    data = toy_data(96, seed=6)
    pol = Policy(rps=0.7)
    agg = _agg([0, 0, 1, 0], [0, 2], 24)
    assert agg.weights.tolist() == [3, 1]
    inst = build_reduced(data, agg, toy_catalog(), pol, "integer")
    demand = 3 * data.load[0:24].sum() + 1 * data.load[48:72].sum()
    assert inst.rhs[inst.rps_row] == pytest.approx((1 - 0.7) * demand, rel=1e-14)
    row = inst.matrix.getrow(inst.rps_row)
    coefs = dict(zip(row.indices.tolist(), row.data.tolist()))
    assert coefs[int(inst.index["x_THE"][0, 0, 0])] == 3.0
    assert coefs[int(inst.index["x_THE"][0, 1, 5])] == 1.0


def test_reduced_weights_must_cover_slices():
    data = toy_data(96)
    bad = AggregationResult(assignments=np.array([0, 0, 1, 1]), representatives=[0, 2],
                            weights=np.array([2, 1]), slice_length=24)
    with pytest.raises(ConsistencyError):
        build_reduced(data, bad, toy_catalog(), Policy(), "integer")
    with pytest.raises(ConsistencyError):
        build_reduced(toy_data(120), _agg([0, 0, 1, 1], [0, 2], 24), toy_catalog(), Policy(), "integer")


def test_every_slice_its_own_cluster_on_four_weeks():
    data = weekly_toy(4)
    cat = base_catalog().without_thermal()
    full, _ = solve_instance(build_full(data, cat, Policy(), "linear"))
    red, out = solve_instance(build_reduced(data, _agg([0, 1, 2, 3], [0, 1, 2, 3], 168), cat, Policy(), "linear"))
    assert red.objective <= full.objective * (1 + 1e-6)


def test_plan_solution_round_trip():
    inst = build_full(toy_data(12), toy_catalog(thermal=False), Policy(), "linear")
    sol, _ = solve_instance(inst)
    back = PlanSolution.from_dict(json.loads(json.dumps(sol.to_dict(include_dispatch=True))))
    assert back.capacities == sol.capacities
    assert back.objective == sol.objective
    np.testing.assert_array_equal(back.dispatch["E"], sol.dispatch["E"])


# ------------------------------------------------------------- properties


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 10_000), hours=st.integers(2, 30), rps=st.sampled_from([0.0, 0.3, 0.6]))
def test_lp_solutions_are_consistent(seed, hours, rps):
    inst = build_full(toy_data(hours, seed), toy_catalog(thermal=False), Policy(rps=rps), "linear")
    sol, out = solve_instance(inst)  # extract_costs re-checks the objective
    assert audit(inst, out.x) == []
    assert sol.objective == pytest.approx(out.objective, rel=1e-6)


def test_cost_never_falls_as_rps_rises():
    data = toy_data(36, seed=21)
    cat = toy_catalog()
    costs = []
    for r in np.linspace(0.0, 0.9, 7):
        sol, _ = solve_instance(build_full(data, cat, Policy(rps=float(r)), "integer"), "highs",
                                solver.Tolerances(mip_gap=1e-9))
        costs.append(sol.objective)
    assert all(b >= a * (1 - 1e-7) for a, b in zip(costs, costs[1:]))
