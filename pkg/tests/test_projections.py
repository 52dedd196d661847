import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phirmdp.core import DivergenceKind, ProjectionQuery, Status
from phirmdp.divergence import divergence, dual_objective
from phirmdp.instancegen import random_projection_instance
from phirmdp.oracle import grid_slack, oracle_dual_scan, oracle_project_grid
from phirmdp.projections import (
    Chi2Rows,
    InfeasibleMarginError,
    iteration_bound,
    project,
    project_burg,
    project_chi2,
    project_kl,
    project_variation,
    row_solver,
)

KL, BURG, VAR, CHI2 = DivergenceKind
HALF = np.array([0.5, 0.5])


def q(pbar, b, beta, delta=1e-9):
    return ProjectionQuery(np.asarray(pbar, float), np.asarray(b, float), beta, delta)


def variation_by_vertices(pbar, b, beta):
    """Exact L1 projection: every vertex of the arrangement {sum p = 1} x {p_i = 0, p_i = pbar_i, b p = beta}."""
    S = len(pbar)
    planes = [(np.eye(S)[i], 0.0) for i in range(S)]
    planes += [(np.eye(S)[i], pbar[i]) for i in range(S)]
    planes.append((np.asarray(b, float), beta))
    best = math.inf
    for combo in itertools.combinations(planes, S - 1):
        M = np.vstack([np.ones(S)] + [c[0] for c in combo])
        rhs = np.array([1.0] + [c[1] for c in combo])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        p = np.linalg.solve(M, rhs)
        if p.min() < -1e-12 or p @ b > beta + 1e-12:
            continue
        best = min(best, float(np.abs(p - pbar).sum()))
    return best


def test_dispatcher_trivial_and_infeasible(kind):
    r = project(kind, q(HALF, [0.0, 1.0], 0.6))
    assert r.status is Status.TRIVIAL and r.lower == r.upper == 0.0
    r = project(kind, q(HALF, [1.0, 2.0], 0.5))
    assert r.status is Status.INFEASIBLE and r.lower == r.upper == math.inf and r.alpha is None


def test_threshold_equal_to_mean_is_trivial(kind):
    assert project(kind, q(HALF, [0.0, 1.0], 0.5)).status is Status.TRIVIAL


def test_variation_two_states():
    r = project(VAR, q(HALF, [0.0, 1.0], 0.25))
    assert r.lower == r.upper == pytest.approx(0.5, abs=1e-12)


def test_variation_three_states_matches_vertex_enumeration():
    pbar = np.full(3, 1 / 3)
    b = np.array([0.0, 1.0, 2.0])
    exact = variation_by_vertices(pbar, b, 0.5)
    assert exact == pytest.approx(0.5, abs=1e-12)
    r = project_variation(q(pbar, b, 0.5))
    assert r.lower == r.upper == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_variation_random_against_vertices(seed):
    query = random_projection_instance(2 + seed % 4, seed)
    r = project_variation(query)
    assert r.value == pytest.approx(variation_by_vertices(query.nominal, query.cost, query.threshold), abs=1e-10)


def test_kl_analytic_dual():
    r = project_kl(q([0.25, 0.75], [1.0, 2.0], 1.5, 1e-9))
    assert r.alpha == pytest.approx(math.log(3.0), abs=1e-6)
    exact = -1.5 * math.log(3.0) + math.log(6.0)
    assert r.lower - 1e-14 <= exact <= r.upper + 1e-14
    assert r.value == pytest.approx(0.143841, abs=1e-6)
    assert r.zeta == pytest.approx(math.log(6.0), abs=1e-5)


def test_kl_small_margin_limit():
    r = project_kl(q(HALF, [0.0, 1.0], 1e-4, 1e-8))
    assert r.value == pytest.approx(math.log(2.0), abs=1e-2)


def test_kl_at_min_cost_reports_limit():
    r = project(KL, q([0.2, 0.3, 0.5], [0.0, 0.0, 1.0], 0.0))
    assert r.status is Status.SOLVED
    assert r.value == pytest.approx(-math.log(0.5), abs=1e-12)


def test_burg_two_states():
    r = project_burg(q(HALF, [0.0, 1.0], 0.25, 1e-10))
    assert r.value == pytest.approx(0.5 * math.log(4.0 / 3.0), abs=1e-9)
    assert r.trace is not None and r.trace.alpha_lower <= r.alpha <= r.trace.alpha_upper


def test_burg_at_min_cost_is_unbounded():
    r = project(BURG, q(HALF, [0.0, 1.0], 0.0))
    assert r.status is Status.INFEASIBLE and r.value == math.inf


def test_chi2_two_states():
    r = project_chi2(q(HALF, [0.0, 1.0], 0.25))
    assert r.lower == r.upper == pytest.approx(0.25, abs=1e-12)
    assert r.alpha == pytest.approx(2.0)


def test_chi2_three_states_against_grid():
    query = random_projection_instance(3, 11)
    r = project_chi2(query)
    assert abs(r.value - oracle_project_grid(CHI2, query, 1 / 200)) <= 0.02


@pytest.mark.parametrize("solver", [project_kl, project_burg, project_variation, project_chi2])
def test_kind_solvers_reject_threshold_below_min(solver):
    with pytest.raises(InfeasibleMarginError):
        solver(q(HALF, [1.0, 2.0], 0.5))


def test_zero_nominal_entries():
    pbar = np.array([0.0, 0.5, 0.5])
    b = np.array([0.0, 0.4, 1.0])
    # KL and chi-square cannot use the free cheap entry: min reachable cost is 0.4
    assert project(KL, q(pbar, b, 0.3)).status is Status.INFEASIBLE
    assert project(CHI2, q(pbar, b, 0.3)).status is Status.INFEASIBLE
    # variation moves mass there at unit price per side
    r = project(VAR, q(pbar, b, 0.3))
    assert r.value == pytest.approx(variation_by_vertices(pbar, b, 0.3), abs=1e-12)
    r = project(BURG, q(pbar, b, 0.3, 1e-10))
    lo = oracle_dual_scan(BURG, q(pbar, b, 0.3))
    hi = oracle_project_grid(BURG, q(pbar, b, 0.3), 1 / 400)
    assert lo - 1e-9 <= r.lower <= r.upper <= hi + 1e-12
    for k in (KL, CHI2):
        r = project(k, q(pbar, b, 0.6, 1e-10))
        assert oracle_dual_scan(k, q(pbar, b, 0.6)) - 1e-9 <= r.lower
        assert r.upper <= oracle_project_grid(k, q(pbar, b, 0.6), 1 / 400) + 1e-12


def test_chi2_fast_path_agrees_with_three_piece_form():
    for seed in range(200):
        query = random_projection_instance(2 + seed % 6, seed)
        rows = Chi2Rows(query.nominal[None], query.cost[None])
        fast = project_chi2(query)
        slow, _, _ = rows._three_piece(np.array([0]), np.array([query.threshold - rows.bmin[0]]))
        assert fast.value == pytest.approx(slow[0], abs=1e-12)


def test_batch_rows_match_single_queries(kind):
    queries = [random_projection_instance(7, s, 1e-8) for s in range(12)]
    P = np.vstack([x.nominal for x in queries])
    B = np.vstack([x.cost for x in queries])
    beta = np.array([x.threshold for x in queries])
    res = row_solver(kind, P, B).solve(beta, 1e-8)
    for i, x in enumerate(queries):
        single = project(kind, x)
        assert res.lower[i] == pytest.approx(single.lower, abs=1e-14)
        assert res.upper[i] == pytest.approx(single.upper, abs=1e-14)


def test_stop_rule_keeps_bounds_valid():
    query = random_projection_instance(50, 3, 1e-10)
    exact = project(KL, query)
    res = row_solver(KL, query.nominal[None], query.cost[None]).solve(
        query.threshold, 1e-10, stop=lambda lo, hi: np.ones_like(lo, dtype=bool)
    )
    assert res.iterations[0] == 1
    assert res.lower[0] <= exact.lower + 1e-12 and res.upper[0] >= exact.upper - 1e-12


def test_rows_solver_scalar_threshold_broadcast():
    P = np.array([[0.5, 0.5], [0.25, 0.75]])
    B = np.array([[0.0, 1.0], [0.0, 1.0]])
    res = row_solver(VAR, P, B).solve(0.25)
    assert res.lower[0] == pytest.approx(0.5)
    assert res.lower[1] == pytest.approx(1.0)


queries = st.builds(
    random_projection_instance,
    st.integers(2, 3),
    st.integers(0, 2**31),
    st.just(1e-10),
)


@given(st.sampled_from(list(DivergenceKind)), queries)
def test_sandwich_between_oracles(kind, query):
    r = project(kind, query)
    assert r.status is Status.SOLVED
    assert oracle_dual_scan(kind, query) - 1e-9 <= r.lower <= r.upper
    h = 1 / 200
    assert r.upper <= oracle_project_grid(kind, query, h) + grid_slack(kind, query, h)


@given(
    st.sampled_from([KL, BURG]),
    st.integers(2, 200),
    st.integers(0, 2**31),
    st.sampled_from([1e-3, 1e-6, 1e-9]),
)
def test_delta_contract_and_iteration_bound(kind, S, seed, delta):
    query = random_projection_instance(S, seed, delta)
    r = project(kind, query)
    assert r.upper - r.lower <= delta
    assert r.iterations <= iteration_bound(kind, query)
    t = r.trace
    assert t.alpha_upper - t.alpha_lower <= t.initial_width * 2.0 ** -t.iterations * (1 + 1e-9) + 4e-16 * t.alpha_upper
    assert t.alpha_lower <= r.alpha <= t.alpha_upper


@given(st.sampled_from([VAR, CHI2]), st.integers(2, 300), st.integers(0, 2**31))
def test_exact_solvers_have_zero_width(kind, S, seed):
    r = project(kind, random_projection_instance(S, seed))
    assert r.lower == r.upper


@given(st.sampled_from(list(DivergenceKind)), st.integers(2, 40), st.integers(0, 2**31))
def test_monotone_in_threshold(kind, S, seed):
    base = random_projection_instance(S, seed, 1e-8)
    lo, hi = base.cost.min(), base.nominal @ base.cost
    betas = np.linspace(lo + 1e-3 * (hi - lo), hi, 12)
    values = [project(kind, ProjectionQuery(base.nominal, base.cost, float(x), 1e-8)).value for x in betas]
    assert all(a >= b - 2e-8 for a, b in zip(values, values[1:]))


@given(st.sampled_from(list(DivergenceKind)), st.integers(2, 60), st.integers(0, 2**31))
def test_returned_dual_is_feasible_and_tight(kind, S, seed):
    query = random_projection_instance(S, seed, 1e-9)
    r = project(kind, query)
    d = dual_objective(kind, r.alpha, r.zeta, query)
    assert d <= r.upper + 1e-9
    # strong duality: the returned pair attains the value up to the accuracy
    assert d >= r.lower - 1e-6


def test_primal_recovery_for_kl():
    query = random_projection_instance(6, 5, 1e-12)
    r = project_kl(query)
    p = query.nominal * np.exp(-r.alpha * query.cost)
    p /= p.sum()
    assert p @ query.cost == pytest.approx(query.threshold, abs=1e-6)
    assert divergence(KL, p, query.nominal) == pytest.approx(r.value, abs=1e-6)
