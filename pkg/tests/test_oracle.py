import math

import numpy as np
import pytest

from phirmdp.core import DivergenceKind, ProjectionQuery
from phirmdp.instancegen import random_projection_instance, random_rmdp
from phirmdp.oracle import (
    grid_slack,
    lattice,
    oracle_bellman,
    oracle_dual_scan,
    oracle_project_grid,
)
from phirmdp.projections import project

KL, BURG, VAR, CHI2 = DivergenceKind


def q(pbar, b, beta):
    return ProjectionQuery(np.asarray(pbar, float), np.asarray(b, float), beta)


@pytest.mark.parametrize("S,N", [(1, 5), (2, 7), (3, 10), (4, 6)])
def test_lattice_size(S, N):
    pts = np.vstack(list(lattice(S, N)))
    assert len(pts) == math.comb(N + S - 1, S - 1)
    assert np.allclose(pts.sum(axis=1), 1.0)
    assert len({tuple(np.round(p * N).astype(int)) for p in pts}) == len(pts)


def test_grid_hits_variation_optimum():
    assert oracle_project_grid(VAR, q([0.5, 0.5], [0.0, 1.0], 0.25), 1 / 64) == pytest.approx(0.5, abs=1e-12)


def test_grid_trivial_threshold(kind):
    query = q([0.3, 0.7], [0.2, 0.9], 0.9)
    assert oracle_project_grid(kind, query, 1 / 10) == 0.0


def test_grid_chi2_three_states():
    query = random_projection_instance(3, 21)
    assert abs(oracle_project_grid(CHI2, query, 1 / 200) - project(CHI2, query).value) <= 0.02


def test_grid_limits():
    with pytest.raises(ValueError):
        oracle_project_grid(KL, random_projection_instance(5, 0), 1 / 10)
    assert oracle_project_grid(KL, q([0.5, 0.5], [1.0, 2.0], 0.5), 1 / 10) == math.inf


def test_dual_scan_examples():
    query = q([0.25, 0.75], [1.0, 2.0], 1.5)
    assert oracle_dual_scan(KL, query, alphas=[0.0], zetas=[0.0]) == pytest.approx(0.0, abs=1e-15)
    assert oracle_dual_scan(KL, query, alphas=[0.0, 0.5, math.log(3.0)]) >= 0.143841 - 1e-9
    burg = oracle_dual_scan(BURG, query, alphas=[0.0, 1.0, 2.0], zetas=np.linspace(-5, 5, 101))
    assert math.isfinite(burg) and burg >= 0.0


def test_dual_scan_rejects_negative_alpha():
    with pytest.raises(ValueError):
        oracle_dual_scan(KL, q([0.5, 0.5], [0.0, 1.0], 0.2), alphas=[-1.0])


@pytest.mark.parametrize("seed", range(10))
def test_sandwich_validity(kind, seed):
    query = random_projection_instance(2 + seed % 3, seed)
    h = 1 / 100
    lower = oracle_dual_scan(kind, query)
    upper = oracle_project_grid(kind, query, h)
    assert lower <= upper + 1e-12
    assert upper - lower <= grid_slack(kind, query, h)


def test_refinement_shrinks_gap():
    ratios = []
    for seed in range(20):
        query = random_projection_instance(3, 100 + seed)
        lower = oracle_dual_scan(CHI2, query)
        g1 = oracle_project_grid(CHI2, query, 1 / 50) - lower
        g2 = oracle_project_grid(CHI2, query, 1 / 100) - lower
        if g1 > 1e-9:
            ratios.append(g2 / g1)
    # halving h roughly halves the gap (first-order rounding error)
    assert np.median(ratios) <= 0.75


def test_oracle_bellman_zero_budget():
    inst = random_rmdp(2, 2, 1).replace(kappa=0.0)
    v = np.array([1.0, 2.0])
    lo, hi = oracle_bellman(inst, v, 0)
    nominal = np.max(np.einsum("ij,ij->i", inst.nominal[0], inst.rewards[0] + inst.discount * v))
    assert lo == hi == pytest.approx(nominal)


def test_oracle_bellman_large_variation_budget():
    inst = random_rmdp(2, 2, 1, kind="variation").replace(kappa=4.0)
    v = np.array([1.0, 2.0])
    b = inst.rewards[1] + inst.discount * v
    floor = float(np.max(b.min(axis=1)))
    lo, hi = oracle_bellman(inst, v, 1)
    assert lo <= floor + 1e-12 and hi - floor <= 1e-3


def test_oracle_bellman_size_limit():
    with pytest.raises(ValueError):
        oracle_bellman(random_rmdp(4, 2, 0), np.zeros(4), 0)
