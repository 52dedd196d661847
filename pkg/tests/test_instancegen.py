import numpy as np
import pytest
from hypothesis import given, strategies as st

from phirmdp.core import Status, validate
from phirmdp.instancegen import (
    RNG_ID,
    THRESHOLD_MARGIN,
    generator_metadata,
    random_projection_instance,
    random_rmdp,
)
from phirmdp.projections import project


@given(st.integers(2, 500), st.integers(0, 2**63))
def test_projection_instance_ranges(S, seed):
    query = random_projection_instance(S, seed)
    assert query.cost.min() + THRESHOLD_MARGIN < query.threshold < query.nominal @ query.cost - THRESHOLD_MARGIN
    assert abs(query.nominal.sum() - 1.0) <= 1e-12
    assert np.all((query.cost >= 0) & (query.cost < 1))
    assert query.violations() == []


def test_projection_instance_deterministic():
    a, b = random_projection_instance(10, 42), random_projection_instance(10, 42)
    assert np.array_equal(a.nominal, b.nominal) and np.array_equal(a.cost, b.cost)
    assert a.threshold == b.threshold
    c = random_projection_instance(10, 43)
    assert not np.array_equal(a.cost, c.cost)


def test_projection_instance_size_check():
    with pytest.raises(ValueError):
        random_projection_instance(1, 0)


def test_cost_distribution():
    costs = np.vstack([random_projection_instance(3, [7, i]).cost for i in range(10_000)])
    means = costs.mean(axis=0)
    assert np.all((means >= 0.48) & (means <= 0.52))


@given(st.integers(2, 60), st.integers(0, 2**31))
def test_generated_queries_are_never_degenerate(S, seed):
    query = random_projection_instance(S, seed)
    for kind in ("kl", "burg", "variation", "chi2"):
        assert project(kind, query).status is Status.SOLVED


@given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 2**31))
def test_rmdp_is_valid(S, A, seed):
    inst = random_rmdp(S, A, seed)
    assert validate(inst) == []
    assert 0.0 <= inst.kappa <= 1.0
    assert inst.discount == 0.95
    assert inst.rewards.shape == (S, A, S)


def test_rmdp_deterministic_and_kind():
    a = random_rmdp(5, 3, 11, kind="chi2")
    b = random_rmdp(5, 3, 11, kind="chi2")
    assert np.array_equal(a.rewards, b.rewards) and np.array_equal(a.nominal, b.nominal)
    assert a.kappa == b.kappa and a.kind.value == "chi2"


def test_rmdp_streams_are_independent_of_kind():
    a = random_rmdp(4, 2, 3, kind="kl")
    b = random_rmdp(4, 2, 3, kind="burg", discount=0.5)
    assert np.array_equal(a.nominal, b.nominal) and a.kappa == b.kappa


def test_rmdp_bad_sizes():
    with pytest.raises(ValueError):
        random_rmdp(1, 2, 0)
    with pytest.raises(ValueError):
        random_rmdp(3, 0, 0)
    with pytest.raises(ValueError):
        random_rmdp(3, 2, 0, discount=1.0)


def test_metadata():
    meta = generator_metadata(5, states=3)
    assert meta["rng"] == RNG_ID and meta["seed"] == 5 and meta["states"] == 3
    assert generator_metadata(np.random.SeedSequence([1, 2]))["seed"] == [1, 2]
