import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phirmdp.core import DivergenceKind, MdpInstance

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

KINDS = list(DivergenceKind)


@pytest.fixture(params=KINDS, ids=[k.value for k in KINDS])
def kind(request):
    return request.param


def chain_instance(kappa=0.0, kind=DivergenceKind.KL):
    """Two states: s0 -> s1 with reward 1, s1 absorbing with reward 0, discount 0.5."""
    nominal = np.zeros((2, 1, 2))
    nominal[0, 0, 1] = 1.0
    nominal[1, 0, 1] = 1.0
    rewards = np.zeros((2, 1, 2))
    rewards[0, 0, 1] = 1.0
    return MdpInstance(rewards, nominal, 0.5, kappa, kind)


def single_state(reward=0.7, discount=0.9, kappa=0.3, kind=DivergenceKind.KL):
    return MdpInstance(np.full((1, 1, 1), reward), np.ones((1, 1, 1)), discount, kappa, kind)
