"""Seeded random instances following the benchmark protocol.

All draws come from numpy's PCG64 seeded through ``SeedSequence``; each tensor
gets its own spawned child stream so adding a tensor never shifts the others.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from .core import DivergenceKind, MdpInstance, ProjectionQuery

__all__ = [
    "RNG_ID",
    "THRESHOLD_MARGIN",
    "DEFAULT_DISCOUNT",
    "random_projection_instance",
    "random_rmdp",
    "generator_metadata",
]

RNG_ID = "PCG64/SeedSequence"
THRESHOLD_MARGIN = 1e-8
DEFAULT_DISCOUNT = 0.95

Seed = Union[int, Sequence[int], np.random.SeedSequence]


def _streams(seed: Seed, n: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n)]


def _nominal_and_threshold(rng: np.random.Generator, S: int):
    # redraw in the (practically impossible) event the threshold interval is empty
    while True:
        b = rng.random(S)
        u = rng.random(S)
        total = u.sum()
        if total <= 0:
            continue
        pbar = u / total
        lo = b.min() + THRESHOLD_MARGIN
        hi = float(pbar @ b) - THRESHOLD_MARGIN
        if hi > lo:
            return pbar, b, lo, hi


def random_projection_instance(S: int, seed: Seed, delta: float = 1e-6) -> ProjectionQuery:
    """Costs and nominal weights uniform on [0, 1]; threshold uniform strictly inside the hard range."""
    if S < 2:
        raise ValueError("projection instances need at least 2 states")
    rng, rng_beta = _streams(seed, 2)
    pbar, b, lo, hi = _nominal_and_threshold(rng, S)
    beta = float(rng_beta.uniform(lo, hi))
    return ProjectionQuery(pbar, b, beta, delta)


def random_rmdp(
    S: int,
    A: int,
    seed: Seed,
    discount: float = DEFAULT_DISCOUNT,
    kind=DivergenceKind.KL,
) -> MdpInstance:
    """Random instance: uniform rewards, normalized-uniform nominal rows, budget uniform on [0, 1]."""
    if S < 2 or A < 1:
        raise ValueError(f"need S >= 2 and A >= 1, got S={S}, A={A}")
    if not 0 < discount < 1:
        raise ValueError("discount must lie in (0, 1)")
    r_rng, p_rng, k_rng = _streams(seed, 3)
    rewards = r_rng.random((S, A, S))
    u = p_rng.random((S, A, S))
    nominal = u / u.sum(axis=2, keepdims=True)
    kappa = float(k_rng.random())
    return MdpInstance(rewards, nominal, discount, kappa, DivergenceKind.parse(kind))


def generator_metadata(seed: Seed, **extra) -> dict:
    """Everything needed to regenerate an instance."""
    if isinstance(seed, np.random.SeedSequence):
        seed = seed.entropy
    seed = seed if isinstance(seed, int) else list(seed)
    meta = {"rng": RNG_ID, "seed": seed, "numpy": np.__version__}
    meta.update(extra)
    return meta
