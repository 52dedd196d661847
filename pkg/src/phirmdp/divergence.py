"""Phi-divergences, their convex conjugates and the bivariate dual objective."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import DivergenceKind, ProjectionQuery

__all__ = [
    "ConjugateValue",
    "phi",
    "phi_conjugate",
    "conjugate_array",
    "divergence",
    "dual_objective",
    "recession_slope",
]


class ConjugateValue(NamedTuple):
    value: float
    in_domain: bool


def phi(kind, t):
    """Generator ``phi(t)`` of the divergence, with ``phi(0)`` as the right limit.

    Accepts scalars or arrays; negative ``t`` raises ``ValueError``.
    """
    kind = DivergenceKind.parse(kind)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise ValueError("phi is defined for t >= 0 only")
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is DivergenceKind.KL:
            out = np.where(t_arr > 0, t_arr * np.log(np.where(t_arr > 0, t_arr, 1.0)), 0.0) - t_arr + 1.0
        elif kind is DivergenceKind.BURG:
            out = np.where(t_arr > 0, -np.log(np.where(t_arr > 0, t_arr, 1.0)) + t_arr - 1.0, np.inf)
        elif kind is DivergenceKind.VARIATION:
            out = np.abs(t_arr - 1.0)
        else:
            out = (t_arr - 1.0) ** 2
    return float(out) if np.ndim(out) == 0 else out


def recession_slope(kind) -> float:
    """``lim phi(t)/t`` as ``t -> inf``; the cost per unit of mass placed where nominal is zero."""
    kind = DivergenceKind.parse(kind)
    if kind in (DivergenceKind.BURG, DivergenceKind.VARIATION):
        return 1.0
    return math.inf


def conjugate_array(kind, y):
    """Vectorized ``phi*(y)``; ``+inf`` outside the domain."""
    kind = DivergenceKind.parse(kind)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is DivergenceKind.KL:
            return np.expm1(y)
        if kind is DivergenceKind.BURG:
            return np.where(y < 1.0, -np.log1p(-np.minimum(y, 1.0)), np.inf)
        if kind is DivergenceKind.VARIATION:
            return np.where(y <= 1.0, np.maximum(-1.0, y), np.inf)
        z = np.maximum(y + 2.0, 0.0)
        return 0.25 * z * z - 1.0


def phi_conjugate(kind, y: float) -> ConjugateValue:
    """Convex conjugate ``sup_{t >= 0} y t - phi(t)``."""
    v = float(conjugate_array(kind, y))
    return ConjugateValue(v, math.isfinite(v))


def divergence(kind, p, pbar) -> float:
    """``sum_s pbar_s phi(p_s / pbar_s)``, using the recession slope where ``pbar_s = 0``."""
    kind = DivergenceKind.parse(kind)
    p = np.asarray(p, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    if p.shape != pbar.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {pbar.shape}")
    pos = pbar > 0
    total = 0.0
    if np.any(~pos):
        extra = p[~pos].sum()
        if extra > 0:
            total += extra * recession_slope(kind)
    if math.isinf(total):
        return math.inf
    ratio = p[pos] / pbar[pos]
    total += float(np.dot(pbar[pos], phi(kind, ratio)))
    return max(total, 0.0)


def dual_objective(kind, alpha: float, zeta: float, query: ProjectionQuery) -> float:
    """``-beta alpha + zeta - sum_s pbar_s phi*(-alpha b_s + zeta)``; ``-inf`` off the domain.

    Every evaluation lower-bounds the projection value. Entries with zero nominal
    mass contribute nothing, except that for Burg and variation their conjugate
    arguments must still lie in the domain (mass may move there at finite cost).
    """
    kind = DivergenceKind.parse(kind)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    y = zeta - alpha * query.cost
    conj = conjugate_array(kind, y)
    pos = query.nominal > 0
    if not kind.drops_zero_nominal and not np.all(np.isfinite(conj)):
        return -math.inf
    conj = conj[pos]
    if not np.all(np.isfinite(conj)):
        return -math.inf
    return float(-query.threshold * alpha + zeta - np.dot(query.nominal[pos], conj))
