"""Slow reference solvers used to sandwich the fast ones in tests.

* ``oracle_project_grid`` enumerates a simplex lattice: an upper bound.
* ``oracle_dual_scan`` evaluates the bivariate dual on grids: a lower bound.
* ``oracle_bellman`` combines both per action to bracket the robust update.

Nothing here imports the fast projection or Bellman code.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from .core import DivergenceKind, MdpInstance, ProjectionQuery
from .divergence import conjugate_array, phi, recession_slope

__all__ = [
    "MAX_GRID_STATES",
    "lattice",
    "grid_slack",
    "oracle_project_grid",
    "oracle_dual_scan",
    "best_zeta",
    "oracle_bellman",
]

MAX_GRID_STATES = 4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def lattice(S: int, N: int) -> Iterator[np.ndarray]:
    """Yield chunks of the points ``k / N`` of the simplex, ``k`` non-negative integers summing to ``N``."""
    if S == 1:
        yield np.ones((1, 1))
        return

    def compositions(parts, total):
        if parts == 1:
            return np.array([[total]])
        if parts == 2:
            k = np.arange(total + 1)
            return np.stack([k, total - k], axis=1)
        blocks = []
        for first in range(total + 1):
            rest = compositions(parts - 1, total - first)
            blocks.append(np.hstack([np.full((rest.shape[0], 1), first), rest]))
        return np.vstack(blocks)

    if S <= 3:
        yield compositions(S, N) / N
        return
    for first in range(N + 1):
        rest = compositions(S - 1, N - first)
        yield np.hstack([np.full((rest.shape[0], 1), first), rest]) / N


def _divergences(kind: DivergenceKind, P: np.ndarray, pbar: np.ndarray) -> np.ndarray:
    pos = pbar > 0
    with np.errstate(invalid="ignore"):
        out = (phi(kind, P[:, pos] / pbar[pos]) * pbar[pos]).sum(axis=1) if pos.any() else np.zeros(len(P))
    if not pos.all():
        off = P[:, ~pos].sum(axis=1)
        slope = recession_slope(kind)
        out = out + np.where(off > 0, off * slope if math.isfinite(slope) else np.inf, 0.0)
    return out


def _check_size(S):
    if S > MAX_GRID_STATES:
        raise ValueError(f"grid oracle supports at most {MAX_GRID_STATES} states, got {S}")


def oracle_project_grid(kind, query: ProjectionQuery, h: float = 1 / 400) -> float:
    """Smallest divergence over feasible lattice points; ``inf`` if none is feasible."""
    kind = DivergenceKind.parse(kind)
    S = query.size
    _check_size(S)
    N = max(1, int(round(1.0 / h)))
    best = math.inf
    tol = 1e-12 * max(1.0, float(np.abs(query.cost).max()))
    for P in lattice(S, N):
        ok = P @ query.cost <= query.threshold + tol
        if ok.any():
            best = min(best, float(_divergences(kind, P[ok], query.nominal).min()))
    return max(best, 0.0)


def grid_slack(kind, query: ProjectionQuery, h: float = 1 / 400) -> float:
    """Rough bound ``L h`` on how far the lattice optimum may sit above the true one.

    ``L`` bounds ``|phi'(p_s / pbar_s)|`` over lattice points away from the
    boundary, times the ``S`` coordinates moved by rounding.
    """
    kind = DivergenceKind.parse(kind)
    pos = query.nominal[query.nominal > 0]
    lo, hi = h / pos.max(), 1.0 / pos.min()
    if kind is DivergenceKind.KL:
        L = max(abs(math.log(lo)), math.log(hi))
    elif kind is DivergenceKind.BURG:
        L = max(1.0 / lo - 1.0, 1.0)
    elif kind is DivergenceKind.VARIATION:
        L = 1.0
    else:
        L = 2.0 * (hi + 1.0)
    return 2.0 * query.size * h * L


def _zeta_bracket(kind, alpha, b, pbar):
    pos = pbar > 0
    m_all, M_all = b.min(), b.max()
    m = b[pos].min() if kind.drops_zero_nominal else m_all
    M = b[pos].max() if kind.drops_zero_nominal else M_all
    lo = alpha * m - 2.0
    if kind in (DivergenceKind.BURG, DivergenceKind.VARIATION):
        # conjugate argument must stay <= 1 at every entry
        hi = np.minimum(alpha * M + 1.0, 1.0 + alpha * m_all)
        if kind is DivergenceKind.BURG:
            hi = hi - 1e-15 * np.maximum(1.0, np.abs(hi))
    else:
        hi = alpha * M + 1.0
    return lo, hi


def _inner(kind, alpha, zeta, b, pbar):
    """``zeta - sum pbar phi*(zeta - alpha b)`` for paired arrays of (alpha, zeta)."""
    y = zeta[:, None] - alpha[:, None] * b[None, :]
    conj = conjugate_array(kind, y)
    pos = pbar > 0
    bad = ~np.isfinite(conj[:, pos]).all(axis=1)
    if not kind.drops_zero_nominal:
        bad |= ~np.isfinite(conj).all(axis=1)
    with np.errstate(invalid="ignore"):
        val = zeta - conj[:, pos] @ pbar[pos]
    return np.where(bad, -np.inf, val)


def best_zeta(kind, alpha, b, pbar, iterations: int = 90):
    """For each ``alpha``, golden-section search of the concave ``zeta`` subproblem.

    Returns ``(zeta, g)`` with ``g = max_zeta zeta - sum pbar phi*(zeta - alpha b)``
    evaluated at the returned point, so each ``g - threshold * alpha`` is a valid
    lower bound.
    """
    kind = DivergenceKind.parse(kind)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    b = np.asarray(b, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    a, c = _zeta_bracket(kind, alpha, b, pbar)
    x1 = c - _GOLDEN * (c - a)
    x2 = a + _GOLDEN * (c - a)
    f1 = _inner(kind, alpha, x1, b, pbar)
    f2 = _inner(kind, alpha, x2, b, pbar)
    for _ in range(iterations):
        left = f1 >= f2
        c = np.where(left, x2, c)
        a = np.where(left, a, x1)
        span = c - a
        x_new = np.where(left, c - _GOLDEN * span, a + _GOLDEN * span)
        f_new = _inner(kind, alpha, x_new, b, pbar)
        x1, x2 = np.where(left, x_new, x2), np.where(left, x1, x_new)
        f1, f2 = np.where(left, f_new, f2), np.where(left, f1, f_new)
    zeta = np.where(f1 >= f2, x1, x2)
    return zeta, np.maximum(f1, f2)


def oracle_dual_scan(
    kind,
    query: ProjectionQuery,
    alphas: Optional[np.ndarray] = None,
    zetas: Optional[np.ndarray] = None,
    refine: int = 6,
) -> float:
    """Largest dual objective found; always a lower bound on the projection value.

    With both grids given this is a plain grid maximum. Without ``zetas`` the
    best ``zeta`` is searched per ``alpha``; without ``alphas`` a wide
    geometric grid is used and then zoomed around the best point.
    """
    kind = DivergenceKind.parse(kind)
    b, pbar, beta = query.cost, query.nominal, query.threshold
    if zetas is not None:
        al = np.atleast_1d(np.asarray(alphas if alphas is not None else [0.0], dtype=float))
        if np.any(al < 0):
            raise ValueError("alpha grid must be non-negative")
        ze = np.atleast_1d(np.asarray(zetas, dtype=float))
        A_, Z_ = np.meshgrid(al, ze, indexing="ij")
        vals = _inner(kind, A_.ravel(), Z_.ravel(), b, pbar) - beta * A_.ravel()
        return float(vals.max())

    explicit = alphas is not None
    if explicit:
        grid = np.atleast_1d(np.asarray(alphas, dtype=float))
    else:
        grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 481)])
    if np.any(grid < 0):
        raise ValueError("alpha grid must be non-negative")
    _, g = best_zeta(kind, grid, b, pbar)
    vals = g - beta * grid
    i = int(np.argmax(vals))
    best, best_a = float(vals[i]), float(grid[i])
    if explicit:
        return best
    step = max(best_a * 0.06, 1e-6)
    for _ in range(refine):
        grid = np.linspace(max(0.0, best_a - step), best_a + step, 41)
        _, g = best_zeta(kind, grid, b, pbar)
        vals = g - beta * grid
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_a = float(vals[i]), float(grid[i])
        step /= 10.0
    return best


def _reachable_min(kind, b, pbar):
    return b[pbar > 0].min() if kind.drops_zero_nominal else b.min()


class _ActionBounds:
    """Grid upper and dual lower bounds on one action's projection as functions of the threshold."""

    def __init__(self, kind, pbar, b, h, alphas):
        self.floor = _reachable_min(kind, b, pbar)
        N = max(1, int(round(1.0 / h)))
        costs, divs = [], []
        for P in lattice(len(b), N):
            costs.append(P @ b)
            divs.append(_divergences(kind, P, pbar))
        cost = np.concatenate(costs)
        div = np.concatenate(divs)
        order = np.argsort(cost, kind="stable")
        self.cost = cost[order]
        self.prefix = np.minimum.accumulate(div[order])
        self.alphas = alphas
        _, self.g = best_zeta(kind, alphas, b, pbar)

    def upper(self, theta: float) -> float:
        k = np.searchsorted(self.cost, theta + 1e-12, side="right")
        return math.inf if k == 0 else float(self.prefix[k - 1])

    def lower(self, theta: float) -> float:
        if theta < self.floor:
            return math.inf
        return max(0.0, float(np.max(self.g - theta * self.alphas)))


def oracle_bellman(
    instance: MdpInstance,
    v,
    s: int,
    resolution: float = 1e-3,
    h: float = 1 / 300,
) -> tuple[float, float]:
    """Bracket ``[lo, hi]`` on the robust update at state ``s``, to within ``resolution``.

    ``hi`` is the smallest grid threshold at which summed lattice divergences fit
    in the budget; ``lo`` the largest at which summed dual lower bounds exceed it.
    """
    S, A = instance.n_states, instance.n_actions
    if S > 3 or A > 3:
        raise ValueError("oracle_bellman supports at most 3 states and 3 actions")
    kind = instance.kind
    v = np.asarray(v, dtype=float)
    costs = instance.rewards[s] + instance.discount * v
    pbar = instance.nominal[s]
    nominal = float(np.max(np.einsum("ij,ij->i", pbar, costs)))
    if instance.kappa == 0:
        return nominal, nominal
    floor = max(_reachable_min(kind, costs[a], pbar[a]) for a in range(A))
    top = nominal
    alphas = np.concatenate([[0.0], np.geomspace(1e-5, 1e5, 2501)])
    acts = [_ActionBounds(kind, pbar[a], costs[a], h, alphas) for a in range(A)]
    kappa = instance.kappa

    n = max(1, int(math.ceil((top - floor) / resolution)))
    thetas = floor + (top - floor) * np.arange(n + 1) / n

    def feasible(i):
        return sum(act.upper(thetas[i]) for act in acts) <= kappa

    def infeasible(i):
        return sum(act.lower(thetas[i]) for act in acts) > kappa

    # smallest index certified feasible (top itself is always feasible)
    lo_i, hi_i = -1, n
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if feasible(mid):
            hi_i = mid
        else:
            lo_i = mid
    upper = float(thetas[hi_i]) if feasible(hi_i) else top
    # largest index certified infeasible
    lo_j, hi_j = 0, n + 1
    if not infeasible(0):
        lower = floor
    else:
        while hi_j - lo_j > 1:
            mid = (lo_j + hi_j) // 2
            if infeasible(mid):
                lo_j = mid
            else:
                hi_j = mid
        lower = float(thetas[lo_j])
    return lower, max(upper, lower)
