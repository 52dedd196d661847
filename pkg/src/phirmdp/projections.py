"""Fast solvers for the generalized projection

    minimize d(p, nominal)  subject to  cost @ p <= threshold,  p in the simplex.

Each solver works on a batch of rows (one projection per row) so the Bellman
operator can push all actions of a state, or several states, through a single
vectorized call. The single-query functions are thin wrappers around a batch of
one.

KL and Burg return a certified interval of width at most ``delta`` from a
bisection on the dual variable; variation and chi-square are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    BisectionTrace,
    DivergenceKind,
    ProjectionQuery,
    ProjectionResult,
    Status,
)

__all__ = [
    "InfeasibleMarginError",
    "RowResults",
    "row_solver",
    "project",
    "project_kl",
    "project_burg",
    "project_variation",
    "project_chi2",
    "iteration_bound",
    "OMEGA_FLOOR",
]

# Below this margin between threshold and min cost the bisections are skipped
# and the limiting value is reported.
OMEGA_FLOOR = 1e-12

SOLVED, TRIVIAL, INFEASIBLE = 0, 1, 2
_STATUS = {SOLVED: Status.SOLVED, TRIVIAL: Status.TRIVIAL, INFEASIBLE: Status.INFEASIBLE}

StopRule = Callable[[np.ndarray, np.ndarray], np.ndarray]


class InfeasibleMarginError(ValueError):
    """The threshold lies below the smallest reachable cost."""


@dataclass
class RowResults:
    lower: np.ndarray
    upper: np.ndarray
    alpha: np.ndarray
    zeta: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    alpha_lower: np.ndarray
    alpha_upper: np.ndarray
    width0: np.ndarray

    @classmethod
    def empty(cls, n):
        nan = lambda: np.full(n, np.nan)  # noqa: E731
        return cls(
            lower=np.zeros(n),
            upper=np.zeros(n),
            alpha=nan(),
            zeta=nan(),
            status=np.full(n, SOLVED, dtype=np.int8),
            iterations=np.zeros(n, dtype=np.int64),
            alpha_lower=nan(),
            alpha_upper=nan(),
            width0=nan(),
        )

    def result(self, i: int, bisection: bool) -> ProjectionResult:
        status = _STATUS[int(self.status[i])]
        alpha = None if status is Status.INFEASIBLE else float(self.alpha[i])
        zeta = None if status is Status.INFEASIBLE or np.isnan(self.zeta[i]) else float(self.zeta[i])
        trace = None
        if bisection and status is Status.SOLVED and not np.isnan(self.width0[i]):
            trace = BisectionTrace(
                iterations=int(self.iterations[i]),
                alpha_lower=float(self.alpha_lower[i]),
                alpha_upper=float(self.alpha_upper[i]),
                initial_width=float(self.width0[i]),
            )
        return ProjectionResult(float(self.lower[i]), float(self.upper[i]), status, alpha, zeta, trace)


class _Rows:
    """Shared preprocessing: bounds on the cost and the trivial / infeasible split."""

    bisection = False

    def __init__(self, kind: DivergenceKind, pbar, b):
        self.kind = kind
        self.p = np.atleast_2d(np.asarray(pbar, dtype=float))
        self.b = np.atleast_2d(np.asarray(b, dtype=float))
        if self.p.shape != self.b.shape:
            raise ValueError(f"nominal shape {self.p.shape} does not match cost shape {self.b.shape}")
        self.n = self.p.shape[0]
        self.support = self.p > 0
        if kind.drops_zero_nominal:
            # mass cannot move to entries the nominal never visits
            self.bmin = np.where(self.support, self.b, np.inf).min(axis=1)
            self.bmax = np.where(self.support, self.b, -np.inf).max(axis=1)
        else:
            self.bmin = self.b.min(axis=1)
            self.bmax = self.b.max(axis=1)
        self.mean = np.einsum("ij,ij->i", self.p, self.b)

    def solve(
        self, beta, delta: float = 1e-6, stop: Optional[StopRule] = None, with_zeta: bool = True
    ) -> RowResults:
        """Solve every row at threshold ``beta`` (scalar or per row).

        ``stop(lower, upper)`` may return a boolean mask of rows whose current
        bounds already suffice; bisection stops for those. ``with_zeta=False``
        skips the extra pass that recovers the optimal ``zeta``.
        """
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (self.n,)).copy()
        res = RowResults.empty(self.n)
        trivial = beta >= self.mean
        infeasible = ~trivial & (beta < self.bmin)
        res.status[trivial] = TRIVIAL
        res.alpha[trivial] = 0.0
        res.zeta[trivial] = 0.0
        res.status[infeasible] = INFEASIBLE
        res.lower[infeasible] = np.inf
        res.upper[infeasible] = np.inf
        rows = np.flatnonzero(~trivial & ~infeasible)
        if rows.size:
            self._solve(rows, beta, float(delta), res, stop, with_zeta)
        return res

    def _solve(self, rows, beta, delta, res, stop, with_zeta):
        raise NotImplementedError


class _BisectionRows(_Rows):
    """Bisection on the derivative of a concave univariate dual.

    Subclasses provide ``_setup`` (initial bracket and termination width) and
    ``_eval`` (objective and derivative at a batch of points).
    """

    bisection = True

    def _solve(self, rows, beta, delta, res, stop, with_zeta):
        rows, ctx = self._setup(rows, beta, delta, res)
        if rows.size == 0:
            return
        lo = np.zeros(rows.size)
        hi = ctx.pop("hi")
        tol = ctx.pop("tol")
        flo = np.zeros(rows.size)
        dflo = ctx.pop("d0")
        iters = np.zeros(rows.size, dtype=np.int64)
        res.width0[rows] = hi - lo

        if rows.size == 1 and stop is None:
            self._scalar(rows, lo, hi, tol, flo, dflo, iters, ctx)
            self._store(rows, lo, hi, flo, dflo, iters, beta, ctx, res, with_zeta)
            return
        if stop is not None:
            res.lower[rows] = flo
            res.upper[rows] = dflo * (hi - lo)
        # rows still bisecting live in ``loc``; the local copies are only
        # compacted once enough rows have finished to pay for the copy
        loc = np.flatnonzero(hi - lo > tol)
        local = {k: v[loc] for k, v in ctx.items()}
        live = np.ones(loc.size, dtype=bool)
        while loc.size:
            f_all, g_all = self._eval(0.5 * (lo[loc] + hi[loc]), local)
            act = loc[live]
            mid = 0.5 * (lo[act] + hi[act])
            f_mid, g_mid = f_all[live], g_all[live]
            iters[act] += 1
            up = g_mid > 0
            down = g_mid < 0
            flat = ~(up | down)
            moved = up | flat
            lo[act[moved]] = mid[moved]
            flo[act[moved]] = f_mid[moved]
            dflo[act[moved]] = np.where(flat[moved], 0.0, g_mid[moved])
            hi[act[down | flat]] = mid[down | flat]

            keep = hi[act] - lo[act] > tol[act]
            if stop is not None:
                res.lower[rows[act]] = flo[act]
                res.upper[rows[act]] = flo[act] + dflo[act] * (hi[act] - lo[act])
                keep &= ~stop(res.lower, res.upper)[rows[act]]
            if not keep.all():
                live[np.flatnonzero(live)[~keep]] = False
                n_live = int(live.sum())
                if n_live == 0:
                    break
                if n_live < 0.6 * loc.size:
                    loc = loc[live]
                    local = {k: v[live] for k, v in local.items()}
                    live = np.ones(loc.size, dtype=bool)

        self._store(rows, lo, hi, flo, dflo, iters, beta, ctx, res, with_zeta)

    def _scalar(self, rows, lo, hi, tol, flo, dflo, iters, ctx):
        # one query: same steps as the batched loop without the index bookkeeping
        a, b, t = float(lo[0]), float(hi[0]), float(tol[0])
        fa, da, n = float(flo[0]), float(dflo[0]), 0
        one = {k: v[0] for k, v in ctx.items()}
        while b - a > t:
            mid = 0.5 * (a + b)
            f, g = self._eval1(mid, one)
            n += 1
            if g >= 0:
                a, fa, da = mid, f, g
            if g <= 0:
                b = mid
        lo[0], hi[0], flo[0], dflo[0], iters[0] = a, b, fa, da, n

    def _store(self, rows, lo, hi, flo, dflo, iters, beta, ctx, res, with_zeta):
        res.lower[rows] = flo
        # concavity: f(a*) <= f(lo) + f'(lo) (a* - lo), and f'(lo) >= 0
        res.upper[rows] = flo + dflo * (hi - lo)
        res.iterations[rows] = iters
        res.alpha_lower[rows] = lo
        res.alpha_upper[rows] = hi
        self._finish(rows, 0.5 * (lo + hi), beta, ctx, res, with_zeta)


class KLRows(_BisectionRows):
    """KL: maximize ``-beta a - log sum pbar exp(-a b)`` over ``a >= 0``."""

    def __init__(self, pbar, b):
        super().__init__(DivergenceKind.KL, pbar, b)
        shift = np.where(self.support, self.b - self.bmin[:, None], 0.0)
        self.shift = np.where(np.isfinite(shift), shift, 0.0)
        self.pmin = np.where(self.support, self.p, np.inf).min(axis=1)
        at_min = self.support & (self.b == self.bmin[:, None])
        with np.errstate(divide="ignore"):
            self.limit = -np.log(np.where(at_min, self.p, 0.0).sum(axis=1))

    def _setup(self, rows, beta, delta, res):
        omega = beta[rows] - self.bmin[rows]
        edge = omega < OMEGA_FLOOR
        if edge.any():
            # all mass must sit on the cheapest entries
            e = rows[edge]
            res.lower[e] = res.upper[e] = self.limit[e]
            res.alpha[e] = np.inf
            rows, omega = rows[~edge], omega[~edge]
        ctx = {
            "hi": np.log(1.0 / self.pmin[rows]) / omega,
            "tol": delta / self.bmax[rows],
            "d0": self.mean[rows] - beta[rows],
            "p": self.p[rows],
            "s": self.shift[rows],
            "omega": omega,
        }
        return rows, ctx

    @staticmethod
    def _eval(a, c):
        # stabilized: f(a) = -a (beta - bmin) - log sum pbar exp(-a (b - bmin))
        w = c["p"] * np.exp(-a[:, None] * c["s"])
        sw = w.sum(axis=1)
        f = -a * c["omega"] - np.log(sw)
        g = np.einsum("ij,ij->i", w, c["s"]) / sw - c["omega"]
        return f, g

    @staticmethod
    def _eval1(a, c):
        w = c["p"] * np.exp(-a * c["s"])
        sw = float(w.sum())
        return -a * c["omega"] - math.log(sw), float(w @ c["s"]) / sw - c["omega"]

    def _finish(self, rows, alpha, beta, ctx, res, with_zeta):
        res.alpha[rows] = alpha
        if not with_zeta:
            return
        w = self.p[rows] * np.exp(-alpha[:, None] * self.shift[rows])
        res.zeta[rows] = alpha * self.bmin[rows] - np.log(w.sum(axis=1))


class BurgRows(_BisectionRows):
    """Burg: maximize ``sum pbar log(1 + a (b - beta) / (beta - min b))`` over ``a in [0, 1]``."""

    def __init__(self, pbar, b):
        super().__init__(DivergenceKind.BURG, pbar, b)

    def _setup(self, rows, beta, delta, res):
        omega = beta[rows] - self.bmin[rows]
        edge = omega < OMEGA_FLOOR
        if edge.any():
            # support may not shrink under Burg, so the budget is unbounded
            e = rows[edge]
            res.status[e] = INFEASIBLE
            res.lower[e] = res.upper[e] = np.inf
            rows, omega = rows[~edge], omega[~edge]
        ctx = {
            "hi": np.ones(rows.size),
            "tol": delta * omega / self.bmax[rows],
            "d0": (self.mean[rows] - beta[rows]) / omega,
            "p": self.p[rows],
            "c": (self.b[rows] - beta[rows, None]) / omega[:, None],
            "omega": omega,
        }
        return rows, ctx

    @staticmethod
    def _eval(a, c):
        q = 1.0 + a[:, None] * c["c"]
        f = np.einsum("ij,ij->i", c["p"], np.log(q))
        g = np.einsum("ij,ij->i", c["p"], c["c"] / q)
        return f, g

    @staticmethod
    def _eval1(a, c):
        q = 1.0 + a * c["c"]
        return float(c["p"] @ np.log(q)), float(c["p"] @ (c["c"] / q))

    def _finish(self, rows, alpha, beta, ctx, res, with_zeta):
        # undo the rescaling a <- (beta - min b) a; the optimal zeta is a * beta
        omega = ctx["omega"]
        a = alpha / omega
        res.alpha[rows] = a
        res.zeta[rows] = a * beta[rows]
        res.alpha_lower[rows] /= omega
        res.alpha_upper[rows] /= omega
        res.width0[rows] /= omega


class VariationRows(_Rows):
    """Variation distance, solved exactly over the sorted breakpoints ``2 / (b_s - min b)``.

    The dual ``h(a) = 2 + a (min b - beta) - sum pbar [2 + a (min b - b)]_+`` is
    concave and piecewise linear, so its maximum sits at ``0`` or a breakpoint.
    After one sort, suffix sums give every breakpoint value in O(1), and those
    sums do not depend on ``beta``.
    """

    def __init__(self, pbar, b):
        super().__init__(DivergenceKind.VARIATION, pbar, b)
        d = self.b - self.bmin[:, None]
        order = np.argsort(-d, axis=1, kind="stable")
        ds = np.take_along_axis(d, order, axis=1)
        ps = np.take_along_axis(self.p, order, axis=1)
        # entries after position k are exactly those still active at a = 2 / d_k;
        # tied entries contribute [2 - a d_k]_+ = 0 either way
        head = np.cumsum(ps, axis=1)
        tail_d = np.cumsum((ps * ds)[:, ::-1], axis=1)[:, ::-1] - ps * ds
        with np.errstate(divide="ignore"):
            self.alphas = np.where(ds > 0, 2.0 / np.where(ds > 0, ds, 1.0), np.nan)
        self.base = 2.0 * head
        self.tail_d = tail_d

    def values(self, beta):
        """Dual objective at every breakpoint, shape ``(n, S)``; NaN where no breakpoint."""
        omega = np.asarray(beta, dtype=float).reshape(-1, 1) - self.bmin[:, None]
        return self.base + self.alphas * (self.tail_d - omega)

    def _solve(self, rows, beta, delta, res, stop, with_zeta):
        omega = beta[rows] - self.bmin[rows]
        h = self.base[rows] + self.alphas[rows] * (self.tail_d[rows] - omega[:, None])
        h = np.where(np.isnan(h), -np.inf, h)
        k = np.argmax(h, axis=1)
        best = h[np.arange(rows.size), k]
        a = self.alphas[rows, k]
        zero = ~(best > 0)
        best = np.where(zero, 0.0, best)
        a = np.where(zero, 0.0, a)
        res.lower[rows] = res.upper[rows] = best
        res.alpha[rows] = a
        if with_zeta:
            res.zeta[rows] = self._zeta(rows, a)

    def _zeta(self, rows, a):
        # 1 + a min b, stepped down until zeta - a b <= 1 survives rounding everywhere
        zeta = 1.0 + a * self.bmin[rows]
        for _ in range(8):
            over = (zeta[:, None] - a[:, None] * self.b[rows]).max(axis=1) > 1.0
            if not over.any():
                break
            zeta[over] = np.nextafter(zeta[over], -np.inf)
        return zeta


class Chi2Rows(_Rows):
    """Chi-square distance, solved exactly by splitting on the sorted costs.

    At the optimum ``p_s = pbar_s [u - a b_s]_+ / 2`` for multipliers ``(u, a)``
    (``u = zeta + 2``), so the mass sits on the cheapest entries. With ``b``
    sorted in non-increasing order, split ``k`` clips the first ``k`` entries;
    on the tail, ``sum p = 1`` and ``b @ p = beta`` give ``(u, a)`` in closed
    form, and the split whose multipliers reproduce its own clipping pattern is
    optimal. Rows where rounding leaves no consistent split fall back to
    maximizing the dual over the three pieces of every split (``u`` interior,
    or clipped at either neighbouring cost).
    """

    def __init__(self, pbar, b):
        super().__init__(DivergenceKind.CHI2, pbar, b)
        n, S = self.p.shape
        # costs relative to the cheapest support entry; entries the nominal never
        # visits cannot carry mass, so park them with the most expensive ones
        span = (self.bmax - self.bmin)[:, None]
        shifted = np.where(self.support, self.b - self.bmin[:, None], span)
        order = np.argsort(-shifted, axis=1, kind="stable")
        self.bs = np.take_along_axis(shifted, order, axis=1)
        self.ps = np.take_along_axis(self.p, order, axis=1)

        def suffix(x):
            out = np.zeros((n, S + 1))
            out[:, :S] = np.cumsum(x[:, ::-1], axis=1)[:, ::-1]
            return out

        self.P = suffix(self.ps)
        self.B = suffix(self.ps * self.bs)
        self.C = suffix(self.ps * self.bs * self.bs)
        P, B, C = self.P[:, :S], self.B[:, :S], self.C[:, :S]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.tail_mean = np.where(P > 0, B / np.where(P > 0, P, 1.0), np.nan)
            self.tail_var = np.maximum(C - B * self.tail_mean, 0.0)
            self.inv_p = np.where(P > 0, 1.0 / P, np.nan)
        self.prev = np.empty((n, S))
        self.prev[:, 0] = np.inf
        self.prev[:, 1:] = self.bs[:, :-1]

    def _solve(self, rows, beta, delta, res, stop, with_zeta):
        omega = (beta[rows] - self.bmin[rows])[:, None]
        mean, var, inv_p = self.tail_mean[rows], self.tail_var[rows], self.inv_p[rows]
        top, prev = self.bs[rows], self.prev[rows]
        gap = mean - omega
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            flat = var <= 1e-14 * (1.0 + mean * mean)
            alpha = np.where(flat, 2.0 * inv_p / (prev - omega), 2.0 * gap / var)
            u = 2.0 * inv_p + alpha * mean
            tol = 1e-9 * (1.0 + np.abs(u))
            ok = (
                (gap >= 0)
                & np.where(flat, np.abs(gap) <= 1e-12 * (1.0 + omega), True)
                & (u - alpha * top >= -tol)
                & (u - alpha * prev <= tol)
                & np.isfinite(alpha)
            )
            value = np.where(ok, inv_p - 1.0 + np.where(flat, 0.0, gap * gap / var), -np.inf)
        k = np.argmax(value, axis=1)
        idx = np.arange(rows.size)
        best = value[idx, k]
        a_best = alpha[idx, k]
        u_best = u[idx, k]
        miss = ~np.isfinite(best)
        if miss.any():
            best[miss], a_best[miss], u_best[miss] = self._three_piece(rows[miss], omega[miss, 0])
        res.lower[rows] = res.upper[rows] = np.maximum(best, 0.0)
        res.alpha[rows] = a_best
        res.zeta[rows] = u_best - 2.0 + a_best * self.bmin[rows]

    def _three_piece(self, rows, omega):
        """Dual maximum over every split and piece; slower but needs no consistency test."""
        n, S = rows.size, self.bs.shape[1]
        P, B, C = self.P[rows], self.B[rows], self.C[rows]
        b_hi = np.full((n, S + 1), np.nan)
        b_hi[:, 1:] = self.bs[rows]
        b_lo = np.full((n, S + 1), np.nan)
        b_lo[:, :S] = self.bs[rows]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            d_up = np.maximum(P * b_hi - B, 0.0)
            d_lo = np.maximum(P * b_lo - B, 0.0)
            r_up = np.where(d_up > 0, 2.0 / d_up, np.inf)
            r_lo = np.where(d_lo > 0, 2.0 / d_lo, np.inf)
            Ps = np.where(P > 0, P, 1.0)
            zero, inf = np.zeros_like(P), np.full_like(P, np.inf)

            def clipped(bk):
                c2 = -0.25 * np.maximum(P * bk * bk - 2.0 * B * bk + C, 0.0)
                return c2, bk, np.full_like(P, -1.0), zero, bk

            # (c2, c1 + beta, c0, u0, u1, lowest a, highest a, usable)
            pieces = [
                (*clipped(b_hi), zero, r_up, ~np.isnan(b_hi)),
                (-0.25 * np.maximum(C - B * B / Ps, 0.0), B / Ps, 1.0 / Ps - 1.0, 2.0 / Ps, B / Ps,
                 np.where(np.isnan(b_hi), 0.0, r_up), r_lo, P > 0),
                (*clipped(b_lo), r_lo, inf, ~np.isnan(b_lo) & np.isfinite(r_lo)),
            ]
            best = np.full(n, -np.inf)
            a_best = np.zeros(n)
            u_best = np.zeros(n)
            for c2, e1, c0, u0, u1, lo, hi, usable in pieces:
                c1 = e1 - omega[:, None]
                stationary = -c1 / (2.0 * np.where(c2 < 0, c2, -1.0))
                a = np.where(c2 < 0, np.clip(stationary, lo, hi), np.where((c1 > 0) & np.isfinite(hi), hi, lo))
                val = (c2 * a + c1) * a + c0
                val = np.where(usable & (lo <= hi) & np.isfinite(a) & np.isfinite(val), val, -np.inf)
                k = np.argmax(val, axis=1)
                idx = np.arange(n)
                better = val[idx, k] > best
                best = np.where(better, val[idx, k], best)
                a_best = np.where(better, a[idx, k], a_best)
                u_best = np.where(better, u0[idx, k] + u1[idx, k] * a[idx, k], u_best)
        return best, a_best, u_best


_ROWS = {
    DivergenceKind.KL: KLRows,
    DivergenceKind.BURG: BurgRows,
    DivergenceKind.VARIATION: VariationRows,
    DivergenceKind.CHI2: Chi2Rows,
}


def row_solver(kind, pbar, b) -> _Rows:
    """Prepare a batch of projections sharing ``kind``; rows of ``pbar``/``b`` are queries.

    The returned object's ``solve(beta, delta, stop=None)`` may be called
    repeatedly with different thresholds; sorting and other threshold-free work
    is done once here.
    """
    return _ROWS[DivergenceKind.parse(kind)](pbar, b)


def project(kind, query: ProjectionQuery) -> ProjectionResult:
    """Solve one projection, handling the trivial and infeasible cases first."""
    kind = DivergenceKind.parse(kind)
    query.check()
    solver = row_solver(kind, query.nominal[None, :], query.cost[None, :])
    return solver.solve(query.threshold, query.delta).result(0, solver.bisection)


def _project_checked(kind, query):
    kind = DivergenceKind.parse(kind)
    query.check()
    solver = row_solver(kind, query.nominal[None, :], query.cost[None, :])
    if query.threshold < solver.bmin[0]:
        raise InfeasibleMarginError(
            f"threshold {query.threshold!r} is below the smallest reachable cost {solver.bmin[0]!r}"
        )
    return solver.solve(query.threshold, query.delta).result(0, solver.bisection)


def project_kl(query: ProjectionQuery) -> ProjectionResult:
    """KL projection to ``query.delta`` accuracy by bisection on the dual."""
    return _project_checked(DivergenceKind.KL, query)


def project_burg(query: ProjectionQuery) -> ProjectionResult:
    """Burg projection to ``query.delta`` accuracy by bisection on the rescaled dual."""
    return _project_checked(DivergenceKind.BURG, query)


def project_variation(query: ProjectionQuery) -> ProjectionResult:
    """Exact variation-distance projection."""
    return _project_checked(DivergenceKind.VARIATION, query)


def project_chi2(query: ProjectionQuery) -> ProjectionResult:
    """Exact chi-square projection."""
    return _project_checked(DivergenceKind.CHI2, query)


def iteration_bound(kind, query: ProjectionQuery) -> int:
    """Worst-case bisection count ``ceil(log2(w0 max b / (delta min(omega, 1)))) + 2``."""
    kind = DivergenceKind.parse(kind)
    solver = row_solver(kind, query.nominal[None, :], query.cost[None, :])
    omega = query.threshold - solver.bmin[0]
    if kind is DivergenceKind.KL:
        w0 = math.log(1.0 / solver.pmin[0]) / omega
    elif kind is DivergenceKind.BURG:
        w0 = 1.0
    else:
        return 0
    ratio = w0 * solver.bmax[0] / (query.delta * min(omega, 1.0))
    return max(0, math.ceil(math.log2(ratio))) + 2
