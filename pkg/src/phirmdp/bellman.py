"""Robust Bellman operator, value iteration and policy recovery.

For one state the robust update is the largest ``theta`` whose sublevel sets
``{p_a : b_a @ p_a <= theta}`` can all be reached within the shared budget, i.e.

    sum_a  min { d(p_a, nominal_a) : b_a @ p_a <= theta }  <=  kappa

with ``b_a = r_{s,a} + discount * v``. The left side is non-increasing in
``theta``, so ``theta`` is bisected and each step solves one projection per
action. States are independent; a block of states is bisected in lockstep so
every step is a single vectorized call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import MdpInstance
from .projections import INFEASIBLE, row_solver

__all__ = [
    "Termination",
    "BellmanOutcome",
    "VIReport",
    "PolicyEvaluation",
    "nominal_q",
    "nominal_bellman",
    "robust_bellman_state",
    "robust_bellman",
    "robust_value_iteration",
    "classical_value_iteration",
    "extract_policy",
    "evaluate_policy_robust",
    "inner_accuracy",
]

# rows x states held in memory at once by the block solver
_BLOCK_ENTRIES = 1_500_000


class Termination(str, enum.Enum):
    INTERVAL_CLOSED = "interval_closed"
    BUDGET_BRACKETED = "budget_bracketed"
    NOMINAL = "nominal"


_TERMS = (Termination.INTERVAL_CLOSED, Termination.BUDGET_BRACKETED, Termination.NOMINAL)


@dataclass(frozen=True)
class BellmanOutcome:
    """Result of the robust update at one state.

    ``lower``/``upper`` is the final bisection bracket on the value; ``duals``
    holds the per-action projection duals at the last threshold evaluated
    (``inf`` marks actions whose cost floor exceeds it). ``budget_lower`` and
    ``budget_upper`` are the summed projection bounds there.
    """

    value: float
    lower: float
    upper: float
    termination: Termination
    duals: np.ndarray
    iterations: int
    theta: float
    budget_lower: float
    budget_upper: float


@dataclass
class VIReport:
    values: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = True
    epsilon: float = 0.0


@dataclass
class PolicyEvaluation:
    """Worst-case value of a fixed policy.

    ``exact`` is False when the policy randomizes and the budget is positive;
    the values are then an upper approximation of the true worst case.
    """

    values: np.ndarray
    exact: bool
    iterations: int
    residual: float
    converged: bool


def inner_accuracy(instance: MdpInstance, epsilon: float) -> float:
    """Projection accuracy that keeps the outer bisection within ``epsilon``."""
    A = instance.n_actions
    return epsilon * instance.kappa / (2 * A * instance.r_bar + A * epsilon)


def nominal_q(instance: MdpInstance, v) -> np.ndarray:
    """``q[s, a] = nominal[s, a] @ (r[s, a] + discount * v)``."""
    v = np.asarray(v, dtype=float)
    return np.einsum("ijk,ijk->ij", instance.nominal, instance.rewards) + instance.discount * (instance.nominal @ v)


def nominal_bellman(instance: MdpInstance, v) -> np.ndarray:
    """Non-robust update ``max_a nominal[s, a] @ (r[s, a] + discount * v)``."""
    return nominal_q(instance, v).max(axis=1)


def _block(instance: MdpInstance, v, states, epsilon, keep=None):
    """Bisect ``theta`` for a block of states; returns a dict of per-state arrays."""
    S, A = instance.n_states, instance.n_actions
    n = len(states)
    kappa = instance.kappa
    pbar = instance.nominal[states]
    b = instance.rewards[states] + instance.discount * v
    if keep is not None:
        # a zero cost vector is trivially met at every theta >= 0 and spends no budget
        b = b * keep[states][:, :, None]
    q = np.einsum("ijk,ijk->ij", pbar, b)
    nominal = q.max(axis=1)

    out = {
        "value": nominal.copy(),
        "lower": nominal.copy(),
        "upper": nominal.copy(),
        "term": np.full(n, 2, dtype=np.int8),
        "duals": np.zeros((n, A)),
        "iterations": np.zeros(n, dtype=np.int64),
        "theta": nominal.copy(),
        "budget_lower": np.zeros(n),
        "budget_upper": np.zeros(n),
    }
    if kappa == 0:
        return out

    pbar = pbar.reshape(n * A, S)
    b = b.reshape(n * A, S)
    solver = row_solver(instance.kind, pbar, b)
    lo = solver.bmin.reshape(n, A).max(axis=1)
    hi = np.maximum(np.minimum(instance.r_bar, nominal), lo)
    delta = inner_accuracy(instance, epsilon)

    def decided(lower, upper):
        sl = lower.reshape(n, A).sum(axis=1)
        su = upper.reshape(n, A).sum(axis=1)
        return np.repeat((su <= kappa) | (sl > kappa), A)

    active = np.ones(n, dtype=bool)
    while True:
        closed = active & (hi - lo <= epsilon)
        if closed.any():
            out["value"][closed] = 0.5 * (lo[closed] + hi[closed])
            out["term"][closed] = 0
            active &= ~closed
        if not active.any():
            break
        theta = 0.5 * (lo + hi)
        res = solver.solve(np.repeat(np.where(active, theta, np.inf), A), delta, stop=decided)
        sl = res.lower.reshape(n, A).sum(axis=1)
        su = res.upper.reshape(n, A).sum(axis=1)
        alpha = np.where(res.status == INFEASIBLE, np.inf, res.alpha).reshape(n, A)

        out["iterations"][active] += 1
        out["theta"][active] = theta[active]
        out["duals"][active] = alpha[active]
        out["budget_lower"][active] = sl[active]
        out["budget_upper"][active] = su[active]

        bracket = active & (sl <= kappa) & (kappa < su)
        out["value"][bracket] = theta[bracket]
        out["term"][bracket] = 1
        active &= ~bracket
        shrink = active & (su <= kappa)
        grow = active & (sl > kappa)
        hi[shrink] = theta[shrink]
        lo[grow] = theta[grow]
    out["lower"], out["upper"] = lo, hi
    return out


def _sweep(instance, v, epsilon, keep=None):
    """Run the block solver over all states; returns the concatenated dict."""
    S, A = instance.n_states, instance.n_actions
    per = max(1, _BLOCK_ENTRIES // max(1, A * S))
    parts = [_block(instance, v, np.arange(i, min(S, i + per)), epsilon, keep) for i in range(0, S, per)]
    if len(parts) == 1:
        return parts[0]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _check(instance, v, epsilon):
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape != (instance.n_states,):
        raise ValueError(f"value vector has shape {v.shape}, expected ({instance.n_states},)")
    return v


def _outcome(out, i) -> BellmanOutcome:
    return BellmanOutcome(
        value=float(out["value"][i]),
        lower=float(out["lower"][i]),
        upper=float(out["upper"][i]),
        termination=_TERMS[int(out["term"][i])],
        duals=out["duals"][i].copy(),
        iterations=int(out["iterations"][i]),
        theta=float(out["theta"][i]),
        budget_lower=float(out["budget_lower"][i]),
        budget_upper=float(out["budget_upper"][i]),
    )


def robust_bellman_state(instance: MdpInstance, v, s: int, epsilon: float) -> BellmanOutcome:
    """Robust update at state ``s``, accurate to ``epsilon`` for ``0 <= v <= r_bar``."""
    v = _check(instance, v, epsilon)
    if not 0 <= s < instance.n_states:
        raise IndexError(f"state {s} out of range")
    return _outcome(_block(instance, v, np.array([s]), epsilon), 0)


def robust_bellman(instance: MdpInstance, v, epsilon: float) -> tuple[np.ndarray, list[BellmanOutcome]]:
    """Robust update at every state; each component is within ``epsilon``."""
    v = _check(instance, v, epsilon)
    out = _sweep(instance, v, epsilon)
    return out["value"].copy(), [_outcome(out, i) for i in range(instance.n_states)]


def _iterate(step, instance, epsilon, max_iters):
    lam = instance.discount
    v = np.zeros(instance.n_states)
    target = epsilon * (1 - lam) / (2 * lam)
    history = []
    for t in range(1, max_iters + 1):
        new = np.clip(step(v), 0.0, instance.r_bar)
        residual = float(np.max(np.abs(new - v))) if v.size else 0.0
        history.append(residual)
        v = new
        if residual <= target:
            return v, history, t, True
    return v, history, max_iters, False


def robust_value_iteration(instance: MdpInstance, epsilon: float, max_iters: int = 10_000) -> VIReport:
    """Iterate the robust update from zero until ``v`` is within ``epsilon`` of the fixed point.

    Each sweep is solved to ``epsilon (1 - discount) / 4`` and iteration stops
    once successive iterates differ by at most ``epsilon (1 - discount) / (2 discount)``.
    Iterates are clamped to ``[0, r_bar]``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    eps_b = epsilon * (1 - instance.discount) / 4
    v, history, t, ok = _iterate(lambda u: _sweep(instance, u, eps_b)["value"], instance, epsilon, max_iters)
    return VIReport(v, history[-1] if history else 0.0, t, history, ok, epsilon)


def classical_value_iteration(instance: MdpInstance, epsilon: float, max_iters: int = 10_000) -> VIReport:
    """Plain value iteration on the nominal kernel, same stopping rule as the robust version."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    v, history, t, ok = _iterate(lambda u: nominal_bellman(instance, u), instance, epsilon, max_iters)
    return VIReport(v, history[-1] if history else 0.0, t, history, ok, epsilon)


def _policy_from_duals(duals: np.ndarray, q: np.ndarray) -> np.ndarray:
    S, A = duals.shape
    pi = np.zeros((S, A))
    d = np.nan_to_num(duals, nan=0.0, posinf=np.inf)
    for s in range(S):
        row = d[s]
        inf = np.isinf(row)
        if inf.any():
            pi[s, inf] = 1.0 / inf.sum()
        elif row.sum() > 0:
            pi[s] = row / row.sum()
        else:
            pi[s, int(np.argmax(q[s]))] = 1.0
    return pi


def extract_policy(instance: MdpInstance, v, epsilon: float) -> np.ndarray:
    """Randomized policy with weights proportional to the projection duals at the robust value.

    Actions whose cheapest outcome already beats the value get all the mass; if
    every dual vanishes the greedy nominal action is used.
    """
    v = _check(instance, v, epsilon)
    q = nominal_q(instance, v)
    if instance.kappa == 0 or instance.n_actions == 1:
        pi = np.zeros_like(q)
        pi[np.arange(instance.n_states), np.argmax(q, axis=1)] = 1.0
        return pi
    theta = _sweep(instance, v, epsilon)["value"]
    S, A = instance.n_states, instance.n_actions
    b = (instance.rewards + instance.discount * v).reshape(S * A, S)
    solver = row_solver(instance.kind, instance.nominal.reshape(S * A, S), b)
    res = solver.solve(np.repeat(theta, A), inner_accuracy(instance, epsilon))
    duals = np.where(res.status == INFEASIBLE, np.inf, res.alpha).reshape(S, A)
    return _policy_from_duals(duals, q)


def evaluate_policy_robust(
    instance: MdpInstance, policy, epsilon: float, max_iters: int = 10_000
) -> PolicyEvaluation:
    """Worst-case value of ``policy``, exact when it is deterministic or the budget is zero.

    Iterates ``min(nominal value of the policy mix, robust update restricted to
    the policy's support)``. Both are upper bounds on the fixed-policy worst
    case and both coincide with it in the exact cases; otherwise the result is
    an upper approximation.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    pi = np.asarray(policy, dtype=float)
    S, A = instance.n_states, instance.n_actions
    if pi.shape != (S, A):
        raise ValueError(f"policy has shape {pi.shape}, expected ({S}, {A})")
    if np.any(pi < -1e-12) or np.any(np.abs(pi.sum(axis=1) - 1) > 1e-9):
        raise ValueError("policy rows must lie in the simplex")
    keep = pi > 0
    deterministic = bool(np.all(keep.sum(axis=1) == 1))
    exact = instance.kappa == 0 or deterministic
    eps_b = epsilon * (1 - instance.discount) / 4

    def step(u):
        mixed = np.einsum("ij,ij->i", pi, nominal_q(instance, u))
        if instance.kappa == 0:
            return mixed
        return np.minimum(mixed, _sweep(instance, u, eps_b, keep)["value"])

    v, history, t, ok = _iterate(step, instance, epsilon, max_iters)
    return PolicyEvaluation(v, exact, t, history[-1] if history else 0.0, ok)

