"""Domain types, validation and the JSON instance format."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ROW_SUM_TOL = 1e-12


class DivergenceKind(str, enum.Enum):
    KL = "kl"
    BURG = "burg"
    VARIATION = "variation"
    CHI2 = "chi2"

    @classmethod
    def parse(cls, value) -> "DivergenceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown divergence {value!r} (expected one of {names})") from None

    @property
    def drops_zero_nominal(self) -> bool:
        """Whether entries with zero nominal mass are forced to zero mass."""
        return self in (DivergenceKind.KL, DivergenceKind.CHI2)


class InstanceError(ValueError):
    """Raised when an instance document cannot be parsed or fails validation."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MdpInstance:
    """An s-rectangular robust MDP with a phi-divergence budget.

    ``rewards`` and ``nominal`` are indexed ``(s, a, s')``. Construction does not
    validate; call :func:`validate` or load through :func:`read_instance`.
    """

    rewards: np.ndarray
    nominal: np.ndarray
    discount: float
    kappa: float
    kind: DivergenceKind
    initial_dist: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        object.__setattr__(self, "nominal", _frozen(self.nominal))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "kind", DivergenceKind.parse(self.kind))
        if self.initial_dist is not None:
            object.__setattr__(self, "initial_dist", _frozen(self.initial_dist))

    @property
    def n_states(self) -> int:
        return int(self.nominal.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.nominal.shape[1])

    @property
    def r_bar(self) -> float:
        """Upper bound ``max r / (1 - discount)`` on every Bellman value."""
        if self.rewards.size == 0:
            return 0.0
        return float(self.rewards.max()) / (1.0 - self.discount)

    def replace(self, **changes) -> "MdpInstance":
        fields = dict(
            rewards=self.rewards,
            nominal=self.nominal,
            discount=self.discount,
            kappa=self.kappa,
            kind=self.kind,
            initial_dist=self.initial_dist,
        )
        fields.update(changes)
        return MdpInstance(**fields)


@dataclass(frozen=True)
class ProjectionQuery:
    """Inputs of the generalized projection ``min d(p, nominal) s.t. cost @ p <= threshold``."""

    nominal: np.ndarray
    cost: np.ndarray
    threshold: float
    delta: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "nominal", _frozen(np.ravel(self.nominal)))
        object.__setattr__(self, "cost", _frozen(np.ravel(self.cost)))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def size(self) -> int:
        return int(self.nominal.shape[0])

    def violations(self) -> list[str]:
        out = []
        p, b = self.nominal, self.cost
        if p.ndim != 1 or b.shape != p.shape:
            out.append(f"cost: shape {b.shape} does not match nominal shape {p.shape}")
            return out
        if p.size == 0:
            out.append("nominal: empty vector")
            return out
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            out.append("nominal: entries must be finite and non-negative")
        elif abs(p.sum() - 1.0) > ROW_SUM_TOL * max(1, p.size):
            out.append(f"nominal: sums to {p.sum()!r}, not 1")
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            out.append("cost: entries must be finite and non-negative")
        if not math.isfinite(self.threshold) or self.threshold < 0:
            out.append(f"threshold: {self.threshold!r} must be finite and non-negative")
        if not self.delta > 0:
            out.append(f"delta: {self.delta!r} must be positive")
        return out

    def check(self) -> None:
        problems = self.violations()
        if problems:
            raise ValueError("invalid projection query: " + "; ".join(problems))


class Status(str, enum.Enum):
    SOLVED = "solved"
    TRIVIAL = "trivial"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BisectionTrace:
    """Final state of a bisection on the dual variable."""

    iterations: int
    alpha_lower: float
    alpha_upper: float
    initial_width: float


@dataclass(frozen=True)
class ProjectionResult:
    """Certified value interval ``[lower, upper]`` for a projection, plus its dual."""

    lower: float
    upper: float
    status: Status
    alpha: Optional[float] = None
    zeta: Optional[float] = None
    trace: Optional[BisectionTrace] = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def value(self) -> float:
        if self.lower == self.upper:
            return self.lower
        return 0.5 * (self.lower + self.upper)

    @property
    def iterations(self) -> int:
        return self.trace.iterations if self.trace is not None else 0

    def to_dict(self) -> dict:
        d = {
            "status": self.status.value,
            "lower": _json_float(self.lower),
            "upper": _json_float(self.upper),
            "alpha": _json_float(self.alpha),
            "zeta": _json_float(self.zeta),
            "iterations": self.iterations,
        }
        if self.trace is not None:
            d["alpha_interval"] = [self.trace.alpha_lower, self.trace.alpha_upper]
        return d


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _in_simplex(p, tol=ROW_SUM_TOL):
    return bool(np.all(np.isfinite(p)) and np.all(p >= 0) and abs(p.sum() - 1.0) <= tol)


def validate(instance: MdpInstance) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out = []
    r, p = instance.rewards, instance.nominal
    if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
        out.append(f"nominal: shape {p.shape} is not (S, A, S) with S, A >= 1")
        return out
    if r.shape != p.shape:
        out.append(f"rewards: shape {r.shape} does not match nominal shape {p.shape}")
    else:
        bad = np.argwhere(~np.isfinite(r) | (r < 0))
        for s, a, t in bad[:10]:
            out.append(f"rewards[{s},{a},{t}]: {r[s, a, t]!r} is not a finite non-negative number")
    neg = np.argwhere(~np.isfinite(p) | (p < 0))
    for s, a, t in neg[:10]:
        out.append(f"nominal[{s},{a},{t}]: {p[s, a, t]!r} is negative or not finite")
    sums = p.sum(axis=2)
    for s, a in np.argwhere(~(np.abs(sums - 1.0) <= ROW_SUM_TOL))[:10]:
        out.append(f"nominal[{s},{a},:]: row sums to {sums[s, a]!r}, not 1")
    if not 0.0 < instance.discount < 1.0:
        out.append(f"discount: {instance.discount!r} is not in (0, 1)")
    if not (math.isfinite(instance.kappa) and instance.kappa >= 0):
        out.append(f"kappa: {instance.kappa!r} must be finite and non-negative")
    if instance.initial_dist is not None:
        q = instance.initial_dist
        if q.shape != (p.shape[0],):
            out.append(f"initial_dist: shape {q.shape} is not ({p.shape[0]},)")
        elif not _in_simplex(q):
            out.append("initial_dist: not a probability vector")
    return out


def normalized(instance: MdpInstance) -> MdpInstance:
    """Rescale nominal rows (and initial_dist) to sum to exactly one."""
    p = instance.nominal / instance.nominal.sum(axis=2, keepdims=True)
    q = instance.initial_dist
    if q is not None:
        q = q / q.sum()
    return instance.replace(nominal=p, initial_dist=q)


_REQUIRED = ("states", "actions", "discount", "kappa", "divergence", "rewards", "nominal")


def read_instance(data) -> MdpInstance:
    """Parse and validate an instance document (bytes or str)."""
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InstanceError(f"instance is not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise InstanceError(f"missing field(s): {', '.join(missing)}")

    def _int(key):
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise InstanceError(f"field {key!r}: expected a positive integer, got {v!r}")
        return v

    def _num(key):
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InstanceError(f"field {key!r}: expected a number, got {v!r}")
        return float(v)

    S, A = _int("states"), _int("actions")
    discount, kappa = _num("discount"), _num("kappa")
    try:
        kind = DivergenceKind.parse(doc["divergence"])
    except ValueError as exc:
        raise InstanceError(f"field 'divergence': {exc}") from None

    def _tensor(key, n):
        v = doc[key]
        if not isinstance(v, list) or len(v) != n:
            got = len(v) if isinstance(v, list) else type(v).__name__
            raise InstanceError(f"field {key!r}: expected a flat array of length {n}, got {got}")
        try:
            return np.array(v, dtype=float)
        except (TypeError, ValueError):
            raise InstanceError(f"field {key!r}: entries must be numbers") from None

    rewards = _tensor("rewards", S * A * S).reshape(S, A, S)
    nominal = _tensor("nominal", S * A * S).reshape(S, A, S)
    init = None
    if doc.get("initial_dist") is not None:
        init = _tensor("initial_dist", S)
    inst = MdpInstance(rewards, nominal, discount, kappa, kind, init)
    problems = validate(inst)
    if problems:
        raise InstanceError("invalid instance: " + "; ".join(problems), problems)
    return normalized(inst)


def write_instance(instance: MdpInstance) -> bytes:
    """Serialize to the JSON instance document; floats keep full precision."""
    S, A = instance.n_states, instance.n_actions
    doc = {
        "states": S,
        "actions": A,
        "discount": instance.discount,
        "kappa": instance.kappa,
        "divergence": instance.kind.value,
        "rewards": [float(x) for x in instance.rewards.ravel()],
        "nominal": [float(x) for x in instance.nominal.ravel()],
    }
    if instance.initial_dist is not None:
        doc["initial_dist"] = [float(x) for x in instance.initial_dist]
    return (json.dumps(doc) + "\n").encode("utf-8")


def read_query(data) -> ProjectionQuery:
    """Parse a projection query document with keys nominal, cost, threshold (delta optional)."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceError("query document must be a JSON object")
    for key in ("nominal", "cost", "threshold"):
        if key not in doc:
            raise InstanceError(f"missing field: {key}")
    try:
        q = ProjectionQuery(doc["nominal"], doc["cost"], doc["threshold"], doc.get("delta", 1e-6))
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"bad query field: {exc}") from None
    problems = q.violations()
    if problems:
        raise InstanceError("invalid query: " + "; ".join(problems), problems)
    return q


def write_query(query: ProjectionQuery) -> bytes:
    doc = {
        "nominal": [float(x) for x in query.nominal],
        "cost": [float(x) for x in query.cost],
        "threshold": query.threshold,
        "delta": query.delta,
    }
    return (json.dumps(doc) + "\n").encode("utf-8")
