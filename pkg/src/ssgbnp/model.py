"""Domain types shared by all modules: game instances, columns, strategies, reports."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

import numpy as np

PROB_SUM_TOL = 1e-6          # loader tolerance on sum(p) before rejection
PROB_EXACT_TOL = 1e-12       # below this the sum is treated as exactly 1 (no renormalization)

STATUS_OPTIMAL = "Optimal"
STATUS_TIME_LIMIT = "TimeLimit"
STATUS_INFEASIBLE = "Infeasible"


class ValidationError(ValueError):
    """An instance violates a type invariant. The message names the invariant and index."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GameSSG:
    """A budget security-game instance.

    Payoff tables are indexed [attacker, target]. `d_prot`/`d_unprot` are the
    defender payoffs when the attacked target is protected/unprotected,
    `a_prot`/`a_unprot` the analogous attacker payoffs. `w` holds per-target
    protection costs and `budget` the total protection budget.
    """

    n_targets: int
    n_attackers: int
    p: np.ndarray
    d_prot: np.ndarray
    d_unprot: np.ndarray
    a_prot: np.ndarray
    a_unprot: np.ndarray
    w: np.ndarray
    budget: float
    seed: int = 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GameSSG):
            return NotImplemented
        return (
            self.n_targets == other.n_targets
            and self.n_attackers == other.n_attackers
            and self.budget == other.budget
            and self.seed == other.seed
            and all(
                np.array_equal(getattr(self, name), getattr(other, name))
                for name in ("p", "d_prot", "d_unprot", "a_prot", "a_unprot", "w")
            )
        )

    @property
    def defender_span(self) -> np.ndarray:
        """d_prot - d_unprot, the coverage coefficient of the defender utility."""
        return self.d_prot - self.d_unprot

    @property
    def attacker_span(self) -> np.ndarray:
        """a_prot - a_unprot, nonpositive by the payoff ordering."""
        return self.a_prot - self.a_unprot


@dataclass(frozen=True, eq=False)
class GameSG:
    """A generic Stackelberg game with explicit payoff tensors.

    `R` and `C` are leader/follower payoffs indexed [attacker, leader strategy,
    follower strategy]; `p` holds the attacker-type probabilities.
    """

    R: np.ndarray
    C: np.ndarray
    p: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GameSG):
            return NotImplemented
        return (
            np.array_equal(self.R, other.R)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.p, other.p)
        )

    @property
    def n_attackers(self) -> int:
        return self.R.shape[0]

    @property
    def n_leader(self) -> int:
        return self.R.shape[1]

    @property
    def n_follower(self) -> int:
        return self.R.shape[2]


@dataclass(frozen=True)
class Column:
    """One defender pure strategy: a 0/1 incidence vector over targets."""

    protected: tuple

    @classmethod
    def zero(cls, n: int) -> "Column":
        return cls((0,) * n)

    @classmethod
    def singleton(cls, n: int, j: int) -> "Column":
        bits = [0] * n
        bits[j] = 1
        return cls(tuple(bits))

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "Column":
        bits = [0] * n
        for j in indices:
            bits[j] = 1
        return cls(tuple(bits))

    def cost(self, w: np.ndarray) -> float:
        return float(sum(wj for wj, bit in zip(w, self.protected) if bit))

    def indices(self) -> tuple:
        return tuple(j for j, bit in enumerate(self.protected) if bit)

    def as_array(self) -> np.ndarray:
        return np.array(self.protected, dtype=float)


@dataclass(frozen=True)
class Response:
    """Attacker type's equilibrium response: target plus both players' utilities."""

    target: int
    defender_value: float
    attacker_value: float


@dataclass(frozen=True)
class MixedStrategy:
    """Defender mixed strategy (support over columns) with per-attacker responses."""

    support: tuple          # of (Column, probability) pairs, probability > 0
    responses: tuple        # of Response, one per attacker type

    def coverage(self, n_targets: int) -> np.ndarray:
        cov = np.zeros(n_targets)
        for col, prob in self.support:
            cov += prob * col.as_array()
        return cov

    def expected_value(self, p: np.ndarray) -> float:
        return float(sum(pk * r.defender_value for pk, r in zip(p, self.responses)))


@dataclass
class SolveReport:
    """Solve metrics. `best_bound` and `farkas_rounds` back the TimeLimit bound
    and the Farkas-usage counters."""

    status: str
    objective: Optional[float]
    time_s: float
    nodes: int
    root_lp_value: Optional[float]
    root_gap_pct: Optional[float]
    columns_generated: int
    pricing_iterations: int
    formulation: str
    cuts: str
    best_bound: Optional[float] = None
    farkas_rounds: int = 0


def _check_shape(name: str, arr: np.ndarray, shape: tuple) -> None:
    if arr.shape != shape:
        raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")


def _validated_probs(p: np.ndarray) -> np.ndarray:
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        bad = int(np.argmax((p < -1e-12) | (p > 1 + 1e-12)))
        raise ValidationError(f"probability p[{bad}]={p[bad]:g} outside [0, 1]")
    s = float(p.sum())
    if abs(s - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"probabilities sum {s:g}, expected 1")
    if abs(s - 1.0) > PROB_EXACT_TOL:
        p = p / s
    return p


def _validate_ssg(g: GameSSG) -> GameSSG:
    if g.n_targets < 1:
        raise ValidationError("n_targets must be positive")
    if g.n_attackers < 1:
        raise ValidationError("n_attackers must be positive")
    n, k = g.n_targets, g.n_attackers
    p = np.asarray(g.p, dtype=float)
    _check_shape("p", p, (k,))
    tables = {}
    for name in ("d_prot", "d_unprot", "a_prot", "a_unprot"):
        arr = np.asarray(getattr(g, name), dtype=float)
        _check_shape(name, arr, (k, n))
        tables[name] = arr
    w = np.asarray(g.w, dtype=float)
    _check_shape("w", w, (n,))
    if np.any(w <= 0):
        bad = int(np.argmax(w <= 0))
        raise ValidationError(f"protection cost w[{bad}]={w[bad]:g} must be > 0")
    if g.budget < 0:
        raise ValidationError(f"budget {g.budget:g} must be >= 0")
    p = _validated_probs(p)
    viol = tables["d_prot"] - tables["d_unprot"]
    if np.any(viol < 0):
        kk, jj = np.unravel_index(int(np.argmin(viol)), viol.shape)
        raise ValidationError(
            f"defender payoff ordering violated at attacker {kk}, target {jj}: "
            f"d_prot={tables['d_prot'][kk, jj]:g} < d_unprot={tables['d_unprot'][kk, jj]:g}"
        )
    viol = tables["a_unprot"] - tables["a_prot"]
    if np.any(viol < 0):
        kk, jj = np.unravel_index(int(np.argmin(viol)), viol.shape)
        raise ValidationError(
            f"attacker payoff ordering violated at attacker {kk}, target {jj}: "
            f"a_prot={tables['a_prot'][kk, jj]:g} > a_unprot={tables['a_unprot'][kk, jj]:g}"
        )
    return replace(
        g,
        p=_readonly(p),
        d_prot=_readonly(tables["d_prot"]),
        d_unprot=_readonly(tables["d_unprot"]),
        a_prot=_readonly(tables["a_prot"]),
        a_unprot=_readonly(tables["a_unprot"]),
        w=_readonly(w),
        budget=float(g.budget),
    )


def _validate_sg(g: GameSG) -> GameSG:
    R = np.asarray(g.R, dtype=float)
    C = np.asarray(g.C, dtype=float)
    if R.ndim != 3:
        raise ValidationError(f"R must be 3-dimensional, got {R.ndim} dims")
    if R.shape != C.shape:
        raise ValidationError(f"R shape {R.shape} differs from C shape {C.shape}")
    p = _validated_probs(np.asarray(g.p, dtype=float))
    _check_shape("p", p, (R.shape[0],))
    return GameSG(R=_readonly(R), C=_readonly(C), p=_readonly(p))


def validate(instance: Union[GameSSG, GameSG]):
    """Check all type invariants; returns a normalized read-only copy.

    Attacker-type probabilities summing within 1e-6 of 1 are normalized;
    anything further off is rejected.
    """
    if isinstance(instance, GameSSG):
        return _validate_ssg(instance)
    if isinstance(instance, GameSG):
        return _validate_sg(instance)
    raise ValidationError(f"unsupported instance type {type(instance).__name__}")


def strategy_violations(
    g: GameSSG,
    strategy: MixedStrategy,
    *,
    prob_tol: float = 1e-8,
    response_tol: float = 1e-6,
    check_tie_break: bool = True,
) -> list:
    """List every MixedStrategy invariant the given strategy breaks (empty if none).

    Checks support-probability normalization, per-column budget feasibility,
    attacker optimality of each response, and (optionally) the strong
    Stackelberg tie-break toward the defender.
    """
    problems = []
    total = sum(prob for _, prob in strategy.support)
    if abs(total - 1.0) > prob_tol:
        problems.append(f"support probabilities sum {total:.12g}")
    for col, prob in strategy.support:
        if prob <= 0:
            problems.append(f"nonpositive support probability {prob:g}")
        if col.cost(g.w) > g.budget + 1e-9:
            problems.append(f"column {col.indices()} exceeds budget")
    cov = strategy.coverage(g.n_targets)
    for k, resp in enumerate(strategy.responses):
        att_util = g.attacker_span[k] * cov + g.a_unprot[k]
        best = float(att_util.max())
        if att_util[resp.target] < best - response_tol:
            problems.append(
                f"attacker {k} response {resp.target} suboptimal: "
                f"{att_util[resp.target]:.9g} < {best:.9g}"
            )
        elif check_tie_break:
            def_util = g.defender_span[k] * cov + g.d_unprot[k]
            tied = np.nonzero(att_util >= best - response_tol)[0]
            best_def = float(def_util[tied].max())
            if def_util[resp.target] < best_def - response_tol:
                problems.append(
                    f"attacker {k} response {resp.target} breaks the leader-favoring "
                    f"tie-break: {def_util[resp.target]:.9g} < {best_def:.9g}"
                )
    return problems
