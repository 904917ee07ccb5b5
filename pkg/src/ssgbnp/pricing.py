"""Column creation: reduced costs, knapsack pricers, GRASP seeds, Farkas pricing.

The pricing problem is a 0/1 knapsack over targets: each target carries a
profit assembled from the master duals and a protection cost, and the budget
caps the total cost. The same machinery prices regular columns (against the
optimal duals) and Farkas columns (against an infeasibility ray).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .master import MasterLayout
from .model import Column, GameSSG
from .simplexlp import LpOutcome, NumericalFailure

PRICE_TOL = 1e-7          # a column enters only if its reduced cost exceeds this
FARKAS_TOL = 1e-9
GRASP_ALPHA = 0.3         # restricted-candidate-list fraction


@dataclass(frozen=True)
class DualView:
    """Master duals arranged for pricing.

    `leader_duals`, `attacker_upper_duals` and `attacker_lower_duals` are
    (attackers x targets) arrays for the three optimality row blocks;
    `convexity_dual` belongs to the convexity row. `target_profits[j]` is the
    per-target contribution of protecting j to a column's reduced cost.
    """

    leader_duals: np.ndarray
    attacker_upper_duals: np.ndarray
    attacker_lower_duals: np.ndarray
    convexity_dual: float
    target_profits: np.ndarray

    @classmethod
    def assemble(cls, g: GameSSG, lead, att_up, att_lo, conv: float) -> "DualView":
        profits = (
            lead * g.defender_span
            + att_up * g.attacker_span
            - att_lo * g.attacker_span
        ).sum(axis=0)
        return cls(
            leader_duals=lead,
            attacker_upper_duals=att_up,
            attacker_lower_duals=att_lo,
            convexity_dual=float(conv),
            target_profits=profits,
        )

    @classmethod
    def from_outcome(cls, g: GameSSG, outcome: LpOutcome, layout: MasterLayout) -> "DualView":
        """Read duals positionally from an Optimal master solve.

        Tiny negative dust on the inequality-row duals is clipped so that
        downstream sign assumptions hold exactly.
        """
        duals = outcome.duals
        nk = g.n_targets * g.n_attackers
        shape = (g.n_attackers, g.n_targets)
        lead = np.clip(duals[:nk].reshape(shape), 0.0, None)
        att_up = np.clip(duals[nk: 2 * nk].reshape(shape), 0.0, None)
        att_lo = np.clip(duals[2 * nk: 3 * nk].reshape(shape), 0.0, None)
        return cls.assemble(g, lead, att_up, att_lo, duals[layout.convexity_row])

    @classmethod
    def from_ray(cls, g: GameSSG, ray: np.ndarray, layout: MasterLayout) -> "DualView":
        """Arrange a Farkas ray like a dual vector (no clipping)."""
        nk = g.n_targets * g.n_attackers
        shape = (g.n_attackers, g.n_targets)
        return cls.assemble(
            g,
            ray[:nk].reshape(shape),
            ray[nk: 2 * nk].reshape(shape),
            ray[2 * nk: 3 * nk].reshape(shape),
            ray[layout.convexity_row],
        )

    def blend(self, other: "DualView", weight: float, g: GameSSG) -> "DualView":
        """weight * self + (1 - weight) * other, reassembled consistently."""
        return DualView.assemble(
            g,
            weight * self.leader_duals + (1 - weight) * other.leader_duals,
            weight * self.attacker_upper_duals + (1 - weight) * other.attacker_upper_duals,
            weight * self.attacker_lower_duals + (1 - weight) * other.attacker_lower_duals,
            weight * self.convexity_dual + (1 - weight) * other.convexity_dual,
        )


def reduced_cost(col: Column, duals: DualView) -> float:
    """Reduced cost of the column under the given duals."""
    total = -duals.convexity_dual
    for j, bit in enumerate(col.protected):
        if bit:
            total += duals.target_profits[j]
    return total


def _integer_weights(w: np.ndarray) -> Optional[np.ndarray]:
    rounded = np.round(w)
    if np.all(np.abs(w - rounded) < 1e-9):
        return rounded.astype(int)
    return None


def _knapsack_dp(profits: np.ndarray, weights: np.ndarray, capacity: int) -> Tuple[list, float]:
    """Exact 0/1 knapsack over integer weights; items with profit <= 0 are dropped."""
    items = [j for j in range(len(profits)) if profits[j] > 0 and weights[j] <= capacity]
    if not items or capacity <= 0:
        return [], 0.0
    values = np.zeros(capacity + 1)
    keep = np.zeros((len(items), capacity + 1), dtype=bool)
    for t, j in enumerate(items):
        wj = int(weights[j])
        cand = values[: capacity + 1 - wj] + profits[j]
        better = cand > values[wj:]
        keep[t, wj:] = better
        values[wj:] = np.where(better, cand, values[wj:])
    chosen = []
    c = capacity
    for t in range(len(items) - 1, -1, -1):
        if keep[t, c]:
            chosen.append(items[t])
            c -= int(weights[items[t]])
    chosen.reverse()
    return chosen, float(values[capacity])


def _knapsack_branch_bound(profits: np.ndarray, weights: np.ndarray, budget: float) -> Tuple[list, float]:
    """Exact solver for real-valued weights: depth-first search with a
    fractional-relaxation bound. Only reached for hand-built instances whose
    costs are not integers."""
    items = [j for j in range(len(profits)) if profits[j] > 0 and weights[j] <= budget + 1e-9]
    order = sorted(items, key=lambda j: (-profits[j] / weights[j], j))
    best_value = 0.0
    best_set: list = []

    def bound(idx: int, room: float) -> float:
        total = 0.0
        for t in range(idx, len(order)):
            j = order[t]
            if weights[j] <= room:
                total += profits[j]
                room -= weights[j]
            else:
                total += profits[j] * room / weights[j]
                break
        return total

    def dfs(idx: int, room: float, value: float, chosen: list) -> None:
        nonlocal best_value, best_set
        if value > best_value:
            best_value = value
            best_set = list(chosen)
        if idx >= len(order) or value + bound(idx, room) <= best_value + 1e-15:
            return
        j = order[idx]
        if weights[j] <= room + 1e-12:
            chosen.append(j)
            dfs(idx + 1, room - weights[j], value + profits[j], chosen)
            chosen.pop()
        dfs(idx + 1, room, value, chosen)

    dfs(0, float(budget), 0.0, [])
    return sorted(best_set), best_value


def _best_column(g: GameSSG, profits: np.ndarray) -> Tuple[Column, float]:
    wint = _integer_weights(g.w)
    if wint is not None:
        capacity = int(math.floor(g.budget + 1e-9))
        chosen, value = _knapsack_dp(profits, wint, capacity)
    else:
        chosen, value = _knapsack_branch_bound(profits, g.w, g.budget)
    return Column.from_indices(g.n_targets, chosen), value


def price_exact(g: GameSSG, duals: DualView) -> Tuple[Column, float]:
    """Best column over the whole budget-feasible set; exact.

    Returns the column and its reduced cost. Since the zero column is always
    feasible, the value is at least -convexity_dual.
    """
    col, value = _best_column(g, duals.target_profits)
    return col, value - duals.convexity_dual


def price_greedy(g: GameSSG, duals: DualView) -> Tuple[Column, float]:
    """Ratio-greedy heuristic pricer: profitable targets by profit/cost."""
    profits = duals.target_profits
    order = sorted(
        (j for j in range(g.n_targets) if profits[j] > 0),
        key=lambda j: (-profits[j] / g.w[j], j),
    )
    remaining = g.budget
    chosen = []
    value = 0.0
    for j in order:
        if g.w[j] <= remaining + 1e-9:
            chosen.append(j)
            remaining -= g.w[j]
            value += profits[j]
    return Column.from_indices(g.n_targets, chosen), value - duals.convexity_dual


def greedy_columns(g: GameSSG, duals: DualView, count: int) -> List[Tuple[Column, float]]:
    """Up to `count` distinct greedy columns.

    After each column, its highest-ratio target is banned and the greedy
    construction reruns, which yields a deterministic diverse batch.
    """
    banned: set = set()
    out: List[Tuple[Column, float]] = []
    seen: set = set()
    profits = duals.target_profits
    for _ in range(max(1, count)):
        order = sorted(
            (j for j in range(g.n_targets) if profits[j] > 0 and j not in banned),
            key=lambda j: (-profits[j] / g.w[j], j),
        )
        if not order:
            break
        remaining = g.budget
        chosen = []
        value = 0.0
        for j in order:
            if g.w[j] <= remaining + 1e-9:
                chosen.append(j)
                remaining -= g.w[j]
                value += profits[j]
        col = Column.from_indices(g.n_targets, chosen)
        if col.protected not in seen:
            seen.add(col.protected)
            out.append((col, value - duals.convexity_dual))
        banned.add(order[0])
    return out


def initial_columns(g: GameSSG, count: int, seed: int) -> List[Column]:
    """Deterministic initial pool: the empty column, every affordable
    singleton, then randomized greedy constructions until `count` columns.

    The construction benefit of target j is the probability-weighted defender
    payoff swing, a proxy gradient of covering j. Each construction samples
    uniformly from the top share of affordable targets ranked by benefit/cost.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cols: List[Column] = [Column.zero(g.n_targets)]
    seen = {cols[0].protected}
    for j in range(g.n_targets):
        if g.w[j] <= g.budget + 1e-9:
            col = Column.singleton(g.n_targets, j)
            cols.append(col)
            seen.add(col.protected)

    benefit = (g.p[:, None] * g.defender_span).sum(axis=0)
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(cols) < count and attempts < 50 * count:
        attempts += 1
        remaining = g.budget
        chosen: list = []
        while True:
            affordable = [
                j for j in range(g.n_targets)
                if j not in chosen and g.w[j] <= remaining + 1e-9
            ]
            if not affordable:
                break
            affordable.sort(key=lambda j: (-benefit[j] / g.w[j], j))
            rcl = affordable[: max(1, math.ceil(GRASP_ALPHA * len(affordable)))]
            j = rcl[int(rng.integers(len(rcl)))]
            chosen.append(j)
            remaining -= g.w[j]
        col = Column.from_indices(g.n_targets, chosen)
        if col.protected not in seen:
            seen.add(col.protected)
            cols.append(col)
    return cols


def farkas_price(g: GameSSG, ray_view: DualView) -> Optional[Column]:
    """Column whose master coefficients break an infeasibility certificate.

    Maximizes the negated ray applied to a prospective column over the
    budget-feasible set. Returns None when no column can help, i.e. the
    node is genuinely infeasible.
    """
    col, value = price_exact(g, ray_view)
    if value > FARKAS_TOL:
        return col
    return None
