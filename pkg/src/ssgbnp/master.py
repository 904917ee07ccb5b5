"""Restricted-master LP builders for the D2 family of formulations.

Three bases are supported: the big-M formulation, the variant whose leader
and/or attacker optimality rows are replaced by the tighter coupling
inequalities, and the latter further strengthened with one aggregate row per
attacker type (SSG mode) or per leader strategy (generic mode).

Canonical layout (both modes)
-----------------------------
Variables: x per column/leader strategy, then q (attacker-major,
target-minor, each in [0, 1]), then f per attacker, then s per attacker.
Rows: leader optimality rows (attacker-major, target-minor), attacker upper
rows, attacker lower rows, the convexity row (dual h), one q-sum row per
attacker, strengthening rows (defender block then attacker block), fixing
rows sorted by (attacker, target). Pricing reads duals by these positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import Column, GameSG, GameSSG, ValidationError
from .simplexlp import EQ, GE, LE, LinearProgram

D2 = "d2"
D2PLUS = "d2plus"
D2PLUSPRIME = "d2plusprime"

SCOPE_ATTACKER = "attacker"
SCOPE_DEFENDER = "defender"
SCOPE_BOTH = "both"


class InconsistentFixing(ValueError):
    """Branching fixings leave some attacker type without any response."""


@dataclass(frozen=True)
class FormulationSpec:
    """Which master formulation to build.

    `cut_scope` selects the sides on which the new inequalities are used; the
    big-M base ignores it. The strengthened base always carries both coupling
    inequality families and uses `cut_scope` for the extra aggregate rows
    only.
    """

    base: str
    cut_scope: str = SCOPE_BOTH
    mode: str = "ssg"

    def __post_init__(self):
        if self.base not in (D2, D2PLUS, D2PLUSPRIME):
            raise ValueError(f"unknown formulation base {self.base!r}")
        if self.cut_scope not in (SCOPE_ATTACKER, SCOPE_DEFENDER, SCOPE_BOTH):
            raise ValueError(f"unknown cut scope {self.cut_scope!r}")
        if self.mode not in ("ssg", "sg"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def defender_cuts(self) -> bool:
        if self.base == D2:
            return False
        if self.base == D2PLUSPRIME:
            return True
        return self.cut_scope in (SCOPE_DEFENDER, SCOPE_BOTH)

    @property
    def attacker_cuts(self) -> bool:
        if self.base == D2:
            return False
        if self.base == D2PLUSPRIME:
            return True
        return self.cut_scope in (SCOPE_ATTACKER, SCOPE_BOTH)

    @property
    def strengthen_defender(self) -> bool:
        return self.base == D2PLUSPRIME and self.cut_scope in (SCOPE_DEFENDER, SCOPE_BOTH)

    @property
    def strengthen_attacker(self) -> bool:
        return self.base == D2PLUSPRIME and self.cut_scope in (SCOPE_ATTACKER, SCOPE_BOTH)

    @property
    def cuts_tag(self) -> str:
        return "none" if self.base == D2 else self.cut_scope


@dataclass(frozen=True)
class BigM:
    """Tightest valid big-M constants, one per (attacker, target)."""

    leader: np.ndarray
    follower: np.ndarray


def big_m_ssg(g: GameSSG) -> BigM:
    """Closed-form tightest big-M values for the security-game rows."""
    lead_hi = np.maximum(g.d_prot, g.d_unprot).max(axis=1)
    leader = lead_hi[:, None] - np.minimum(g.d_prot, g.d_unprot)
    att_hi = np.maximum(g.a_prot, g.a_unprot).max(axis=1)
    follower = att_hi[:, None] - np.minimum(g.a_prot, g.a_unprot)
    return BigM(leader=leader, follower=follower)


def big_m_sg(g: GameSG) -> BigM:
    """Tightest big-M values for the generic game: max_i (max_l X_il - X_ij)."""
    lead = (g.R.max(axis=2)[:, :, None] - g.R).max(axis=1)
    foll = (g.C.max(axis=2)[:, :, None] - g.C).max(axis=1)
    return BigM(leader=lead, follower=foll)


def cut_coefficients_ssg(g: GameSSG):
    """Coupling-inequality constants, indexed [attacker, row target j, other j'].

    leader[k, j, j'] = D^k(j'|p) - D^k(j|u);  attacker[k, j, j'] = A^k(j'|u) - A^k(j|p).
    Diagonal entries are unused.
    """
    leader = g.d_prot[:, None, :] - g.d_unprot[:, :, None]
    attacker = g.a_unprot[:, None, :] - g.a_prot[:, :, None]
    return leader, attacker


def cut_coefficients_sg(g: GameSG):
    """max_i (X[k,i,j'] - X[k,i,j]) for X in {R, C}, indexed [k, j, j']."""
    leader = (g.R[:, :, None, :] - g.R[:, :, :, None]).max(axis=1)
    attacker = (g.C[:, :, None, :] - g.C[:, :, :, None]).max(axis=1)
    return leader, attacker


@dataclass(frozen=True)
class MasterLayout:
    """Variable and row positions of a canonically built master LP."""

    n_targets: int
    n_attackers: int
    n_cols: int
    n_strengthen: int
    n_fixings: int

    @property
    def x_vars(self) -> slice:
        return slice(0, self.n_cols)

    def q_var(self, k: int, j: int) -> int:
        return self.n_cols + k * self.n_targets + j

    @property
    def q_vars(self) -> slice:
        return slice(self.n_cols, self.n_cols + self.n_targets * self.n_attackers)

    def f_var(self, k: int) -> int:
        return self.n_cols + self.n_targets * self.n_attackers + k

    def s_var(self, k: int) -> int:
        return self.n_cols + self.n_targets * self.n_attackers + self.n_attackers + k

    @property
    def n_vars(self) -> int:
        return self.n_cols + self.n_targets * self.n_attackers + 2 * self.n_attackers

    def leader_row(self, k: int, j: int) -> int:
        return k * self.n_targets + j

    def attacker_upper_row(self, k: int, j: int) -> int:
        return self.n_targets * self.n_attackers + k * self.n_targets + j

    def attacker_lower_row(self, k: int, j: int) -> int:
        return 2 * self.n_targets * self.n_attackers + k * self.n_targets + j

    @property
    def convexity_row(self) -> int:
        return 3 * self.n_targets * self.n_attackers

    def q_sum_row(self, k: int) -> int:
        return self.convexity_row + 1 + k

    @property
    def strengthen_rows(self) -> slice:
        start = self.convexity_row + 1 + self.n_attackers
        return slice(start, start + self.n_strengthen)

    @property
    def fixing_rows(self) -> slice:
        start = self.convexity_row + 1 + self.n_attackers + self.n_strengthen
        return slice(start, start + self.n_fixings)

    @property
    def n_rows(self) -> int:
        return self.fixing_rows.stop


def layout_for(
    g: GameSSG, n_cols: int, spec: FormulationSpec, n_fixings: int = 0
) -> MasterLayout:
    n_str = g.n_attackers * (int(spec.strengthen_defender) + int(spec.strengthen_attacker))
    return MasterLayout(
        n_targets=g.n_targets,
        n_attackers=g.n_attackers,
        n_cols=n_cols,
        n_strengthen=n_str,
        n_fixings=n_fixings,
    )


def _check_fixings(n: int, k: int, fixings: Mapping) -> list:
    """Normalize fixings to a sorted list of ((k, j), value) and check consistency."""
    items = sorted(fixings.items())
    ones = {}
    zeros_per_k = {}
    for (kk, jj), val in items:
        if not (0 <= kk < k and 0 <= jj < n):
            raise ValidationError(f"fixing index ({kk}, {jj}) out of range")
        if val not in (0, 1):
            raise ValidationError(f"fixing value {val!r} must be 0 or 1")
        if val == 1:
            if kk in ones:
                raise InconsistentFixing(f"attacker {kk} has two responses fixed to 1")
            ones[kk] = jj
        else:
            zeros_per_k.setdefault(kk, set()).add(jj)
    for kk, zeros in zeros_per_k.items():
        if len(zeros) == n:
            raise InconsistentFixing(f"attacker {kk} has every response fixed to 0")
        if kk in ones and ones[kk] in zeros:
            raise InconsistentFixing(
                f"attacker {kk} target {ones[kk]} fixed to both 0 and 1"
            )
    return items


def build_master(
    g: GameSSG,
    cols: Sequence[Column],
    spec: FormulationSpec,
    fixings: Optional[Mapping] = None,
) -> LinearProgram:
    """Build the restricted master LP over `cols` for the chosen formulation.

    Row and variable order follow the module docstring, so duals map to
    (w, y, z, h) purely by position via `layout_for`.
    """
    if len(cols) == 0:
        raise ValidationError("column set must be nonempty")
    seen = set()
    for col in cols:
        if col.protected in seen:
            raise ValidationError(f"duplicate column {col.indices()}")
        seen.add(col.protected)
        if len(col.protected) != g.n_targets:
            raise ValidationError(f"column width {len(col.protected)} != {g.n_targets}")
        if col.cost(g.w) > g.budget + 1e-9:
            raise ValidationError(f"column {col.indices()} exceeds the budget")
    fix_items = _check_fixings(g.n_targets, g.n_attackers, fixings or {})

    n, K, C = g.n_targets, g.n_attackers, len(cols)
    layout = layout_for(g, C, spec, len(fix_items))
    P = np.array([c.protected for c in cols], dtype=float)   # (C, n)
    dD = g.defender_span                                      # (K, n)
    dA = g.attacker_span

    rows = np.zeros((layout.n_rows, layout.n_vars))
    rhs = np.zeros(layout.n_rows)
    rel = [LE] * layout.n_rows

    big_m = None
    if not (spec.defender_cuts and spec.attacker_cuts):
        big_m = big_m_ssg(g)
    lead_cut = att_cut = None
    if spec.defender_cuts or spec.attacker_cuts:
        lead_cut, att_cut = cut_coefficients_ssg(g)

    for k in range(K):
        for j in range(n):
            r = layout.leader_row(k, j)
            rows[r, layout.f_var(k)] = 1.0
            rows[r, layout.x_vars] = -dD[k, j] * P[:, j]
            if spec.defender_cuts:
                qrow = -lead_cut[k, j, :].copy()
                qrow[j] = 0.0
                rows[r, layout.q_vars][k * n: (k + 1) * n] = qrow
                rhs[r] = g.d_unprot[k, j]
            else:
                rows[r, layout.q_var(k, j)] = big_m.leader[k, j]
                rhs[r] = g.d_unprot[k, j] + big_m.leader[k, j]

            r = layout.attacker_upper_row(k, j)
            rows[r, layout.s_var(k)] = 1.0
            rows[r, layout.x_vars] = -dA[k, j] * P[:, j]
            if spec.attacker_cuts:
                qrow = -att_cut[k, j, :].copy()
                qrow[j] = 0.0
                rows[r, layout.q_vars][k * n: (k + 1) * n] = qrow
                rhs[r] = g.a_unprot[k, j]
            else:
                rows[r, layout.q_var(k, j)] = big_m.follower[k, j]
                rhs[r] = g.a_unprot[k, j] + big_m.follower[k, j]

            r = layout.attacker_lower_row(k, j)
            rows[r, layout.s_var(k)] = -1.0
            rows[r, layout.x_vars] = dA[k, j] * P[:, j]
            rhs[r] = -g.a_unprot[k, j]

    r = layout.convexity_row
    rows[r, layout.x_vars] = 1.0
    rhs[r] = 1.0
    rel[r] = EQ
    for k in range(K):
        r = layout.q_sum_row(k)
        rows[r, layout.q_vars][k * n: (k + 1) * n] = 1.0
        rhs[r] = 1.0
        rel[r] = EQ

    r = layout.strengthen_rows.start
    if spec.strengthen_defender:
        for k in range(K):
            rows[r, layout.f_var(k)] = 1.0
            rows[r, layout.q_vars][k * n: (k + 1) * n] = -g.d_prot[k]
            r += 1
    if spec.strengthen_attacker:
        for k in range(K):
            rows[r, layout.s_var(k)] = 1.0
            rows[r, layout.q_vars][k * n: (k + 1) * n] = -g.a_unprot[k]
            r += 1

    r = layout.fixing_rows.start
    for (k, j), val in fix_items:
        rows[r, layout.q_var(k, j)] = 1.0
        if val == 0:
            rel[r] = LE
            rhs[r] = 0.0
        else:
            rel[r] = GE
            rhs[r] = 1.0
        r += 1

    objective = np.zeros(layout.n_vars)
    for k in range(K):
        objective[layout.f_var(k)] = g.p[k]
    free = np.zeros(layout.n_vars, dtype=bool)
    for k in range(K):
        free[layout.f_var(k)] = True
        free[layout.s_var(k)] = True
    # q <= 1 is implied by the q-sum rows with q >= 0, so no upper bounds are
    # declared; this keeps Farkas certificates over the declared rows only.
    return LinearProgram.build(objective, rows, rel, rhs, free=free)


def column_coefficients(g: GameSSG, layout: MasterLayout, col: Column) -> np.ndarray:
    """Master coefficient column of a new x variable (formulation independent)."""
    coefs = np.zeros(layout.n_rows)
    bits = col.protected
    for k in range(g.n_attackers):
        for j in range(g.n_targets):
            if not bits[j]:
                continue
            coefs[layout.leader_row(k, j)] = -g.defender_span[k, j]
            coefs[layout.attacker_upper_row(k, j)] = -g.attacker_span[k, j]
            coefs[layout.attacker_lower_row(k, j)] = g.attacker_span[k, j]
    coefs[layout.convexity_row] = 1.0
    return coefs


def sg_layout_for(g: GameSG, spec: FormulationSpec, n_fixings: int = 0) -> MasterLayout:
    n_str = 0
    if spec.strengthen_defender:
        n_str += g.n_attackers * g.n_leader
    if spec.strengthen_attacker:
        n_str += g.n_attackers * g.n_leader
    return MasterLayout(
        n_targets=g.n_follower,
        n_attackers=g.n_attackers,
        n_cols=g.n_leader,
        n_strengthen=n_str,
        n_fixings=n_fixings,
    )


def build_master_sg(
    g: GameSG,
    spec: FormulationSpec,
    fixings: Optional[Mapping] = None,
) -> LinearProgram:
    """Static master over the full explicit strategy set of a generic game.

    Same canonical layout as the security-game master; the strengthening
    block holds one row per (attacker, leader strategy) and scope, defender
    rows first. `fixings` supports the branch-and-bound driver.
    """
    K, I, J = g.n_attackers, g.n_leader, g.n_follower
    fix_items = _check_fixings(J, K, fixings or {})
    layout = sg_layout_for(g, spec, len(fix_items))

    rows = np.zeros((layout.n_rows, layout.n_vars))
    rhs = np.zeros(layout.n_rows)
    rel = [LE] * layout.n_rows

    big_m = None
    if not (spec.defender_cuts and spec.attacker_cuts):
        big_m = big_m_sg(g)
    lead_cut = att_cut = None
    if spec.defender_cuts or spec.attacker_cuts:
        lead_cut, att_cut = cut_coefficients_sg(g)

    for k in range(K):
        for j in range(J):
            r = layout.leader_row(k, j)
            rows[r, layout.f_var(k)] = 1.0
            rows[r, layout.x_vars] = -g.R[k, :, j]
            if spec.defender_cuts:
                qrow = -lead_cut[k, j, :].copy()
                qrow[j] = 0.0
                rows[r, layout.q_vars][k * J: (k + 1) * J] = qrow
                rhs[r] = 0.0
            else:
                rows[r, layout.q_var(k, j)] = big_m.leader[k, j]
                rhs[r] = big_m.leader[k, j]

            r = layout.attacker_upper_row(k, j)
            rows[r, layout.s_var(k)] = 1.0
            rows[r, layout.x_vars] = -g.C[k, :, j]
            if spec.attacker_cuts:
                qrow = -att_cut[k, j, :].copy()
                qrow[j] = 0.0
                rows[r, layout.q_vars][k * J: (k + 1) * J] = qrow
                rhs[r] = 0.0
            else:
                rows[r, layout.q_var(k, j)] = big_m.follower[k, j]
                rhs[r] = big_m.follower[k, j]

            r = layout.attacker_lower_row(k, j)
            rows[r, layout.s_var(k)] = -1.0
            rows[r, layout.x_vars] = g.C[k, :, j]
            rhs[r] = 0.0

    r = layout.convexity_row
    rows[r, layout.x_vars] = 1.0
    rhs[r] = 1.0
    rel[r] = EQ
    for k in range(K):
        r = layout.q_sum_row(k)
        rows[r, layout.q_vars][k * J: (k + 1) * J] = 1.0
        rhs[r] = 1.0
        rel[r] = EQ

    r = layout.strengthen_rows.start
    if spec.strengthen_defender:
        sib = (g.R[:, None, :, :] - g.R[:, :, None, :]).max(axis=3)  # [k, i, i']
        for k in range(K):
            for i in range(I):
                rows[r, layout.f_var(k)] = 1.0
                rows[r, layout.q_vars][k * J: (k + 1) * J] = -g.R[k, i, :]
                xrow = -sib[k, i, :].copy()
                xrow[i] = 0.0
                rows[r, layout.x_vars] = xrow
                r += 1
    if spec.strengthen_attacker:
        sib = (g.C[:, None, :, :] - g.C[:, :, None, :]).max(axis=3)
        for k in range(K):
            for i in range(I):
                rows[r, layout.s_var(k)] = 1.0
                rows[r, layout.q_vars][k * J: (k + 1) * J] = -g.C[k, i, :]
                xrow = -sib[k, i, :].copy()
                xrow[i] = 0.0
                rows[r, layout.x_vars] = xrow
                r += 1

    r = layout.fixing_rows.start
    for (k, j), val in fix_items:
        rows[r, layout.q_var(k, j)] = 1.0
        rel[r] = LE if val == 0 else GE
        rhs[r] = 0.0 if val == 0 else 1.0
        r += 1

    objective = np.zeros(layout.n_vars)
    for k in range(K):
        objective[layout.f_var(k)] = g.p[k]
    free = np.zeros(layout.n_vars, dtype=bool)
    for k in range(K):
        free[layout.f_var(k)] = True
        free[layout.s_var(k)] = True
    # as in the priced master, q <= 1 is implied by the q-sum rows
    return LinearProgram.build(objective, rows, rel, rhs, free=free)
