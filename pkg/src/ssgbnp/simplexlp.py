"""Dense LP kernel: two-phase primal simplex with duals and Farkas certificates.

Every master relaxation in the package is solved here. The implementation
keeps a full dense tableau, which makes warm starts after column additions a
matter of appending one transformed column and resuming phase-2 pivots.

Conventions
-----------
* Problems are maximizations.
* Row relations are "<=", ">=", or "=".
* Duals follow the max-LP convention: "<=" rows get nonnegative duals,
  ">=" rows nonpositive ones, "=" rows are unrestricted.
* On infeasibility the outcome carries a Farkas ray `rho`, one multiplier per
  declared row, with rho >= 0 on "<=" rows, rho <= 0 on ">=" rows, free on
  "=" rows, rho^T A = 0 over free variables, rho^T A >= 0 over nonnegative
  variables, and rho^T b < 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

LE = "<="
GE = ">="
EQ = "="

PIVOT_EPS = 1e-9          # pivot eligibility / degeneracy tolerance
FEAS_EPS = 1e-9           # phase-1 residual treated as feasible
RC_EPS = 1e-9             # reduced-cost optimality tolerance
BLAND_AFTER = 40          # degenerate pivots before switching to Bland's rule
MAX_REFRESH = 3           # tableau rebuilds from the basis before giving up


class NumericalFailure(RuntimeError):
    """The basis became singular or pivoting stopped making progress."""


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LinearProgram:
    """A dense maximization LP.

    `free[j]` marks variables with lower bound -inf (otherwise 0);
    `upper_one[j]` marks variables bounded above by 1 (otherwise +inf).
    Variable upper bounds are materialized internally as explicit rows, so
    certificates stay plain Farkas multipliers over the declared rows.
    """

    objective: np.ndarray
    rows: np.ndarray
    relations: list
    rhs: np.ndarray
    free: np.ndarray
    upper_one: np.ndarray

    @classmethod
    def build(cls, objective, rows, relations, rhs, free=None, upper_one=None) -> "LinearProgram":
        objective = np.asarray(objective, dtype=float)
        n = objective.shape[0]
        rows = np.asarray(rows, dtype=float).reshape(-1, n)
        rhs = np.asarray(rhs, dtype=float)
        if free is None:
            free = np.zeros(n, dtype=bool)
        if upper_one is None:
            upper_one = np.zeros(n, dtype=bool)
        lp = cls(objective, rows, list(relations), rhs,
                 np.asarray(free, dtype=bool), np.asarray(upper_one, dtype=bool))
        lp.validate()
        return lp

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def validate(self) -> None:
        n = self.n_vars
        if self.rows.ndim != 2 or self.rows.shape[1] != n:
            raise ValueError(f"row matrix shape {self.rows.shape} does not match {n} variables")
        m = self.rows.shape[0]
        if self.rhs.shape != (m,) or len(self.relations) != m:
            raise ValueError("rhs / relations length does not match the row count")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand sides must be finite")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("row coefficients must be finite")
        for rel in self.relations:
            if rel not in (LE, GE, EQ):
                raise ValueError(f"unknown relation {rel!r}")


@dataclass
class LpOutcome:
    status: LpStatus
    objective: Optional[float] = None
    primal: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None


class SimplexSession:
    """Stateful simplex solve supporting warm-started variable additions.

    After a solve, `add_variable` appends one column and the next `solve`
    resumes pivoting from the current basis instead of starting over. This is
    where column generation spends nearly all of its time.
    """

    def __init__(self, lp: LinearProgram, trace: Optional[Callable[[str], None]] = None):
        lp.validate()
        self.lp = lp
        self.trace = trace
        self._outcome: Optional[LpOutcome] = None
        self._stale = True
        self._pivots = 0
        self._appended: list = []   # internal column indices of variables added later
        self._build_internal()

    # ------------------------------------------------------------------
    # internal standard form
    # ------------------------------------------------------------------

    def _build_internal(self) -> None:
        lp = self.lp
        n = lp.n_vars
        ub_vars = np.nonzero(lp.upper_one)[0]
        m = lp.n_rows + len(ub_vars)

        ext_rows = np.zeros((m, n))
        ext_rows[: lp.n_rows] = lp.rows
        ext_rhs = np.concatenate([lp.rhs, np.ones(len(ub_vars))])
        ext_rel = list(lp.relations) + [LE] * len(ub_vars)
        for i, j in enumerate(ub_vars):
            ext_rows[lp.n_rows + i, j] = 1.0

        sigma1 = np.array([-1.0 if r == GE else 1.0 for r in ext_rel])
        is_ineq = np.array([r != EQ for r in ext_rel])
        b1 = sigma1 * ext_rhs
        sigma2 = np.where(b1 < 0, -1.0, 1.0)
        self._sigma = sigma1 * sigma2          # per-row multiplier back to declared rows
        self._b = sigma2 * b1                  # nonnegative rhs

        free_vars = np.nonzero(lp.free)[0]
        n_slack = int(is_ineq.sum())
        slack_of_row = np.full(m, -1, dtype=int)

        struct = self._sigma[:, None] * ext_rows
        blocks = [struct]
        costs = list(lp.objective)
        if len(free_vars):
            blocks.append(-struct[:, free_vars])
            costs.extend((-lp.objective[free_vars]).tolist())
        slack_block = np.zeros((m, n_slack))
        si = 0
        base = n + len(free_vars)
        for i in range(m):
            if is_ineq[i]:
                slack_block[i, si] = sigma2[i]
                slack_of_row[i] = base + si
                si += 1
        blocks.append(slack_block)
        costs.extend([0.0] * n_slack)

        needs_art = [i for i in range(m) if slack_of_row[i] < 0 or sigma2[i] < 0]
        art_block = np.zeros((m, len(needs_art)))
        art_of_row = np.full(m, -1, dtype=int)
        base = n + len(free_vars) + n_slack
        for ai, i in enumerate(needs_art):
            art_block[i, ai] = 1.0
            art_of_row[i] = base + ai
        blocks.append(art_block)
        costs.extend([0.0] * len(needs_art))

        self._A = np.concatenate(blocks, axis=1)
        self._c2 = np.array(costs)
        self._n_struct = n
        self._free_vars = free_vars
        self._slack_of_row = slack_of_row
        self._art_of_row = art_of_row
        self._row_alive = np.ones(m, dtype=bool)   # redundant rows get dropped
        self._n_ext_rows = m

        basis = np.empty(m, dtype=int)
        for i in range(m):
            basis[i] = art_of_row[i] if art_of_row[i] >= 0 else slack_of_row[i]
        self._basis = basis
        self._needs_phase1 = len(needs_art) > 0
        self._T: Optional[np.ndarray] = None
        self._phase = 0       # 0 = not started, 1/2 = active phase

    # ------------------------------------------------------------------
    # public API
    # ------------------------------------------------------------------

    def add_variable(self, objective_coef: float, row_coefs) -> None:
        """Append one nonnegative, unbounded-above structural variable.

        `row_coefs` has one entry per declared LP row. The next solve resumes
        from the current basis with the new column nonbasic.
        """
        row_coefs = np.asarray(row_coefs, dtype=float)
        if row_coefs.shape != (self.lp.n_rows,):
            raise ValueError(
                f"expected {self.lp.n_rows} row coefficients, got {row_coefs.shape}"
            )
        coefs = np.zeros(self._n_ext_rows)
        coefs[: self.lp.n_rows] = row_coefs
        internal = self._sigma * coefs

        new_idx = self._A.shape[1]
        self._A = np.concatenate([self._A, internal[:, None]], axis=1)
        self._c2 = np.concatenate([self._c2, [float(objective_coef)]])
        self._appended.append(new_idx)

        lp = self.lp
        lp.objective = np.concatenate([lp.objective, [float(objective_coef)]])
        lp.rows = np.concatenate([lp.rows, row_coefs[:, None]], axis=1)
        lp.free = np.concatenate([lp.free, [False]])
        lp.upper_one = np.concatenate([lp.upper_one, [False]])

        if self._T is not None:
            binv = self._T[:, self._identity_columns()]
            col = binv @ internal[self._row_alive]
            self._T = np.concatenate([self._T[:, :-1], col[:, None], self._T[:, -1:]], axis=1)
        self._stale = True
        self._outcome = None

    def clone(self) -> "SimplexSession":
        """Independent copy sharing nothing mutable; used to fork a solved
        master for a sibling branch."""
        import copy

        twin = object.__new__(SimplexSession)
        twin.lp = LinearProgram(
            objective=self.lp.objective.copy(),
            rows=self.lp.rows.copy(),
            relations=list(self.lp.relations),
            rhs=self.lp.rhs.copy(),
            free=self.lp.free.copy(),
            upper_one=self.lp.upper_one.copy(),
        )
        twin.trace = self.trace
        twin._outcome = self._outcome
        twin._stale = self._stale
        twin._pivots = self._pivots
        twin._appended = list(self._appended)
        for name in ("_A", "_c2", "_sigma", "_b", "_slack_of_row", "_art_of_row",
                     "_row_alive", "_basis"):
            setattr(twin, name, getattr(self, name).copy())
        twin._T = None if self._T is None else self._T.copy()
        twin._n_struct = self._n_struct
        twin._free_vars = self._free_vars
        twin._n_ext_rows = self._n_ext_rows
        twin._needs_phase1 = self._needs_phase1
        twin._phase = self._phase
        twin._last_rebuild = getattr(self, "_last_rebuild", 0)
        return twin

    def add_row(self, row_coefs, relation: str, rhs: float) -> None:
        """Append one constraint row after an Optimal solve and keep the basis.

        The new row enters with its own slack when the current point already
        satisfies it; otherwise a single artificial is installed and the next
        solve runs a short phase-1 cleanup. Branching uses this to warm-start
        a child from its parent.
        """
        if self._T is None or self._phase != 2 or self._outcome is None \
                or self._outcome.status is not LpStatus.OPTIMAL:
            raise ValueError("add_row requires a preceding Optimal solve")
        if self.lp.upper_one.any():
            raise ValueError("add_row does not support variables with upper bounds")
        if relation not in (LE, GE, EQ):
            raise ValueError(f"unknown relation {relation!r}")
        row_coefs = np.asarray(row_coefs, dtype=float)
        if row_coefs.shape != (self.lp.n_vars,):
            raise ValueError(f"expected {self.lp.n_vars} coefficients, got {row_coefs.shape}")

        lp = self.lp
        lp.rows = np.concatenate([lp.rows, row_coefs[None, :]], axis=0)
        lp.relations.append(relation)
        lp.rhs = np.concatenate([lp.rhs, [float(rhs)]])

        # the residual at the current point decides slack vs artificial, and
        # the internal sign flip keeps the new basic variable nonnegative
        sigma1 = -1.0 if relation == GE else 1.0
        primal = self._outcome.primal
        residual = sigma1 * (float(rhs) - float(row_coefs @ primal))
        needs_art = relation == EQ or residual < -1e-12
        if needs_art:
            sigma2 = -1.0 if residual < 0 else 1.0
        else:
            sigma2 = 1.0
        sigma = sigma1 * sigma2

        n_old_cols = self._A.shape[1]
        # internal coefficients of the new row over existing columns
        g_int = np.zeros(n_old_cols)
        n0 = self._n_struct
        g_int[:n0] = sigma * row_coefs[:n0]
        for t, j in enumerate(self._free_vars):
            g_int[n0 + t] = -sigma * row_coefs[j]
        for t, idx in enumerate(self._appended):
            g_int[idx] = sigma * row_coefs[n0 + t]

        n_art = 1 if needs_art else 0
        n_slack = 0 if relation == EQ else 1
        total_new = n_slack + n_art
        m_ext = self._n_ext_rows

        A = np.zeros((m_ext + 1, n_old_cols + total_new))
        A[:m_ext, :n_old_cols] = self._A
        A[m_ext, :n_old_cols] = g_int
        col = n_old_cols
        slack_idx = art_idx = -1
        if n_slack:
            slack_idx = col
            A[m_ext, col] = sigma2
            col += 1
        if n_art:
            art_idx = col
            A[m_ext, col] = 1.0
            col += 1
        self._A = A
        self._c2 = np.concatenate([self._c2, np.zeros(total_new)])
        self._sigma = np.concatenate([self._sigma, [sigma]])
        self._b = np.concatenate([self._b, [sigma2 * sigma1 * float(rhs)]])
        self._slack_of_row = np.concatenate([self._slack_of_row, [slack_idx]])
        self._art_of_row = np.concatenate([self._art_of_row, [art_idx]])
        self._row_alive = np.concatenate([self._row_alive, [True]])
        self._n_ext_rows = m_ext + 1

        # extend the tableau: old rows gain zero entries in the new columns;
        # the bottom row is the new constraint reduced by the current basis
        T = self._T
        m_live, ncols = T.shape[0], T.shape[1] - 1
        g_basic = g_int[self._basis]
        bottom = np.empty(ncols + total_new + 1)
        bottom[:ncols] = g_int[:ncols] - g_basic @ T[:, :ncols]
        if n_slack:
            bottom[ncols] = sigma2
        if n_art:
            bottom[ncols + n_slack] = 1.0
        bottom[-1] = self._b[-1] - g_basic @ T[:, -1]
        top = np.zeros((m_live, ncols + total_new + 1))
        top[:, :ncols] = T[:, :ncols]
        top[:, -1] = T[:, -1]
        self._T = np.concatenate([top, bottom[None, :]], axis=0)
        self._basis = np.concatenate([self._basis, [art_idx if needs_art else slack_idx]])
        if needs_art:
            self._phase = 1
        self._stale = True
        self._outcome = None

    def solve(self) -> LpOutcome:
        if not self._stale and self._outcome is not None:
            return self._outcome
        outcome = self._run()
        self._outcome = outcome
        self._stale = False
        return outcome

    # ------------------------------------------------------------------
    # solver core
    # ------------------------------------------------------------------

    def _alive_idx(self) -> np.ndarray:
        return np.nonzero(self._row_alive)[0]

    def _identity_columns(self) -> np.ndarray:
        """Per live row, the column whose internal vector is that row's unit vector."""
        ids = []
        for i in self._alive_idx():
            ids.append(self._art_of_row[i] if self._art_of_row[i] >= 0 else self._slack_of_row[i])
        return np.array(ids, dtype=int)

    def _live_system(self):
        alive = self._row_alive
        return self._A[alive], self._b[alive]

    def _build_tableau(self) -> None:
        A, b = self._live_system()
        self._T = np.concatenate([A, b[:, None]], axis=1)
        self._phase = 1 if self._needs_phase1 else 2

    def _rebuild_from_basis(self) -> None:
        A, b = self._live_system()
        try:
            self._T = np.linalg.solve(
                A[:, self._basis], np.concatenate([A, b[:, None]], axis=1)
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during tableau rebuild") from exc

    def _art_cols(self) -> np.ndarray:
        return self._art_of_row[self._art_of_row >= 0]

    def _phase_costs(self, phase: int) -> np.ndarray:
        if phase == 1:
            c = np.zeros(self._A.shape[1])
            c[self._art_cols()] = -1.0
            return c
        return self._c2

    def _cost_row(self, c: np.ndarray) -> np.ndarray:
        row = c[self._basis] @ self._T
        row[:-1] -= c
        return row

    def _pivot_loop(self, c: np.ndarray, barred: np.ndarray, phase: int) -> str:
        T = self._T
        cost = self._cost_row(c)
        degenerate = 0
        force_bland = False
        rebuilds = 0
        window = 1000
        window_mark = self._pivots
        window_obj = cost[-1]
        in_basis = np.zeros(self._A.shape[1], dtype=bool)
        in_basis[self._basis] = True
        while True:
            red = cost[:-1]
            # basic columns are excluded explicitly: under drift their reduced
            # cost can look negative, and re-entering one makes B singular
            eligible = np.nonzero(~barred & ~in_basis & (red < -RC_EPS))[0]
            if eligible.size == 0:
                return "optimal"
            bland = force_bland or degenerate >= BLAND_AFTER
            if bland:
                j = int(eligible[0])                       # Bland: lowest index
            else:
                j = int(eligible[np.argmin(red[eligible])])  # Dantzig, ties lowest index
            col = T[:, j]
            pos = col > PIVOT_EPS
            if not pos.any():
                return "unbounded"
            rows_idx = np.nonzero(pos)[0]
            ratios = T[rows_idx, -1] / col[rows_idx]
            if bland:
                # full Bland rule: among tied minimum ratios, leave the basic
                # variable with the lowest index (guarantees no cycling)
                tied = rows_idx[ratios <= ratios.min() + PIVOT_EPS]
                r = int(tied[np.argmin(self._basis[tied])])
            else:
                r = int(rows_idx[np.argmin(ratios)])       # ties: lowest row index
            step = T[r, -1] / T[r, j]
            degenerate = degenerate + 1 if step <= 1e-7 else 0
            piv = T[r, j]
            pr = T[r] / piv
            colj = T[:, j].copy()
            T -= np.outer(colj, pr)
            T[r] = pr
            cost -= cost[j] * pr
            leaving = self._basis[r]
            self._basis[r] = j
            in_basis[leaving] = False
            in_basis[j] = True
            self._pivots += 1
            if self.trace is not None:
                self.trace(
                    f"pivot iter={self._pivots} phase={phase} entering={j} "
                    f"leaving={leaving} objective={cost[-1]:.12g}"
                )
            if self._pivots - window_mark >= window:
                # stall watchdog: no real objective progress over a long
                # window means accumulated error or cycling; rebuild exactly
                # from the basis and pivot with Bland's rule from here on
                if cost[-1] <= window_obj + 1e-9 * (1.0 + abs(window_obj)):
                    rebuilds += 1
                    if rebuilds > 3:
                        raise NumericalFailure(
                            f"no simplex progress after {rebuilds} rebuilds; "
                            "giving up on this basis"
                        )
                    self._rebuild_from_basis()
                    self._last_rebuild = self._pivots
                    T = self._T
                    cost = self._cost_row(c)
                    force_bland = True
                window_mark = self._pivots
                window_obj = cost[-1]

    def _drive_out_artificials(self) -> None:
        art_set = set(self._art_cols().tolist())
        if not art_set:
            return
        drop_rows = []
        art_list = list(art_set)
        for r in range(self._T.shape[0]):
            if self._basis[r] not in art_set:
                continue
            row = self._T[r, :-1].copy()
            row[art_list] = 0.0
            cand = np.nonzero(np.abs(row) > PIVOT_EPS)[0]
            if cand.size == 0:
                drop_rows.append(r)
                continue
            j = int(cand[np.argmax(np.abs(row[cand]))])
            piv = self._T[r, j]
            pr = self._T[r] / piv
            colj = self._T[:, j].copy()
            self._T -= np.outer(colj, pr)
            self._T[r] = pr
            self._basis[r] = j
        if drop_rows:
            alive = self._alive_idx()
            self._row_alive[alive[drop_rows]] = False
            keep = np.ones(self._T.shape[0], dtype=bool)
            keep[drop_rows] = False
            self._T = self._T[keep]
            self._basis = self._basis[keep]

    def _run(self) -> LpOutcome:
        if self._T is None:
            self._build_tableau()
        elif self._pivots - getattr(self, "_last_rebuild", 0) > 3000:
            # long-lived sessions accumulate rank-1 update error; refresh
            self._rebuild_from_basis()
            self._last_rebuild = self._pivots
        barred = np.zeros(self._A.shape[1], dtype=bool)
        barred[self._art_cols()] = True

        if self._phase == 1:
            status = self._pivot_loop(self._phase_costs(1), barred, 1)
            if status == "unbounded":
                raise NumericalFailure("phase 1 reported unbounded")
            _, y = self._recompute(self._phase_costs(1))
            _, b = self._live_system()
            if -float(y @ b) > FEAS_EPS:
                return self._infeasible_outcome(y)
            self._drive_out_artificials()
            self._phase = 2

        for _ in range(MAX_REFRESH + 1):
            status = self._pivot_loop(self._phase_costs(2), barred, 2)
            if status == "unbounded":
                return LpOutcome(status=LpStatus.UNBOUNDED)
            x_b, y = self._recompute(self._phase_costs(2))
            if self._basis_consistent(x_b, y):
                return self._optimal_outcome(x_b, y)
            self._rebuild_from_basis()
        raise NumericalFailure("tableau refresh failed to restore optimality")

    def _recompute(self, c: np.ndarray):
        """Exact primal/dual values for the current basis from the original data."""
        A, b = self._live_system()
        B = A[:, self._basis]
        try:
            x_b = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[self._basis])
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        return x_b, y

    def _basis_consistent(self, x_b: np.ndarray, y: np.ndarray) -> bool:
        if np.any(x_b < -1e-8):
            return False
        A, _ = self._live_system()
        red = y @ A - self._c2
        red[self._art_cols()] = 0.0
        return bool(np.all(red > -1e-8))

    def _primal_vector(self, x_b: np.ndarray) -> np.ndarray:
        full = np.zeros(self._A.shape[1])
        full[self._basis] = x_b
        x = np.concatenate([full[: self._n_struct], full[self._appended]]) \
            if self._appended else full[: self._n_struct].copy()
        neg = full[self._n_struct: self._n_struct + len(self._free_vars)]
        for t, j in enumerate(self._free_vars):
            x[j] -= neg[t]
        nonfree = ~self.lp.free
        x[nonfree] = np.clip(x[nonfree], 0.0, None)   # shave numerical dust
        return x

    def _signed_row_vector(self, y: np.ndarray) -> np.ndarray:
        full = np.zeros(self._n_ext_rows)
        full[self._row_alive] = y
        return self._sigma * full

    def _optimal_outcome(self, x_b: np.ndarray, y: np.ndarray) -> LpOutcome:
        primal = self._primal_vector(x_b)
        return LpOutcome(
            status=LpStatus.OPTIMAL,
            objective=float(self.lp.objective @ primal),
            primal=primal,
            duals=self._signed_row_vector(y)[: self.lp.n_rows],
        )

    def _infeasible_outcome(self, y: np.ndarray) -> LpOutcome:
        signed = self._signed_row_vector(y)
        if np.any(np.abs(signed[self.lp.n_rows:]) > 1e-7):
            raise NumericalFailure(
                "infeasibility certificate involves variable upper bounds; "
                "declare those bounds as explicit rows"
            )
        return LpOutcome(status=LpStatus.INFEASIBLE, farkas=signed[: self.lp.n_rows])


def solve_lp(lp: LinearProgram, trace: Optional[Callable[[str], None]] = None) -> LpOutcome:
    """One-shot solve. Deterministic for a fixed input."""
    return SimplexSession(lp, trace=trace).solve()


def render_lp_text(lp: LinearProgram) -> str:
    """Human-readable LP listing for external cross-checking."""

    def term(coef: float, j: int) -> str:
        return f"{coef:+.12g} x{j}"

    lines = ["Maximize"]
    obj = " ".join(term(c, j) for j, c in enumerate(lp.objective) if c != 0.0) or "0"
    lines.append(f"  obj: {obj}")
    lines.append("Subject To")
    for i in range(lp.n_rows):
        body = " ".join(term(c, j) for j, c in enumerate(lp.rows[i]) if c != 0.0) or "0"
        lines.append(f"  r{i}: {body} {lp.relations[i]} {lp.rhs[i]:.12g}")
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo = "-inf" if lp.free[j] else "0"
        hi = "1" if lp.upper_one[j] else "+inf"
        lines.append(f"  {lo} <= x{j} <= {hi}")
    return "\n".join(lines)
