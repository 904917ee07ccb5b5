"""Branch-and-price driver: node tree, column generation, bounding, incumbents.

Search order is best-bound with depth-first plunging: after branching, the
child that pins the attacker response is processed immediately; its sibling
goes to a best-bound heap. Columns live in one global pool shared by all
nodes. An optional dual-smoothing stabilizer damps the pricing duals.
"""

from __future__ import annotations

import heapq
import time
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .master import (
    FormulationSpec,
    MasterLayout,
    build_master,
    build_master_sg,
    column_coefficients,
    layout_for,
    sg_layout_for,
)
from .model import (
    Column,
    GameSG,
    GameSSG,
    MixedStrategy,
    Response,
    SolveReport,
    STATUS_OPTIMAL,
    STATUS_TIME_LIMIT,
    validate,
)
from .pricing import (
    PRICE_TOL,
    DualView,
    farkas_price,
    greedy_columns,
    initial_columns,
    price_exact,
    price_greedy,
    reduced_cost,
)
from .simplexlp import LpStatus, NumericalFailure, SimplexSession

INT_TOL = 1e-6            # integrality tolerance on the response variables
OBJ_TOL = 1e-7            # objective comparison / pruning tolerance


class _TimeUp(Exception):
    pass


@dataclass
class SolveOptions:
    """Knobs of one solve. `init_cols` defaults to the number of targets."""

    init_cols: Optional[int] = None
    pricer_cols: int = 1
    delta: Optional[float] = None
    time_limit_s: float = 3600.0
    seed: int = 0
    node_log: Optional[Callable[[dict], None]] = None
    lp_trace: Optional[Callable[[str], None]] = None


@dataclass
class Node:
    """One branch-and-bound node: response fixings plus bookkeeping."""

    fixings: dict
    parent_bound: float
    depth: int
    id: int = -1
    parent_id: Optional[int] = None
    branched_fix: Optional[tuple] = None     # ((attacker, target), value)


@dataclass
class StabilizerState:
    """Dual-smoothing state: fixed weight, previous stabilized duals, and the
    misprice counter driving the effective weight."""

    delta: float
    previous: Optional[DualView] = None
    misprices: int = 1

    def effective_weight(self) -> float:
        return max(0.0, 1.0 - self.misprices * (1.0 - self.delta))


@dataclass
class RootInfo:
    """Result of running column generation at the root only."""

    value: float
    columns_generated: int
    pricing_iterations: int
    farkas_rounds: int
    generated: List[Column] = field(default_factory=list)


@dataclass
class _NodeContext:
    """A live master session reused along a plunge chain or cached for a
    sibling. `c0` is the pool size at the original build (fixes the variable
    layout); `n_pool` counts the pool columns the session has seen."""

    session: SimplexSession
    layout: MasterLayout
    c0: int
    n_pool: int


def _select_branch(q: np.ndarray, p: np.ndarray) -> Tuple[int, int]:
    """Branching variable: the largest-probability attacker with a fractional
    response; within it the response closest to one half (ties: lowest)."""
    frac = np.abs(q - np.round(q)) > INT_TOL
    ks = [k for k in range(q.shape[0]) if frac[k].any()]
    if not ks:
        raise ValueError("no fractional response variable to branch on")
    k = min(ks, key=lambda kk: (-p[kk], kk))
    js = np.nonzero(frac[k])[0]
    j = int(min(js, key=lambda jj: (abs(q[k, jj] - 0.5), jj)))
    return k, j


def branch(node: Node, q_values: np.ndarray, p: np.ndarray) -> Tuple[Node, Node]:
    """Children of a node with fractional responses: fixed-to-1 child first."""
    k, j = _select_branch(q_values, p)
    fix1 = dict(node.fixings)
    fix1[(k, j)] = 1
    fix0 = dict(node.fixings)
    fix0[(k, j)] = 0
    child1 = Node(fix1, node.parent_bound, node.depth + 1,
                  parent_id=node.id, branched_fix=((k, j), 1))
    child0 = Node(fix0, node.parent_bound, node.depth + 1,
                  parent_id=node.id, branched_fix=((k, j), 0))
    return child1, child0


class _Search:
    def __init__(self, g: GameSSG, spec: FormulationSpec, opts: SolveOptions):
        self.g = validate(g)
        self.spec = spec
        self.opts = opts
        self.deadline = time.perf_counter() + opts.time_limit_s
        n_init = opts.init_cols if opts.init_cols is not None else self.g.n_targets
        self.pool: List[Column] = initial_columns(self.g, n_init, opts.seed)
        self.pool_set = {c.protected for c in self.pool}
        self.generated: List[Column] = []
        self.incumbent: Optional[MixedStrategy] = None
        self.incumbent_value = -np.inf
        self.nodes = 0
        self.pricing_iterations = 0
        self.farkas_rounds = 0
        self.root_lp: Optional[float] = None
        self.heap: list = []
        self._push_count = 0
        self._next_id = 0
        self._interrupted_bound: Optional[float] = None
        self._ctx_cache: "OrderedDict[int, _NodeContext]" = OrderedDict()

    # -- helpers ------------------------------------------------------

    def _check_time(self) -> None:
        if time.perf_counter() > self.deadline:
            raise _TimeUp()

    def _append_column(self, ctx: _NodeContext, col: Column) -> None:
        self.pool.append(col)
        self.pool_set.add(col.protected)
        self.generated.append(col)
        ctx.session.add_variable(0.0, column_coefficients(self.g, ctx.layout, col))
        ctx.n_pool += 1

    def _plain_round(self, ctx: _NodeContext, duals: DualView) -> int:
        """Pricing cascade under the true duals: greedy batch first, exact
        when the greedy finds nothing new; only the exact run proves
        optimality (return 0)."""
        cands = greedy_columns(self.g, duals, self.opts.pricer_cols)
        fresh = [
            (c, v) for c, v in cands
            if v > PRICE_TOL and c.protected not in self.pool_set
        ][: self.opts.pricer_cols]
        if fresh:
            for col, _ in fresh:
                self._append_column(ctx, col)
            return len(fresh)
        col, zeta = price_exact(self.g, duals)
        if zeta <= PRICE_TOL:
            return 0
        if col.protected in self.pool_set:
            raise NumericalFailure(
                "exact pricing returned an existing column with positive "
                "reduced cost; master duals are inconsistent"
            )
        self._append_column(ctx, col)
        return 1

    def _pricing_round(
        self,
        ctx: _NodeContext,
        duals: DualView,
        stab: Optional[StabilizerState],
    ) -> int:
        """Run one pricing round; returns the number of columns added
        (0 means LP optimality over the full column set is proved)."""
        self.pricing_iterations += 1
        if stab is None:
            return self._plain_round(ctx, duals)
        if stab.previous is None:
            stab.previous = duals
        while True:
            weight = stab.effective_weight()
            if weight >= 1.0 or weight <= 0.0:
                # smoothing degenerate (weight 1) or exhausted by misprices
                # (weight 0): decide under the true duals, which also proves
                # termination when nothing improves
                added = self._plain_round(ctx, duals)
                if added:
                    stab.misprices = 1
                    stab.previous = duals
                return added
            smoothed = duals.blend(stab.previous, weight, self.g)
            col, value = price_greedy(self.g, smoothed)
            if value <= PRICE_TOL:
                col, value = price_exact(self.g, smoothed)
            if (
                value > PRICE_TOL
                and col.protected not in self.pool_set
                and reduced_cost(col, duals) > PRICE_TOL
            ):
                self._append_column(ctx, col)
                stab.misprices = 1
                stab.previous = smoothed
                return 1
            # misprice: the smoothed column does not improve the true LP
            stab.misprices += 1

    def _node_colgen(self, node: Node, ctx: Optional[_NodeContext] = None):
        """Column generation to LP optimality at one node.

        Returns (outcome, context) or None when the node is infeasible over
        the whole column set (proved by Farkas pricing). A context inherited
        from the parent (plunging) or the sibling cache resumes that basis
        instead of solving from scratch; numerical trouble in a resumed
        session falls back to a fresh build.
        """
        if ctx is not None:
            try:
                return self._node_colgen_inner(node, ctx)
            except NumericalFailure:
                pass        # drifted warm basis: rebuild this node cold
        lp = build_master(self.g, self.pool, self.spec, node.fixings)
        c0 = len(self.pool)
        layout = layout_for(self.g, c0, self.spec, len(node.fixings))
        fresh = _NodeContext(SimplexSession(lp, trace=self.opts.lp_trace), layout, c0, c0)
        return self._node_colgen_inner(node, fresh)

    def _node_colgen_inner(self, node: Node, ctx: _NodeContext):
        g = self.g
        for col in self.pool[ctx.n_pool:]:   # columns found since the snapshot
            ctx.session.add_variable(0.0, column_coefficients(g, ctx.layout, col))
            ctx.n_pool += 1
        out = ctx.session.solve()
        while out.status is LpStatus.INFEASIBLE:
            self._check_time()
            self.farkas_rounds += 1
            view = DualView.from_ray(g, out.farkas, ctx.layout)
            col = farkas_price(g, view)
            if col is None:
                return None
            if col.protected in self.pool_set:
                raise NumericalFailure("Farkas pricing returned an existing column")
            self._append_column(ctx, col)
            out = ctx.session.solve()
        if out.status is LpStatus.UNBOUNDED:
            raise NumericalFailure("master LP is unbounded; formulation is broken")
        stab = None if self.opts.delta is None else StabilizerState(self.opts.delta)
        while True:
            self._check_time()
            duals = DualView.from_outcome(g, out, ctx.layout)
            added = self._pricing_round(ctx, duals, stab)
            if added == 0:
                return out, ctx
            out = ctx.session.solve()

    def _support_and_coverage(self, out, layout: MasterLayout, c0: int):
        primal = out.primal
        extra = len(self.pool) - c0
        x = np.concatenate([primal[:c0], primal[layout.n_vars: layout.n_vars + extra]])
        support = [(self.pool[i], float(x[i])) for i in np.nonzero(x > 1e-9)[0]]
        total = sum(prob for _, prob in support)
        support = tuple((col, prob / total) for col, prob in support)
        cov = np.zeros(self.g.n_targets)
        for col, prob in support:
            cov += prob * col.as_array()
        return support, cov

    def _extract(self, out, layout: MasterLayout, c0: int) -> MixedStrategy:
        support, cov = self._support_and_coverage(out, layout, c0)
        q = out.primal[layout.q_vars].reshape(self.g.n_attackers, self.g.n_targets)
        responses = []
        for k in range(self.g.n_attackers):
            j = int(np.argmax(q[k]))
            responses.append(Response(
                target=j,
                defender_value=float(self.g.defender_span[k, j] * cov[j] + self.g.d_unprot[k, j]),
                attacker_value=float(self.g.attacker_span[k, j] * cov[j] + self.g.a_unprot[k, j]),
            ))
        return MixedStrategy(support=support, responses=tuple(responses))

    def _round_incumbent(self, out, layout: MasterLayout, c0: int) -> None:
        """Primal heuristic: the node coverage is itself a feasible mixed
        strategy; score it with exact attacker best responses (ties broken in
        the defender's favor) and keep it when it beats the incumbent."""
        support, cov = self._support_and_coverage(out, layout, c0)
        g = self.g
        value = 0.0
        responses = []
        for k in range(g.n_attackers):
            att = g.attacker_span[k] * cov + g.a_unprot[k]
            dfn = g.defender_span[k] * cov + g.d_unprot[k]
            tied = np.nonzero(att >= att.max())[0]
            j = int(tied[np.argmax(dfn[tied])])
            value += g.p[k] * dfn[j]
            responses.append(Response(j, float(dfn[j]), float(att[j])))
        if value > self.incumbent_value:
            self.incumbent_value = value
            self.incumbent = MixedStrategy(support=support, responses=tuple(responses))

    def _log(self, node: Node, lp_value, columns_added: int, pruned: bool) -> None:
        if self.opts.node_log is None:
            return
        fix = None
        if node.branched_fix is not None:
            (k, j), val = node.branched_fix
            fix = {"attacker": k, "target": j, "value": val}
        self.opts.node_log({
            "id": node.id,
            "parent": node.parent_id,
            "fixing": fix,
            "lp_value": lp_value,
            "columns_added": columns_added,
            "pruned": pruned,
        })

    def _child_context(self, ctx: _NodeContext, child: Node,
                       session: Optional[SimplexSession] = None) -> _NodeContext:
        """Extend a solved session with the child's fixing row (warm start)."""
        (k, j), val = child.branched_fix
        layout = ctx.layout
        session = session if session is not None else ctx.session
        coefs = np.zeros(session.lp.n_vars)
        coefs[layout.q_var(k, j)] = 1.0
        if val == 0:
            session.add_row(coefs, "<=", 0.0)
        else:
            session.add_row(coefs, ">=", 1.0)
        child_layout = MasterLayout(
            n_targets=layout.n_targets,
            n_attackers=layout.n_attackers,
            n_cols=layout.n_cols,
            n_strengthen=layout.n_strengthen,
            n_fixings=layout.n_fixings + 1,
        )
        return _NodeContext(session, child_layout, ctx.c0, ctx.n_pool)

    def _cache_context(self, node_id: int, ctx: _NodeContext) -> None:
        self._ctx_cache[node_id] = ctx
        while len(self._ctx_cache) > 64:
            self._ctx_cache.popitem(last=False)

    def _process(self, node: Node, ctx: Optional[_NodeContext]):
        """Solve one node; returns (plunge child, its context) or (None, None)."""
        self.nodes += 1
        self._interrupted_bound = node.parent_bound
        cols_before = len(self.generated)
        result = self._node_colgen(node, ctx)
        if result is None:
            self._log(node, None, len(self.generated) - cols_before, True)
            return None, None
        out, ctx = result
        bound = out.objective
        if node.id == 0:
            self.root_lp = bound
        added = len(self.generated) - cols_before
        self._round_incumbent(out, ctx.layout, ctx.c0)
        if bound <= self.incumbent_value + OBJ_TOL:
            self._log(node, bound, added, True)
            return None, None
        q = out.primal[ctx.layout.q_vars].reshape(self.g.n_attackers, self.g.n_targets)
        if not (np.abs(q - np.round(q)) > INT_TOL).any():
            if bound > self.incumbent_value:
                self.incumbent_value = bound
                self.incumbent = self._extract(out, ctx.layout, ctx.c0)
            self._log(node, bound, added, False)
            return None, None
        self._log(node, bound, added, False)
        child1, child0 = branch(node, q, self.g.p)
        child1.parent_bound = bound
        child0.parent_bound = bound
        child1.id = self._next_id = self._next_id + 1
        child0.id = self._next_id = self._next_id + 1
        self._cache_context(child0.id, self._child_context(ctx, child0, ctx.session.clone()))
        self._push_count += 1
        heapq.heappush(self.heap, (-bound, self._push_count, child0))
        return child1, self._child_context(ctx, child1)

    def _open_bounds(self) -> List[float]:
        bounds = [node.parent_bound for _, _, node in self.heap]
        if self._interrupted_bound is not None:
            bounds.append(self._interrupted_bound)
        return bounds

    def run(self) -> Tuple[Optional[MixedStrategy], SolveReport]:
        start = time.perf_counter()
        status = STATUS_OPTIMAL
        try:
            current: Optional[Node] = Node({}, np.inf, 0, id=0)
            ctx: Optional[_NodeContext] = None
            while current is not None or self.heap:
                if current is None:
                    _, _, node = heapq.heappop(self.heap)
                    cached = self._ctx_cache.pop(node.id, None)
                    if node.parent_bound <= self.incumbent_value + OBJ_TOL:
                        continue
                    current = node
                    ctx = cached        # warm when the sibling fork survived
                node, current = current, None
                self._check_time()
                self._interrupted_bound = None
                current, ctx = self._process(node, ctx)
            best_bound = self.incumbent_value
        except _TimeUp:
            status = STATUS_TIME_LIMIT
            bounds = self._open_bounds() + [self.incumbent_value]
            best_bound = max(bounds)
        elapsed = time.perf_counter() - start

        objective = None if self.incumbent is None else self.incumbent_value
        gap = None
        if self.root_lp is not None and objective is not None:
            gap = 100.0 * (self.root_lp - objective) / max(1.0, abs(objective))
        report = SolveReport(
            status=status,
            objective=objective,
            time_s=elapsed,
            nodes=self.nodes,
            root_lp_value=self.root_lp,
            root_gap_pct=gap,
            columns_generated=len(self.generated),
            pricing_iterations=self.pricing_iterations,
            formulation=self.spec.base,
            cuts=self.spec.cuts_tag,
            best_bound=None if not np.isfinite(best_bound) else float(best_bound),
            farkas_rounds=self.farkas_rounds,
        )
        return self.incumbent, report


def solve(
    g: GameSSG,
    spec: FormulationSpec,
    opts: Optional[SolveOptions] = None,
) -> Tuple[Optional[MixedStrategy], SolveReport]:
    """Solve a security-game instance to a strong Stackelberg equilibrium.

    Returns the optimal mixed strategy and a metrics report; on hitting the
    time limit the best incumbent is returned with the remaining bound in
    `report.best_bound`.
    """
    return _Search(g, spec, opts or SolveOptions()).run()


def root_relaxation(
    g: GameSSG,
    spec: FormulationSpec,
    opts: Optional[SolveOptions] = None,
) -> RootInfo:
    """Column generation at the root only; no branching."""
    search = _Search(g, spec, opts or SolveOptions())
    result = search._node_colgen(Node({}, np.inf, 0, id=0))
    if result is None:
        raise NumericalFailure("root master is infeasible")
    out, _ = result
    return RootInfo(
        value=float(out.objective),
        columns_generated=len(search.generated),
        pricing_iterations=search.pricing_iterations,
        farkas_rounds=search.farkas_rounds,
        generated=list(search.generated),
    )


def solve_sg(
    g: GameSG,
    spec: FormulationSpec,
    opts: Optional[SolveOptions] = None,
) -> Tuple[np.ndarray, SolveReport]:
    """Static mode for generic games: branch and bound on the full master,
    no pricing. Returns the leader mixed strategy and a report."""
    opts = opts or SolveOptions()
    g = validate(g)
    spec = replace(spec, mode="sg")
    deadline = time.perf_counter() + opts.time_limit_s
    start = time.perf_counter()
    incumbent_x: Optional[np.ndarray] = None
    incumbent_value = -np.inf
    root_lp: Optional[float] = None
    nodes = 0
    status = STATUS_OPTIMAL

    heap: list = []
    push_count = 0
    current: Optional[Node] = Node({}, np.inf, 0, id=0)
    next_id = 0
    try:
        while current is not None or heap:
            if current is None:
                _, _, node = heapq.heappop(heap)
                if node.parent_bound <= incumbent_value + OBJ_TOL:
                    continue
                current = node
            node, current = current, None
            if time.perf_counter() > deadline:
                raise _TimeUp()
            nodes += 1
            layout = sg_layout_for(g, spec, len(node.fixings))
            lp = build_master_sg(g, spec, node.fixings)
            out = SimplexSession(lp, trace=opts.lp_trace).solve()
            if out.status is LpStatus.INFEASIBLE:
                continue
            if out.status is LpStatus.UNBOUNDED:
                raise NumericalFailure("static master is unbounded")
            bound = out.objective
            if node.id == 0:
                root_lp = bound
            if bound <= incumbent_value + OBJ_TOL:
                continue
            q = out.primal[layout.q_vars].reshape(g.n_attackers, g.n_follower)
            if not (np.abs(q - np.round(q)) > INT_TOL).any():
                if bound > incumbent_value:
                    incumbent_value = bound
                    incumbent_x = out.primal[layout.x_vars].copy()
                continue
            child1, child0 = branch(node, q, g.p)
            child1.parent_bound = bound
            child0.parent_bound = bound
            child1.id = next_id = next_id + 1
            child0.id = next_id = next_id + 1
            push_count += 1
            heapq.heappush(heap, (-bound, push_count, child0))
            current = child1
    except _TimeUp:
        status = STATUS_TIME_LIMIT

    elapsed = time.perf_counter() - start
    objective = None if incumbent_x is None else float(incumbent_value)
    gap = None
    if root_lp is not None and objective is not None:
        gap = 100.0 * (root_lp - objective) / max(1.0, abs(objective))
    report = SolveReport(
        status=status,
        objective=objective,
        time_s=elapsed,
        nodes=nodes,
        root_lp_value=root_lp,
        root_gap_pct=gap,
        columns_generated=0,
        pricing_iterations=0,
        formulation=spec.base,
        cuts=spec.cuts_tag,
        best_bound=objective if status == STATUS_OPTIMAL else None,
    )
    return incumbent_x, report
