"""Ground-truth brute-force solvers used by tests and the verification CLI.

The multiple-LPs method enumerates every budget-feasible pure strategy and
every attacker response profile; for each profile it solves one LP that
forces the profile to be a best response and maximizes the defender value.
The best feasible profile realizes the strong Stackelberg equilibrium,
including the leader-favoring tie-break.

LPs here are solved with scipy's HiGHS backend on purpose: the oracle must
not share a code path with the simplex kernel it is used to check.
"""

from __future__ import annotations

from itertools import product
from typing import List, Tuple

import numpy as np
from scipy.optimize import linprog

from .model import Column, GameSSG, MixedStrategy, Response, validate

ENUM_MAX_TARGETS = 22
ORACLE_MAX_TARGETS = 10
ORACLE_MAX_ATTACKERS = 3
TIE_SLACK = 1e-9          # best-response rows get this slack so ties survive


class SizeGuard(ValueError):
    """Instance too large for brute-force enumeration."""


def enumerate_P(g: GameSSG) -> List[Column]:
    """All budget-feasible incidence vectors, in ascending bitmask order."""
    n = g.n_targets
    if n > ENUM_MAX_TARGETS:
        raise SizeGuard(f"enumerate_P supports up to {ENUM_MAX_TARGETS} targets, got {n}")
    w = np.asarray(g.w, dtype=float)
    out: List[Column] = []
    for mask in range(1 << n):
        bits = tuple((mask >> j) & 1 for j in range(n))
        cost = float(w[np.nonzero(bits)[0]].sum()) if mask else 0.0
        if cost <= g.budget + 1e-9:
            out.append(Column(bits))
    return out


def solve_multiple_lps(g: GameSSG) -> Tuple[MixedStrategy, float]:
    """Strong Stackelberg equilibrium by full enumeration (small instances).

    For every response profile, one LP over the distribution on pure
    strategies maximizes the defender value subject to each profile target
    being attacker-optimal. Infeasible profiles are skipped.
    """
    g = validate(g)
    n, K = g.n_targets, g.n_attackers
    if n > ORACLE_MAX_TARGETS:
        raise SizeGuard(f"oracle supports up to {ORACLE_MAX_TARGETS} targets, got {n}")
    if K > ORACLE_MAX_ATTACKERS:
        raise SizeGuard(f"oracle supports up to {ORACLE_MAX_ATTACKERS} attacker types, got {K}")

    cols = enumerate_P(g)
    P = np.array([c.protected for c in cols], dtype=float)       # (C, n)
    cov_of_x = P                                                  # coverage_j = P[:, j] @ x
    dD, dA = g.defender_span, g.attacker_span

    best_value = -np.inf
    best: Tuple = ()
    for profile in product(range(n), repeat=K):
        # objective: maximize sum_k p_k (dD[k, jk] cov_{jk} + d_unprot[k, jk])
        c = np.zeros(len(cols))
        const = 0.0
        for k, jk in enumerate(profile):
            c += g.p[k] * dD[k, jk] * cov_of_x[:, jk]
            const += g.p[k] * g.d_unprot[k, jk]
        a_ub = []
        b_ub = []
        for k, jk in enumerate(profile):
            for j in range(n):
                if j == jk:
                    continue
                # attacker utility at jk >= at j, within the tie slack
                row = dA[k, j] * cov_of_x[:, j] - dA[k, jk] * cov_of_x[:, jk]
                a_ub.append(row)
                b_ub.append(g.a_unprot[k, jk] - g.a_unprot[k, j] + TIE_SLACK)
        res = linprog(
            -c,
            A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.ones((1, len(cols))),
            b_eq=np.array([1.0]),
            bounds=(0, None),
            method="highs",
        )
        if not res.success:
            continue
        value = float(c @ res.x + const)
        if value > best_value:
            best_value = value
            best = (profile, res.x.copy())

    if not best:
        raise RuntimeError("no feasible response profile; instance is malformed")
    profile, x = best
    support = tuple(
        (cols[i], float(x[i])) for i in np.nonzero(x > 1e-9)[0]
    )
    total = sum(prob for _, prob in support)
    support = tuple((col, prob / total) for col, prob in support)
    cov = np.zeros(n)
    for col, prob in support:
        cov += prob * col.as_array()
    responses = tuple(
        Response(
            target=jk,
            defender_value=float(dD[k, jk] * cov[jk] + g.d_unprot[k, jk]),
            attacker_value=float(dA[k, jk] * cov[jk] + g.a_unprot[k, jk]),
        )
        for k, jk in enumerate(profile)
    )
    strategy = MixedStrategy(support=support, responses=responses)
    return strategy, float(best_value)
