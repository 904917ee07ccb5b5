"""Deterministic instance generation and JSON file I/O.

Payoffs are uncorrelated random integers: rewards in [5, 10], penalties in
[0, 5]. Costs are integers in [1, 100]. Instance h of a series of H gets
budget h/(H+1) of the total cost, plus a fractional offset in [0.05, 0.95]
so the budget is never integral.
"""

from __future__ import annotations

import json
import os
from typing import Union

import numpy as np

from .model import GameSG, GameSSG, validate


class ParseError(ValueError):
    """An instance file is malformed; the message names the key or row."""


def generate(n: int, k: int, h: int, H: int = 5, seed: int = 0) -> GameSSG:
    """One seeded instance of the (n, k, h) grid cell.

    All draws come from a single generator seeded by (seed, n, k, h, H), in
    documented order: per attacker, per target, the defender reward, defender
    penalty, attacker reward, attacker penalty; then the n costs; then the
    budget offset. Type probabilities are uniform.
    """
    if not 1 <= h <= H:
        raise ValueError(f"instance index h={h} outside 1..{H}")
    rng = np.random.default_rng((seed, n, k, h, H))
    d_prot = np.zeros((k, n))
    d_unprot = np.zeros((k, n))
    a_prot = np.zeros((k, n))
    a_unprot = np.zeros((k, n))
    for kk in range(k):
        for j in range(n):
            d_prot[kk, j] = rng.integers(5, 11)
            d_unprot[kk, j] = rng.integers(0, 6)
            a_unprot[kk, j] = rng.integers(5, 11)
            a_prot[kk, j] = rng.integers(0, 6)
    w = rng.integers(1, 101, size=n).astype(float)
    delta = float(rng.uniform(0.05, 0.95))
    budget = (h / (H + 1)) * float(w.sum()) + delta

    # 12-decimal uniform probabilities; the last entry absorbs the rounding
    # so the vector sums to 1.0 exactly.
    head = [round(1.0 / k, 12)] * (k - 1)
    p = np.array(head + [1.0 - sum(head)])

    return validate(GameSSG(
        n_targets=n,
        n_attackers=k,
        p=p,
        d_prot=d_prot,
        d_unprot=d_unprot,
        a_prot=a_prot,
        a_unprot=a_unprot,
        w=w,
        budget=budget,
        seed=seed,
    ))


def instance_filename(n: int, k: int, h: int, seed: int) -> str:
    return f"ssg_n{n}_k{k}_h{h}_s{seed}.json"


def save(instance: Union[GameSSG, GameSG], path: str) -> None:
    """Write an instance as JSON. Identical instances yield identical bytes."""
    if isinstance(instance, GameSSG):
        payload = {
            "n_targets": instance.n_targets,
            "n_attackers": instance.n_attackers,
            "p": instance.p.tolist(),
            "d_prot": instance.d_prot.tolist(),
            "d_unprot": instance.d_unprot.tolist(),
            "a_prot": instance.a_prot.tolist(),
            "a_unprot": instance.a_unprot.tolist(),
            "w": instance.w.tolist(),
            "budget": instance.budget,
            "seed": instance.seed,
        }
    elif isinstance(instance, GameSG):
        payload = {
            "R": instance.R.tolist(),
            "C": instance.C.tolist(),
            "p": instance.p.tolist(),
        }
    else:
        raise TypeError(f"cannot save {type(instance).__name__}")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _require(data: dict, key: str):
    if key not in data:
        raise ParseError(f"missing key {key!r}")
    return data[key]


def _matrix(data: dict, key: str, n_rows: int, n_cols: int) -> np.ndarray:
    raw = _require(data, key)
    if len(raw) != n_rows:
        raise ParseError(f"{key} has {len(raw)} rows, expected {n_rows}")
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != n_cols:
            raise ParseError(f"{key} row {i} has length {len(row) if isinstance(row, list) else 'scalar'}, expected {n_cols}")
    return np.array(raw, dtype=float)


def load(path: str) -> Union[GameSSG, GameSG]:
    """Read an instance file; the inverse of `save` up to probability
    normalization (already-normalized vectors reload bit-exactly)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError("top-level JSON object expected")

    if "R" in data or "C" in data:
        raw_r = _require(data, "R")
        raw_c = _require(data, "C")
        p = np.array(_require(data, "p"), dtype=float)
        try:
            R = np.array(raw_r, dtype=float)
            C = np.array(raw_c, dtype=float)
        except ValueError as exc:
            raise ParseError(f"payoff tensor is ragged: {exc}") from exc
        if R.ndim != 3:
            raise ParseError(f"R must have 3 dimensions, got {R.ndim}")
        return validate(GameSG(R=R, C=C, p=p))

    n = int(_require(data, "n_targets"))
    k = int(_require(data, "n_attackers"))
    p = np.array(_require(data, "p"), dtype=float)
    if p.shape != (k,):
        raise ParseError(f"p has length {p.shape[0] if p.ndim else 0}, expected {k}")
    tables = {name: _matrix(data, name, k, n)
              for name in ("d_prot", "d_unprot", "a_prot", "a_unprot")}
    w_raw = _require(data, "w")
    if len(w_raw) != n:
        raise ParseError(f"w has length {len(w_raw)}, expected {n}")
    budget = float(_require(data, "budget"))
    seed = int(data.get("seed", 0))
    return validate(GameSSG(
        n_targets=n,
        n_attackers=k,
        p=p,
        d_prot=tables["d_prot"],
        d_unprot=tables["d_unprot"],
        a_prot=tables["a_prot"],
        a_unprot=tables["a_unprot"],
        w=np.array(w_raw, dtype=float),
        budget=budget,
        seed=seed,
    ))
