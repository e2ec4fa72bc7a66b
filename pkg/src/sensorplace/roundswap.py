"""Rounding of fractional placements and single-swap local search."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .relaxation import solve_relaxation

log = logging.getLogger(__name__)

GAP_EPS = 1e-9
# bounds are lowered by this relative amount to absorb round-off
BOUND_SAFETY = 1e-10
MAX_SWAP_EVALS = 100_000
BAND = (0.1, 0.9)
MAX_ROUND_NODES = 1_000_000


def _descending(z_star):
    # descending z*, ties by ascending node index
    return np.lexsort((np.arange(len(z_star)), -np.asarray(z_star)))


def round_placement(z_star, m, adjacency, fixed=(), excluded=(), max_nodes=MAX_ROUND_NODES):
    """Select ``m`` nodes by descending ``z*``, skipping adjacency violations.

    If the greedy pass gets stuck below ``m`` it backtracks depth-first in the
    same order, so the result is the greedy one whenever that is feasible.
    """
    z_star = np.asarray(z_star, dtype=float)
    neighbors = adjacency.neighbors
    chosen = []
    for j in sorted(set(fixed)):
        if neighbors[j] & set(chosen):
            raise InfeasibleError(f"fixed sensors {sorted(neighbors[j] & set(chosen))} and {j} share a link")
        chosen.append(j)
    if len(chosen) > m:
        raise InfeasibleError(f"{len(chosen)} fixed sensors exceed budget m={m}")
    banned = set(excluded) | set(chosen)
    order = [int(j) for j in _descending(z_star) if int(j) not in banned]
    blocked = set()
    for j in chosen:
        blocked |= neighbors[j]
    budget = [max_nodes]

    def extend(start, picked, blocked):
        if len(picked) == m:
            return picked
        if len(order) - start < m - len(picked):
            return None
        for pos in range(start, len(order)):
            j = order[pos]
            if j in blocked:
                continue
            budget[0] -= 1
            if budget[0] < 0:
                return None
            found = extend(pos + 1, picked + [j], blocked | neighbors[j])
            if found is not None:
                return found
        return None

    result = extend(0, chosen, blocked)
    if result is None:
        why = "search budget exhausted" if budget[0] < 0 else "no feasible placement exists"
        raise InfeasibleError(f"cannot place {m} sensors without two sharing a link ({why})")
    z = np.zeros(z_star.size)
    z[result] = 1.0
    return z


@dataclass
class SwapResult:
    z: np.ndarray
    value: float
    evaluations: int
    accepted: int
    trace: list = field(default_factory=list)  # objective after each accepted swap


def swap_improve(z_hat, z_star, f, adjacency, fixed=(), max_evals=MAX_SWAP_EVALS,
                 band=BAND, excluded=()):
    """First-improvement single swaps restricted to the fractional band of ``z*``.

    Removal candidates are scanned by ascending ``z*``, insertion candidates
    by descending ``z*``. Swaps with ``f(new) <= f(current)`` are accepted
    and the pass restarts; lateral moves back to a visited placement are
    rejected. Stops after a pass without an accepted swap or after
    ``max_evals`` objective evaluations. ``band=None`` lifts the band filter;
    ``excluded`` nodes are never inserted.
    """
    z = np.asarray(z_hat, dtype=float).copy()
    z_star = np.asarray(z_star, dtype=float)
    neighbors = adjacency.neighbors
    fixed = set(fixed)
    if band is None:
        in_band = np.ones(z_star.size, dtype=bool)
    else:
        lo, hi = band
        in_band = (z_star >= lo) & (z_star <= hi)
    in_band[list(excluded)] = False
    desc = _descending(z_star)
    asc = np.lexsort((np.arange(len(z_star)), z_star))

    current = f(z)
    selected = set(np.flatnonzero(z > 0.5).tolist())
    visited = {frozenset(selected)}
    evals = accepted = 0
    trace = [current]
    while evals < max_evals:
        improved = False
        removals = [int(i) for i in asc if in_band[i] and i in selected and i not in fixed]
        inserts = [int(j) for j in desc if in_band[j] and j not in selected]
        for i in removals:
            rest = selected - {i}
            for j in inserts:
                if neighbors[j] & rest:
                    continue
                key = frozenset(rest | {j})
                if key in visited:
                    continue
                if evals >= max_evals:
                    break
                trial = z.copy()
                trial[i], trial[j] = 0.0, 1.0
                value = f(trial)
                evals += 1
                if value <= current:
                    z, current, selected = trial, value, set(key)
                    visited.add(key)
                    accepted += 1
                    trace.append(current)
                    improved = True
                    break
            if improved or evals >= max_evals:
                break
        if not improved:
            break
    return SwapResult(z, current, evals, accepted, trace)


def optimality_gap(value, lower_bound, eps=GAP_EPS):
    return (value - lower_bound) / max(abs(lower_bound), eps)


@dataclass
class HeuristicResult:
    z: np.ndarray  # binary placement
    value: float
    lower_bound: float
    gap: float
    z_star: np.ndarray
    relaxation: object
    swap: SwapResult
    seconds: dict


def convex_heuristic(objective, m, adjacency, fixed=(), excluded=(), n=None,
                     max_iter=None, max_swap_evals=MAX_SWAP_EVALS, polish=True,
                     **relax_kwargs):
    """Relax, round, swap. Returns the placement, its value and a certified bound.

    With ``polish`` the band-restricted swap search is followed by the same
    search over every node, sharing the evaluation budget.
    """
    t0 = time.perf_counter()
    relax = solve_relaxation(objective, m, fixed, excluded, n=n, max_iter=max_iter,
                             **relax_kwargs)
    t1 = time.perf_counter()
    z0 = round_placement(relax.z, m, adjacency, fixed, excluded)
    swap = swap_improve(z0, relax.z, objective.value, adjacency, fixed, max_swap_evals,
                        excluded=excluded)
    if polish and swap.evaluations < max_swap_evals:
        extra = swap_improve(swap.z, relax.z, objective.value, adjacency, fixed,
                             max_swap_evals - swap.evaluations, band=None,
                             excluded=excluded)
        swap = SwapResult(extra.z, extra.value, swap.evaluations + extra.evaluations,
                          swap.accepted + extra.accepted, swap.trace + extra.trace[1:])
    t2 = time.perf_counter()
    value = objective.value(swap.z)
    bound = relax.lower_bound - BOUND_SAFETY * max(1.0, abs(relax.lower_bound))
    bound = min(bound, value)
    return HeuristicResult(swap.z, value, bound, optimality_gap(value, bound), relax.z,
                           relax, swap, {"relaxation": t1 - t0, "round_swap": t2 - t1})
