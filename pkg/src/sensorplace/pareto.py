"""Chebyshev scalarisation front with certified bound sets.

The front approximation ``P`` holds images of heuristic placements. Three
regions of criterion space provably contain no Pareto point:

* ``W``: points weakly dominated (with a strict excess) by some ``P`` point;
* ``R``: points strictly below either individual lower bound;
* ``Q``: points strictly below some anchor ``L_k`` built from a certified
  lower bound of a scalarised problem.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import SingularInformationError, ValidationError
from .objectives import Chebyshev, chebyshev_weights, f_D, f_T
from .roundswap import MAX_SWAP_EVALS, convex_heuristic

log = logging.getLogger(__name__)

ENUM_LIMIT = 1_000_000


class DegenerateFrontWarning(UserWarning):
    pass


@dataclass
class FrontPoint:
    f_D: float
    f_T: float
    z: np.ndarray
    label: str  # "D", "T" or "beta=<value>"
    beta: float | None = None
    value: float = math.nan  # objective value of the solve that produced it
    lower_bound: float = math.nan
    gap: float = math.nan
    seconds: float = 0.0

    @property
    def image(self):
        return (self.f_D, self.f_T)


@dataclass
class ParetoArtifacts:
    P: list
    L: list  # (x, y) anchor points, one per beta
    f_D_star: float
    f_T_star: float
    betas: list
    f_beta_star: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    f_D_at_T: float = math.nan
    f_T_at_D: float = math.nan
    degenerate: bool = False
    seconds: dict = field(default_factory=dict)
    point_D: FrontPoint | None = None  # individual minimisers, kept even when degenerate
    point_T: FrontPoint | None = None

    def images(self):
        return np.array([p.image for p in self.P], dtype=float).reshape(-1, 2)

    def in_W(self, point):
        return in_W(point, self.images())

    def in_R(self, point):
        return in_R(point, self.f_D_star, self.f_T_star)

    def in_Q(self, point):
        return in_Q(point, self.L)

    def excluded(self, point):
        """True if ``point`` lies in W, R or Q."""
        return self.in_W(point) or self.in_R(point) or self.in_Q(point)


# ------------------------------------------------------------- predicates


def in_W(point, P):
    x, y = point
    for px, py in P:
        if x >= px and y >= py and (x > px or y > py):
            return True
    return False


def in_R(point, f_D_star, f_T_star):
    return point[0] < f_D_star or point[1] < f_T_star


def in_Q(point, L):
    x, y = point
    return any(x < lx and y < ly for lx, ly in L)


def dominance_filter(points):
    """Indices of points not dominated by another point, in input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    keep = []
    for i, (x, y) in enumerate(pts):
        dominated = np.any((pts[:, 0] <= x) & (pts[:, 1] <= y)
                           & ((pts[:, 0] < x) | (pts[:, 1] < y)))
        if not dominated:
            keep.append(i)
    return keep


def beta_star(point, f_D_star, f_T_star, f_D_at_T, f_T_at_D):
    """Weight for which both Chebyshev terms are equal at ``point``.

    With these weights no image outside the dominance cone of ``point`` can
    reach a lower scalarised value, so a Pareto point is optimal for it.
    """
    a = f_D_at_T - f_D_star
    b = f_T_at_D - f_T_star
    u = a * (point[1] - f_T_star)
    v = b * (point[0] - f_D_star)
    if u + v <= 0:
        return 0.5
    return u / (u + v)


# ------------------------------------------------------------- enumeration


@dataclass
class EnumeratedFront:
    placements: np.ndarray  # (count, n) binary
    images: np.ndarray  # (count, 2)
    front: list  # indices of nondominated placements

    @property
    def front_images(self):
        return self.images[self.front]


def feasible_placements(n, m, adjacency, fixed=(), excluded=(), limit=ENUM_LIMIT):
    """Every binary placement with ``m`` sensors that respects all constraints."""
    fixed = sorted(set(fixed))
    banned = set(excluded) | set(fixed)
    free = [j for j in range(n) if j not in banned]
    k = m - len(fixed)
    if k < 0:
        return np.zeros((0, n))
    count = math.comb(len(free), k)
    if count > limit:
        raise ValidationError(f"{count} candidate placements exceed the enumeration limit {limit}")
    neighbors = adjacency.neighbors
    out = []
    for combo in combinations(free, k):
        chosen = fixed + list(combo)
        ok = True
        for idx, j in enumerate(chosen):
            if neighbors[j] & set(chosen[idx + 1:]):
                ok = False
                break
        if ok:
            z = np.zeros(n)
            z[chosen] = 1.0
            out.append(z)
    return np.array(out).reshape(-1, n)


def brute_force_pareto(problem, m, fixed=None, excluded=None, limit=ENUM_LIMIT):
    """Exact front by evaluating every feasible placement.

    Placements whose information matrix is singular get ``f_D = inf``.
    """
    fixed = problem.fixed if fixed is None else fixed
    excluded = problem.excluded if excluded is None else excluded
    Z = feasible_placements(problem.n, m, problem.adjacency, fixed, excluded, limit)
    images = np.empty((len(Z), 2))
    for i, z in enumerate(Z):
        try:
            images[i, 0] = f_D(problem.bundle, z)
        except SingularInformationError:
            images[i, 0] = math.inf
        images[i, 1] = f_T(problem.cost, z)
    return EnumeratedFront(Z, images, dominance_filter(images))


# ----------------------------------------------------------- scalarisation


def default_betas(N):
    if N < 1:
        raise ValidationError("N must be at least 1")
    return [k / (N + 1) for k in range(1, N + 1)]


def _point(problem, res, label, beta=None, seconds=0.0):
    fd, ft = problem.evaluate(res.z)
    return FrontPoint(fd, ft, res.z.copy(), label, beta, res.value, res.lower_bound,
                      res.gap, seconds)


def _scalarised(args):
    problem, weights, m, opts = args
    t0 = time.perf_counter()
    res = convex_heuristic(Chebyshev(problem.bundle, problem.cost, weights), m,
                           problem.adjacency, problem.fixed, problem.excluded, n=problem.n,
                           **opts)
    return res, time.perf_counter() - t0


def chebyshev_front(problem, m, N=5, betas=None, max_iter_smooth=None,
                    max_iter_nonsmooth=None, max_swap_evals=MAX_SWAP_EVALS, polish=True,
                    workers=1):
    """Approximate the front and build the certified bound sets.

    Solves both individual problems, then one Chebyshev problem per weight.
    Anchors ``f_D*`` and ``f_T*`` are the certified relaxation bounds.
    """
    betas = default_betas(N) if betas is None else [float(b) for b in betas]
    if any(not 0.0 < b < 1.0 for b in betas):
        raise ValidationError("every beta must lie strictly between 0 and 1")
    t0 = time.perf_counter()
    common = dict(fixed=problem.fixed, excluded=problem.excluded, n=problem.n,
                  max_swap_evals=max_swap_evals, polish=polish)
    res_D = convex_heuristic(problem.d_objective(), m, problem.adjacency,
                             max_iter=max_iter_smooth, **common)
    t1 = time.perf_counter()
    res_T = convex_heuristic(problem.t_objective(), m, problem.adjacency,
                             max_iter=max_iter_nonsmooth, **common)
    t2 = time.perf_counter()
    p_D = _point(problem, res_D, "D", seconds=t1 - t0)
    p_T = _point(problem, res_T, "T", seconds=t2 - t1)
    f_D_star, f_T_star = res_D.lower_bound, res_T.lower_bound
    art = ParetoArtifacts([p_D, p_T], [], f_D_star, f_T_star, betas,
                          f_D_at_T=p_T.f_D, f_T_at_D=p_D.f_T, point_D=p_D, point_T=p_T)

    if np.array_equal(p_D.z, p_T.z) or not (p_T.f_D - f_D_star > 0 and p_D.f_T - f_T_star > 0):
        warnings.warn("individual minimisers coincide or anchor ranges vanish; "
                      "returning a single-point front", DegenerateFrontWarning, stacklevel=2)
        art.P = [p_D]
        art.degenerate = True
        art.seconds = {"individual": t2 - t0, "total": time.perf_counter() - t0}
        return art

    weights = [chebyshev_weights(b, f_D_star, f_T_star, p_T.f_D, p_D.f_T) for b in betas]
    art.weights = weights
    opts = dict(max_iter=max_iter_nonsmooth, max_swap_evals=max_swap_evals, polish=polish)
    jobs = [(problem, w, m, opts) for w in weights]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scalarised, jobs))
    else:
        results = [_scalarised(job) for job in jobs]

    for w, (res, secs) in zip(weights, results):
        art.P.append(_point(problem, res, f"beta={w.beta:.6g}", w.beta, secs))
        # the scalarised objective is nonnegative on every feasible placement
        fb = max(res.lower_bound, 0.0)
        art.f_beta_star.append(fb)
        art.L.append((fb / w.w_D + f_D_star if w.w_D > 0 else math.inf,
                      fb / w.w_T + f_T_star if w.w_T > 0 else math.inf))
    art.seconds = {"individual": t2 - t0, "scalarised": time.perf_counter() - t2,
                   "total": time.perf_counter() - t0}
    return art


# ------------------------------------------------------------------ output


def _finite(x):
    return x if math.isfinite(x) else None


def artifacts_to_dict(art, problem=None):
    def ids(z):
        sel = np.flatnonzero(z > 0.5).tolist()
        return problem.node_ids(z) if problem is not None else sel

    return {
        "anchors": {"f_D_star": art.f_D_star, "f_T_star": art.f_T_star,
                    "f_D_at_T": _finite(art.f_D_at_T), "f_T_at_D": _finite(art.f_T_at_D)},
        "betas": list(art.betas),
        "degenerate": art.degenerate,
        "P": [{"label": p.label, "beta": p.beta, "f_D": p.f_D, "f_T": p.f_T,
               "sensors": ids(p.z), "value": p.value, "lower_bound": p.lower_bound,
               "gap": p.gap} for p in art.P],
        "L": [{"beta": b, "f_beta_star": fb, "x": _finite(x), "y": _finite(y)}
              for b, fb, (x, y) in zip(art.betas, art.f_beta_star, art.L)],
        "timestamps": {"point_seconds": [p.seconds for p in art.P], **art.seconds},
    }


def write_results_json(path, art, problem=None):
    with open(path, "w") as fh:
        json.dump(artifacts_to_dict(art, problem), fh, indent=2, sort_keys=True)
        fh.write("\n")


def staircase_upper(points, x_max, y_max):
    """Boundary of the union of upper-right orthants at ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[dominance_filter(pts)]
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if not len(pts):
        return []
    path = [(pts[0, 0], y_max)]
    for i, (x, y) in enumerate(pts):
        if i:
            path.append((x, pts[i - 1, 1]))
        path.append((x, y))
    path.append((x_max, pts[-1, 1]))
    return path


def staircase_lower(points, x_max, y_max):
    """Boundary of the union of lower-left orthants at ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = np.minimum(pts, [x_max, y_max])
    # maximal points: those not dominated from above
    keep = dominance_filter(-pts)
    pts = pts[keep]
    pts = pts[np.lexsort((-pts[:, 1], pts[:, 0]))]
    path = []
    for i, (x, y) in enumerate(pts):
        path.append((x, y))
        if i + 1 < len(pts):
            path.append((x, pts[i + 1, 1]))
    return path


def plot_rows(art):
    P = art.images()
    xs = [art.f_D_star, *P[:, 0], *(x for x, _ in art.L if math.isfinite(x))]
    ys = [art.f_T_star, *P[:, 1], *(y for _, y in art.L if math.isfinite(y))]
    pad_x = 0.05 * max(max(xs) - min(xs), 1e-9)
    pad_y = 0.05 * max(max(ys) - min(ys), 1e-9)
    x_max, y_max = max(xs) + pad_x, max(ys) + pad_y
    rows = [("P", x, y) for x, y in P]
    rows += [("L", x, y) for x, y in art.L]
    rows.append(("anchor", art.f_D_star, art.f_T_star))
    rows += [("W_boundary", x, y) for x, y in staircase_upper(P, x_max, y_max)]
    corners = [(art.f_D_star, y_max), *art.L, (x_max, art.f_T_star)]
    rows += [("RQ_boundary", x, y) for x, y in staircase_lower(corners, x_max, y_max)]
    return rows


def write_plot_csv(path, art):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    for s, x, y in plot_rows(art):
        w.writerow([s, repr(float(x)), repr(float(y))])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
