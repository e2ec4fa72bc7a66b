"""Continuous relaxation over ``{sum z = m, 0 <= z <= 1, z_F = 1}``.

Every iterate yields a certified lower bound from convexity: for any
(sub)gradient ``g`` at ``z`` and any feasible ``y``,
``f(y) >= f(z) + g.(y - z) >= f(z) + g.(lmo(g) - z)``.
The adjacency constraints are deliberately left out of the relaxed set; the
bound stays valid because the set only grows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleError, NumericalError
from .objectives import max_pieces

log = logging.getLogger(__name__)

MAX_ITER_SMOOTH = 2000
MAX_ITER_NONSMOOTH = 5000
STEP_RULES = ("corrective", "open-loop", "exact", "projected")
WARM_START_ITER = 200
MAX_CORRECTIVE_SUPPORT = 600


class Domain:
    """The relaxed placement set for ``n`` nodes and budget ``m``."""

    def __init__(self, n, m, fixed=(), excluded=()):
        fixed, excluded = sorted(set(fixed)), sorted(set(excluded))
        if set(fixed) & set(excluded):
            raise InfeasibleError("a node is both fixed and excluded")
        if len(fixed) > m:
            raise InfeasibleError(f"{len(fixed)} fixed sensors exceed budget m={m}")
        if m > n - len(excluded):
            raise InfeasibleError(f"budget m={m} exceeds the {n - len(excluded)} available nodes")
        self.n, self.m = n, m
        self.fixed, self.excluded = tuple(fixed), tuple(excluded)
        self.lo = np.zeros(n)
        self.lo[fixed] = 1.0
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        mask[excluded] = False
        self.free = np.flatnonzero(mask)
        self.need = m - len(fixed)

    def lmo(self, g):
        """Vertex minimising ``g.z``: fixed nodes plus the smallest free entries."""
        z = self.lo.copy()
        if self.need:
            z[self.free[np.argsort(g[self.free], kind="stable")[:self.need]]] = 1.0
        return z

    def project(self, v):
        """Euclidean projection: ``clip(v - tau, 0, 1)`` on the free nodes.

        The clipped sum is piecewise linear in ``tau`` with breakpoints at
        ``v_i`` and ``v_i - 1``; the crossing segment is located by bisection
        over the sorted breakpoints and ``tau`` is solved exactly on it.
        """
        z = self.lo.copy()
        target = self.need
        if target <= 0 or not self.free.size:
            return z
        vf = np.asarray(v, dtype=float)[self.free]
        vs = np.sort(vf)
        csum = np.concatenate([[0.0], np.cumsum(vs)])
        k = vs.size

        def total(tau):
            a = np.searchsorted(vs, tau, side="right")  # v <= tau contribute 0
            b = np.searchsorted(vs, tau + 1.0, side="left")  # v >= tau + 1 contribute 1
            return (k - b) + csum[b] - csum[a] - (b - a) * tau

        bps = np.unique(np.concatenate([vs, vs - 1.0]))
        vals = total(bps)  # nonincreasing, vals[0] == k >= target
        i = int(np.searchsorted(-vals, -target, side="left"))
        if i == 0:
            tau = bps[0]
        elif i == bps.size:
            tau = bps[-1]
        else:
            t0, t1, s0, s1 = bps[i - 1], bps[i], vals[i - 1], vals[i]
            tau = t1 if s0 == s1 else t0 + (s0 - target) * (t1 - t0) / (s0 - s1)
        z[self.free] = np.clip(vf - tau, 0.0, 1.0)
        return z

    def uniform(self):
        z = self.lo.copy()
        if self.free.size:
            z[self.free] = self.need / self.free.size
        return z


def lmo_top_m(g, m, fixed=(), excluded=()):
    """Vertex of the relaxed set minimising ``g.z``; ties go to lower indices."""
    g = np.asarray(g, dtype=float)
    return Domain(g.size, m, fixed, excluded).lmo(g)


def project_box_simplex(v, m, fixed=(), excluded=()):
    """Euclidean projection of ``v`` onto the relaxed placement set."""
    v = np.asarray(v, dtype=float)
    return Domain(v.size, m, fixed, excluded).project(v)


def uniform_start(n, m, fixed=(), excluded=()):
    return Domain(n, m, fixed, excluded).uniform()


@dataclass
class RelaxationResult:
    z: np.ndarray  # best iterate
    value: float  # f(z)
    lower_bound: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)  # (iteration, value, bound, gap)

    @property
    def gap(self):
        return self.value - self.lower_bound

    def write_trace(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,value,bound\n")
            for t, f, b, _ in self.trace:
                fh.write(f"{t},{f!r},{b!r}\n")


def solve_relaxation(objective, m, fixed=(), excluded=(), n=None, max_iter=None,
                     rtol=1e-4, step="corrective", z0=None, step_scale=None):
    """Minimise a convex placement objective over the relaxed set.

    Smooth objectives are certified by the Frank-Wolfe gap. Iterates come
    from ``step``: ``"corrective"`` (projected-gradient warm start, then
    exact re-optimisation over the support plus the Frank-Wolfe vertex),
    ``"open-loop"`` (``2/(t+2)``), ``"exact"`` (line search along the
    Frank-Wolfe direction) or ``"projected"``. Nonsmooth
    objectives run projected subgradient with ``c/sqrt(t)`` steps. Stops once
    the best value is within ``rtol * |f(z0)|`` of the certified bound.
    """
    if n is None:
        n = _infer_n(objective)
    dom = Domain(n, m, fixed, excluded)
    z0 = dom.uniform() if z0 is None else np.asarray(z0, dtype=float)
    if objective.smooth:
        max_iter = MAX_ITER_SMOOTH if max_iter is None else max_iter
        return _frank_wolfe(objective, z0, dom, max_iter, rtol, step)
    max_iter = MAX_ITER_NONSMOOTH if max_iter is None else max_iter
    return _subgradient(objective, z0, dom, max_iter, rtol, step_scale)


def _infer_n(objective):
    bundle = getattr(objective, "bundle", None)
    if bundle is not None:
        return bundle.n_n
    cost = getattr(objective, "cost", None)
    if cost is not None:
        return cost.C.shape[0]
    raise ValueError("cannot infer problem size; pass n=")


def _check(f, g):
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError(f"objective not finite at iterate (value {f})")


def _evaluate(objective, z):
    f, g = objective(z)
    _check(f, g)
    return f, g


def _evaluate_pieces(objective, z):
    pieces = objective.pieces(z)
    for f, g in pieces:
        _check(f, g)
    return pieces


def _converged(best, bound, scale, rtol):
    return best - bound <= rtol * scale


def _frank_wolfe(objective, z, dom, max_iter, rtol, step):
    """Frank-Wolfe with the duality-gap bound.

    ``step="projected"`` and ``step="corrective"`` keep the same certificate
    but generate iterates with :func:`_projected_gradient` and
    :func:`_corrective`.
    """
    if step not in STEP_RULES:
        raise ValueError(f"unknown step rule {step!r}; choose from {STEP_RULES}")
    if step == "projected":
        return _projected_gradient(objective, z, dom, max_iter, rtol)
    if step == "corrective":
        return _corrective(objective, z, dom, max_iter, rtol)
    f0, _ = _evaluate(objective, z)
    scale = max(abs(f0), 1e-12)
    best_z, best_f, bound = z.copy(), f0, -np.inf
    trace = []
    line_search = getattr(objective, "line_search", None) if step == "exact" else None
    if step == "exact" and line_search is None:
        raise ValueError("step='exact' needs an objective with a line search")
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        f, g = _evaluate(objective, z)
        if f < best_f:
            best_f, best_z = f, z.copy()
        x = dom.lmo(g)
        gap = float(g @ (z - x))
        bound = max(bound, f - gap)
        trace.append((t, f, bound, gap))
        if _converged(best_f, bound, scale, rtol):
            converged = True
            break
        gamma = line_search(z, x) if line_search else 2.0 / (t + 2.0)
        z = z + gamma * (x - z)
    return RelaxationResult(best_z, best_f, bound, t, converged, trace)


def _corrective(objective, z, dom, max_iter, rtol):
    """Projected-gradient warm start followed by fully corrective rounds.

    A round minimises ``f`` exactly (SLSQP) over the coordinates that are
    nonzero in the current iterate or in the Frank-Wolfe vertex, all other
    free coordinates held at zero. Every round is certified by the
    Frank-Wolfe gap of its result; a round that does not improve the value
    ends the run.
    """
    f0, _ = _evaluate(objective, z)
    scale = max(abs(f0), 1e-12)
    warm = _projected_gradient(objective, z, dom, min(max_iter, WARM_START_ITER), rtol,
                               scale=scale)
    if warm.converged or warm.iterations >= max_iter:
        return warm
    best_z, best_f, bound, trace = warm.z, warm.value, warm.lower_bound, list(warm.trace)
    t = warm.iterations
    z = best_z
    converged = False
    while t < max_iter:
        t += 1
        f, g = _evaluate(objective, z)
        x = dom.lmo(g)
        bound = max(bound, f - float(g @ (z - x)))
        if f < best_f:
            best_f, best_z = f, z.copy()
        trace.append((t, f, bound, best_f - bound))
        if _converged(best_f, bound, scale, rtol):
            converged = True
            break
        support = np.intersect1d(np.flatnonzero((z > 1e-12) | (x > 0.5)), dom.free)
        if support.size > MAX_CORRECTIVE_SUPPORT:
            break
        z_new = _reoptimise(objective, z, support, dom)
        if z_new is None:
            break
        try:
            f_new, _ = _evaluate(objective, z_new)
        except NumericalError:
            break
        if f_new >= f:
            # no progress: harvest the bound at the final point and stop
            z = z_new
            f, g = _evaluate(objective, z)
            bound = max(bound, f - float(g @ (z - dom.lmo(g))))
            if f < best_f:
                best_f, best_z = f, z.copy()
            converged = _converged(best_f, bound, scale, rtol)
            break
        z = z_new
    return RelaxationResult(best_z, best_f, bound, t, converged, trace)


def _reoptimise(objective, z, support, dom):
    base = z.copy()
    base[support] = 0.0
    budget = dom.m - base.sum()

    def fun(y):
        trial = base.copy()
        trial[support] = y
        try:
            f, g = objective(trial)
        except NumericalError:
            return np.inf, np.zeros_like(y)
        return f, g[support]

    ones = np.ones(support.size)
    res = minimize(fun, z[support], jac=True, method="SLSQP",
                   bounds=[(0.0, 1.0)] * support.size,
                   constraints=[{"type": "eq", "fun": lambda y: y.sum() - budget,
                                 "jac": lambda y: ones}],
                   options={"ftol": 1e-15, "maxiter": 500})
    if not np.all(np.isfinite(res.x)):
        return None
    out = base.copy()
    out[support] = res.x
    return dom.project(out)


def _projected_gradient(objective, z, dom, max_iter, rtol, memory=10, scale=None):
    """Spectral projected gradient with a nonmonotone Armijo search.

    Each iterate also yields the Frank-Wolfe gap bound, so the result is
    certified exactly as in :func:`_frank_wolfe`.
    """
    f, g = _evaluate(objective, z)
    scale = max(abs(f), 1e-12) if scale is None else scale
    best_z, best_f, bound = z.copy(), f, -np.inf
    lam = 1.0 / max(float(np.linalg.norm(g)), 1e-12)
    recent = [f]
    trace = []
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        if f < best_f:
            best_f, best_z = f, z.copy()
        x = dom.lmo(g)
        gap = float(g @ (z - x))
        bound = max(bound, f - gap)
        trace.append((t, f, bound, gap))
        if _converged(best_f, bound, scale, rtol):
            converged = True
            break
        d = dom.project(z - lam * g) - z
        slope = float(g @ d)
        if slope >= 0.0:
            break  # stationary up to round-off
        ref = max(recent[-memory:])
        a = 1.0
        for _ in range(60):
            trial = z + a * d
            try:
                f_new, g_new = _evaluate(objective, trial)
            except NumericalError:
                a *= 0.5
                continue
            if f_new <= ref + 1e-4 * a * slope:
                break
            a *= 0.5
        else:
            break
        s_vec, y_vec = trial - z, g_new - g
        sy = float(s_vec @ y_vec)
        lam = float(s_vec @ s_vec) / sy if sy > 0 else 1e3 * lam
        lam = min(max(lam, 1e-10), 1e10)
        z, f, g = trial, f_new, g_new
        recent.append(f)
    if f < best_f:
        best_f, best_z = f, z.copy()
    return RelaxationResult(best_z, best_f, bound, t, converged, trace)


class _Minorant:
    """Step-weighted average of affine minorants ``c + g.x`` of one function."""

    def __init__(self, n):
        self.const = 0.0
        self.grad = np.zeros(n)
        self.weight = 0.0

    def add(self, alpha, f, g, z):
        self.const += alpha * (f - float(g @ z))
        self.grad += alpha * g
        self.weight += alpha

    def affine(self):
        return self.const / self.weight, self.grad / self.weight


def _affine_bound(c, g, dom):
    return c + float(g @ dom.lmo(g))


def _max_bound(affines, dom, steps=30):
    """``max over lam of min over x of lam A(x) + (1 - lam) B(x)`` for two affine minorants.

    Any convex combination of minorants of ``a`` and ``b`` is a minorant of
    ``max(a, b)``. The inner value is concave in ``lam``; golden-section search.
    """
    (ca, ga), (cb, gb) = affines

    def phi(lam):
        return _affine_bound(lam * ca + (1 - lam) * cb, lam * ga + (1 - lam) * gb, dom)

    best = max(phi(0.0), phi(1.0))
    lo, hi = 0.0, 1.0
    r = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - r * (hi - lo), lo + r * (hi - lo)
    f1, f2 = phi(x1), phi(x2)
    for _ in range(steps):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + r * (hi - lo)
            f2 = phi(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - r * (hi - lo)
            f1 = phi(x1)
    return max(best, f1, f2)


def _subgradient(objective, z, dom, max_iter, rtol, step_scale, bound_every=10):
    """Projected subgradient with diminishing normalised steps.

    Bounds come from the current linearisation and from the step-weighted
    average of all linearisations. Objectives exposing ``pieces`` (a max of
    convex functions) also get the piecewise bound of :func:`_max_bound`,
    refreshed every ``bound_every`` iterations.
    """
    split = hasattr(objective, "pieces")

    def evaluate(x):
        if not split:
            return (*_evaluate(objective, x), None)
        pieces = _evaluate_pieces(objective, x)
        return (*max_pieces(pieces), pieces)

    f, g, pieces = evaluate(z)
    scale = max(abs(f), 1e-12)
    # steps of this length (in z) at t=1 reach across a sizable part of the set
    c = step_scale if step_scale is not None else 0.5 * math.sqrt(max(1, min(dom.m, dom.free.size)))
    best_z, best_f, bound = z.copy(), f, -np.inf
    agg = _Minorant(z.size)
    agg_pieces = [_Minorant(z.size), _Minorant(z.size)] if split else None
    trace = []
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        if f < best_f:
            best_f, best_z = f, z.copy()
        alpha = c / math.sqrt(t)
        agg.add(alpha, f, g, z)
        bound = max(bound, f + float(g @ (dom.lmo(g) - z)), _affine_bound(*agg.affine(), dom))
        if split:
            for a, (fp, gp) in zip(agg_pieces, pieces):
                a.add(alpha, fp, gp, z)
            if t % bound_every == 1 or bound_every == 1:
                here = [(fp - float(gp @ z), gp) for fp, gp in pieces]
                bound = max(bound, _max_bound(here, dom),
                            _max_bound([a.affine() for a in agg_pieces], dom))
        trace.append((t, f, bound, best_f - bound))
        if _converged(best_f, bound, scale, rtol):
            converged = True
            break
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            # zero subgradient: z is optimal
            bound = max(bound, f)
            converged = True
            break
        target = dom.project(z - (alpha / norm) * g)
        s = 1.0
        for _ in range(40):
            trial = z + s * (target - z)
            try:
                f_new, g_new, p_new = evaluate(trial)
                break
            except NumericalError:
                s *= 0.5  # left the domain of f; points near z on the segment are inside
        else:
            raise NumericalError("subgradient step could not stay in the objective domain")
        z, f, g, pieces = trial, f_new, g_new, p_new
    if f < best_f:
        best_f, best_z = f, z.copy()
    if split:
        bound = max(bound, _max_bound([a.affine() for a in agg_pieces], dom))
    return RelaxationResult(best_z, best_f, bound, t, converged, trace)
