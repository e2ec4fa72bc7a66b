"""Exhaustive-enumeration checks of a computed front on small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objectives import chebyshev_weights
from .pareto import beta_star, brute_force_pareto, in_Q, in_R, in_W

# slack for comparing two evaluations of the same scalarised value
REL_TIE = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f" ({self.detail})" if self.detail else "")


def scalarised_values(images, weights):
    """Chebyshev values of criterion points; infinite ``f_D`` stays infinite."""
    d = weights.w_D * (images[:, 0] - weights.f_D_star)
    t = weights.w_T * (images[:, 1] - weights.f_T_star)
    with np.errstate(invalid="ignore"):
        d = np.where(np.isinf(images[:, 0]), np.inf, d)
    return np.maximum(d, t)


def sandwich(name, bound, optimum, value):
    ok = bound <= optimum <= value
    return Check(name, ok, f"bound {bound:.10g} <= optimum {optimum:.10g} <= heuristic {value:.10g}")


def verify_front(problem, m, art, enum=None):
    """All enumeration checks for one computed front. Returns a list of :class:`Check`."""
    enum = enum if enum is not None else brute_force_pareto(problem, m)
    imgs = enum.images
    checks = []
    if not len(imgs):
        return [Check("feasible placements exist", False, "no feasible placement")]
    pD, pT = art.point_D, art.point_T
    checks.append(sandwich("sandwich f_D", art.f_D_star, imgs[:, 0].min(), pD.value))
    checks.append(sandwich("sandwich f_T", art.f_T_star, imgs[:, 1].min(), pT.value))
    for k, w in enumerate(art.weights):
        vals = scalarised_values(imgs, w)
        checks.append(sandwich(f"sandwich f_beta beta={w.beta:.6g}", art.f_beta_star[k],
                               vals.min(), art.P[k + 2].value))

    P = art.images()
    bad = [tuple(y) for y in enum.front_images if in_W(y, P)]
    checks.append(Check("exact front outside W", not bad, f"{len(bad)} of {len(enum.front)} in W"))
    bad_r = sum(in_R(y, art.f_D_star, art.f_T_star) for y in imgs)
    bad_q = sum(in_Q(y, art.L) for y in imgs)
    checks.append(Check("feasible images outside R and Q", bad_r + bad_q == 0,
                        f"{bad_r} in R, {bad_q} in Q of {len(imgs)}"))

    if not art.degenerate:
        failures = 0
        front = [y for y in enum.front_images if math.isfinite(y[0])]
        for y in front:
            b = beta_star(y, art.f_D_star, art.f_T_star, art.f_D_at_T, art.f_T_at_D)
            w = chebyshev_weights(b, art.f_D_star, art.f_T_star, art.f_D_at_T, art.f_T_at_D)
            target = scalarised_values(np.array([y]), w)[0]
            best = scalarised_values(imgs, w).min()
            if best < target - REL_TIE * max(1.0, abs(target)):
                failures += 1
        checks.append(Check("beta* recovers every Pareto point", failures == 0,
                            f"{failures} of {len(front)} not optimal"))
    return checks
