"""Assembly of a sensor-placement instance from a network."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .hydraulics import NullSpaceSolver
from .network import adjacency_constraints, shortest_path_costs
from .objectives import DOptimality, PMedian, f_D, f_T
from .sensitivity import (bundle_key, build_information, cached_bundle,
                          sensitivity_vectors)

log = logging.getLogger(__name__)


@dataclass
class SensorProblem:
    net: object
    cost: object
    adjacency: object
    bundle: object
    fixed: tuple = ()
    excluded: tuple = ()
    timings: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.net.n_n

    def d_objective(self):
        return DOptimality(self.bundle)

    def t_objective(self):
        return PMedian(self.cost)

    def evaluate(self, z):
        """Canonical criterion-space image ``(f_D, f_T)`` of a binary placement."""
        return f_D(self.bundle, z), f_T(self.cost, z)

    def node_ids(self, z):
        return [self.net.nodes[j].id for j in np.flatnonzero(np.asarray(z) > 0.5)]


def _indices(net, ids, index, what):
    out = []
    for i in ids:
        if isinstance(i, (int, np.integer)):
            out.append(int(i))
        elif i in index:
            out.append(index[i])
        else:
            raise ValidationError(f"unknown {what} {i!r}")
    return tuple(out)


def build_problem(net, theta=None, flow_sensors=(), fixed=(), excluded=(), sigma=1.0,
                  lam=np.inf, excluded_groups=(), headloss="H-W", cache_dir=None):
    """Solve hydraulics, compute sensitivities and build every objective input.

    ``theta`` holds one C-factor per group (defaults to the file's mean per
    group). ``excluded_groups`` are 1-based group numbers kept out of the
    estimation. Node and link references may be ids or 0-based indices.
    """
    t0 = time.perf_counter()
    if theta is None:
        theta = net.nominal_roughness()
        if np.any(~np.isfinite(theta)):
            raise ValidationError("no roughness estimate for some groups; set theta in the config")
    theta = np.asarray(theta, dtype=float)
    flow_idx = _indices(net, flow_sensors, net.link_index, "flow-sensor link")
    fixed_idx = _indices(net, fixed, net.node_index, "fixed sensor node")
    excl_idx = _indices(net, excluded, net.node_index, "excluded node")
    estimated = [r for r in range(net.n_r) if (r + 1) not in set(excluded_groups)]

    solver = NullSpaceSolver(net, headloss=headloss)

    def build():
        states = [solver.solve(theta, k) for k in range(net.n_t)]
        sens = sensitivity_vectors(net, states, theta, solver, headloss)
        return build_information(net, sens, flow_idx, sigma, lam, estimated)

    key = bundle_key(net, theta, range(net.n_t), flow=flow_idx, sigma=sigma, lam=lam,
                     groups=estimated, headloss=headloss)
    bundle = cached_bundle(cache_dir, key, build)
    t1 = time.perf_counter()
    cost = shortest_path_costs(net)
    adjacency = adjacency_constraints(net)
    t2 = time.perf_counter()
    return SensorProblem(net, cost, adjacency, bundle, fixed_idx, excl_idx,
                         {"sensitivity": t1 - t0, "graph": t2 - t1})
