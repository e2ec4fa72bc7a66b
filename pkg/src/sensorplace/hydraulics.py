"""Steady-state hydraulics: head-loss laws and a null-space Newton solver."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, NumericalError, ValidationError
from .linalg import SPDFactor
from .network import build_incidence

log = logging.getLogger(__name__)

HW_EXPONENT = 1.852
HW_CONSTANT = 10.67  # SI units
GRAVITY = 9.81
# below this |q| (m^3/s) the head-loss law is replaced by a C^1 quadratic blend
SMOOTH_Q = 1e-5


def hazen_williams(length, diameter, theta):
    """Hazen-Williams resistance coefficient for exponent 1.852 (SI)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise ValueError(f"roughness must be positive and finite, got {theta}")
    return HW_CONSTANT * length / (theta ** HW_EXPONENT * diameter ** 4.871)


def darcy_weisbach(length, diameter, theta):
    """Fixed-exponent Darcy-Weisbach law, ``theta`` being the friction factor."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValueError(f"friction factor must be positive, got {theta}")
    return 8.0 * theta * length / (GRAVITY * np.pi ** 2 * diameter ** 5)


def valve_coefficient(diameter, minor_loss):
    """Minor-loss coefficient ``K`` expressed as a quadratic resistance."""
    return 8.0 * minor_loss / (GRAVITY * np.pi ** 2 * diameter ** 4)


def resistance(link, theta_r=None, q=None, headloss="H-W", valve_rho=None):
    """Return ``(rho, n)`` for one link.

    ``q`` is accepted for interface symmetry; both supported laws have
    flow-independent coefficients. Valves ignore ``theta_r`` and use
    ``valve_rho`` when given, otherwise their minor-loss coefficient.
    """
    if link.is_valve:
        rho = valve_rho if valve_rho is not None else valve_coefficient(link.diameter, link.minor_loss)
        return float(rho), 2.0
    if theta_r is None or theta_r <= 0:
        raise ValueError(f"link {link.id}: roughness must be positive, got {theta_r}")
    if headloss == "H-W":
        return float(hazen_williams(link.length, link.diameter, theta_r)), HW_EXPONENT
    if headloss == "D-W":
        return float(darcy_weisbach(link.length, link.diameter, theta_r)), 2.0
    raise ValueError(f"unknown head-loss model {headloss!r}")


@dataclass(frozen=True)
class LinkCoefficients:
    rho: np.ndarray  # resistance per link
    drho: np.ndarray  # d rho / d theta_{r_l}; zero for valves
    exponent: np.ndarray
    group: np.ndarray  # 0-based group, -1 for valves


def link_coefficients(net, theta, headloss="H-W"):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (net.n_r,):
        raise ValueError(f"expected {net.n_r} roughness values, got shape {theta.shape}")
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise ValueError("roughness values must be positive and finite")
    rho = np.empty(net.n_p)
    drho = np.zeros(net.n_p)
    expo = np.empty(net.n_p)
    group = np.full(net.n_p, -1, dtype=np.int64)
    for l, link in enumerate(net.links):
        if link.is_valve:
            rho[l], expo[l] = resistance(link)
            continue
        r = link.group - 1
        group[l] = r
        rho[l], expo[l] = resistance(link, theta[r], headloss=headloss)
        # HW: rho ~ theta^-1.852 ; DW: rho ~ theta
        drho[l] = -HW_EXPONENT * rho[l] / theta[r] if headloss == "H-W" else rho[l] / theta[r]
    return LinkCoefficients(rho, drho, expo, group)


def psi(q, n, eps=SMOOTH_Q):
    """Smoothed ``|q|^(n-1) q``; exact for ``|q| >= eps`` and for n == 2."""
    q = np.asarray(q, dtype=float)
    aq = np.abs(q)
    a = (2.0 - n) * eps ** (n - 1.0)
    b = (n - 1.0) * eps ** (n - 2.0)
    inner = a * q + b * q * aq
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = aq ** (n - 1.0) * q
    return np.where(aq >= eps, outer, inner)


def dpsi(q, n, eps=SMOOTH_Q):
    """Derivative of :func:`psi`, floored at ``n eps^(n-1)`` for n >= 2."""
    q = np.asarray(q, dtype=float)
    aq = np.abs(q)
    a = (2.0 - n) * eps ** (n - 1.0)
    b = (n - 1.0) * eps ** (n - 2.0)
    exact = np.where(aq >= eps, n * aq ** (n - 1.0), a + 2.0 * b * aq)
    floor = np.where(n >= 2.0, n * eps ** (n - 1.0), 0.0)
    return np.maximum(exact, floor)


# --------------------------------------------------------------- null space


@dataclass(frozen=True)
class NullSpaceBasis:
    Z: sp.csc_matrix  # n_p x (n_p - n_n), entries in {-1, 0, 1}
    tree_links: np.ndarray
    chords: np.ndarray

    @property
    def width(self):
        return self.Z.shape[1]


def null_space_basis(A12):
    """Fundamental-cycle basis of ``ker(A12^T)``.

    Inlets are contracted into a single root vertex, a BFS spanning tree is
    grown from it, and every chord closes one signed cycle. Entries are
    integers so ``A12^T Z == 0`` holds exactly.
    """
    A12 = sp.csr_matrix(A12)
    n_p, n_n = A12.shape
    root = n_n
    tail = np.full(n_p, root, dtype=np.int64)
    head = np.full(n_p, root, dtype=np.int64)
    for l in range(n_p):
        cols = A12.indices[A12.indptr[l]:A12.indptr[l + 1]]
        vals = A12.data[A12.indptr[l]:A12.indptr[l + 1]]
        for c, v in zip(cols, vals):
            if v < 0:
                tail[l] = c
            elif v > 0:
                head[l] = c
    adj = [[] for _ in range(n_n + 1)]
    for l in range(n_p):
        adj[tail[l]].append((head[l], l))
        adj[head[l]].append((tail[l], l))

    parent = np.full(n_n + 1, -1, dtype=np.int64)
    parent_link = np.full(n_n + 1, -1, dtype=np.int64)
    depth = np.full(n_n + 1, -1, dtype=np.int64)
    depth[root] = 0
    in_tree = np.zeros(n_p, dtype=bool)
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, l in adj[u]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                parent[v] = u
                parent_link[v] = l
                in_tree[l] = True
                queue.append(v)
    if np.any(depth < 0):
        missing = np.where(depth[:n_n] < 0)[0]
        raise ValidationError(
            f"A12 is rank deficient: nodes {missing[:5].tolist()} are not "
            "connected to any inlet")

    rows, cols, vals = [], [], []
    chords = np.where(~in_tree)[0]
    for c, l in enumerate(chords):
        u, v = tail[l], head[l]
        rows.append(l)
        cols.append(c)
        vals.append(1.0)
        # walk v -> lca (child to parent), u -> lca (traversed parent to child)
        a, b = v, u
        while a != b:
            if depth[a] >= depth[b]:
                e = parent_link[a]
                rows.append(e)
                cols.append(c)
                vals.append(1.0 if tail[e] == a else -1.0)
                a = parent[a]
            else:
                e = parent_link[b]
                rows.append(e)
                cols.append(c)
                vals.append(1.0 if head[e] == b else -1.0)
                b = parent[b]
    Z = sp.csc_matrix((vals, (rows, cols)), shape=(n_p, len(chords)))
    return NullSpaceBasis(Z, np.where(in_tree)[0], chords)


# ------------------------------------------------------------------- solver


@dataclass(frozen=True)
class HydraulicState:
    q: np.ndarray
    h: np.ndarray
    k: int
    residual: float  # max of both block infinity norms
    residual_energy: float
    residual_mass: float
    iterations: int
    converged: bool


class NullSpaceSolver:
    """Newton solver for the steady hydraulic equations in null-space form.

    Flows are kept as ``q = x + Z v`` with ``A12^T x = d`` so that mass
    balance holds throughout; Newton acts on the loop flows ``v`` only and
    heads are recovered from the energy equations by least squares.
    Factorisations of ``A12^T A12`` and the basis are built once and reused
    by the sensitivity computation.
    """

    def __init__(self, net, incidence=None, basis=None, headloss="H-W"):
        self.net = net
        self.inc = incidence or build_incidence(net)
        self.basis = basis or null_space_basis(self.inc.A12)
        self.headloss = headloss
        self.A12 = self.inc.A12.tocsr()
        self.Z = self.basis.Z.tocsr()
        self.gram = SPDFactor((self.A12.T @ self.A12).tocsc(), what="A12^T A12")

    def boundary_term(self, k, eta=None):
        net = self.net
        b = self.inc.A10 @ net.inlet_heads(k)
        if net.n_v:
            eta = net.valve_losses(k) if eta is None else np.asarray(eta, dtype=float)
            b = b + self.inc.A13 @ eta
        return b

    def heads_from_flows(self, g):
        return -self.gram.solve(self.A12.T @ g)

    def residuals(self, coeffs, q, h, k, eta=None):
        e = coeffs.rho * psi(q, coeffs.exponent) + self.A12 @ h + self.boundary_term(k, eta)
        mass = self.A12.T @ q - self.net.demands(k)
        return e, mass

    def solve(self, theta, k=0, eta=None, q0=None, tol=1e-10, max_iter=50,
              max_backtracks=20):
        net = self.net
        coeffs = link_coefficients(net, theta, self.headloss)
        d = net.demands(k)
        bterm = self.boundary_term(k, eta)
        x = self.A12 @ self.gram.solve(d)
        Z = self.Z
        v = np.zeros(self.basis.width)
        if q0 is not None and self.basis.width:
            v = np.linalg.lstsq(Z.toarray(), np.asarray(q0) - x, rcond=None)[0]

        def state(v):
            q = x + Z @ v if self.basis.width else x.copy()
            g = coeffs.rho * psi(q, coeffs.exponent) + bterm
            h = self.heads_from_flows(g)
            e = g + self.A12 @ h
            return q, g, h, float(np.linalg.norm(e))

        q, g, h, merit = state(v)
        it = 0
        for it in range(1, max_iter + 1):
            if np.max(np.abs(g + self.A12 @ h)) < tol or not self.basis.width:
                break
            F = coeffs.rho * dpsi(q, coeffs.exponent)
            J = (Z.T @ sp.diags(F) @ Z).tocsc()
            try:
                step = -SPDFactor(J, what="reduced Jacobian Z^T F Z").solve(Z.T @ g)
            except NumericalError as exc:
                raise ConvergenceError(
                    f"singular reduced system ({exc}); the network may contain a "
                    "loop carrying zero flow - increase the flow regularisation",
                    residual=merit) from exc
            alpha = 1.0
            for _ in range(max_backtracks + 1):
                trial = state(v + alpha * step)
                if trial[3] <= merit:
                    break
                alpha *= 0.5
            else:
                if merit < 1e3 * tol:
                    break  # at the round-off floor
                raise ConvergenceError(
                    f"line search failed in scenario {k}", residual=merit)
            v = v + alpha * step
            q, g, h, merit = trial
        e, mass = self.residuals(coeffs, q, h, k, eta)
        re, rm = float(np.max(np.abs(e), initial=0.0)), float(np.max(np.abs(mass), initial=0.0))
        converged = max(re, rm) < max(tol, 1e-8)
        if not converged:
            raise ConvergenceError(
                f"scenario {k}: no convergence after {it} iterations "
                f"(residual {max(re, rm):.3e})", residual=max(re, rm))
        return HydraulicState(q, h, k, max(re, rm), re, rm, it, converged)


def solve_hydraulics(net, theta, k=0, eta=None, solver=None, **kwargs):
    """Solve scenario ``k`` for roughness vector ``theta`` (one C-factor per group)."""
    solver = solver or NullSpaceSolver(net)
    return solver.solve(theta, k, eta=eta, **kwargs)


def solve_all(net, theta, solver=None, **kwargs):
    solver = solver or NullSpaceSolver(net)
    return [solver.solve(theta, k, **kwargs) for k in range(net.n_t)]
