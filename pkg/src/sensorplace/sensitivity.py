"""Parameter sensitivities of flows and heads, and the information matrix."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, SingularInformationError, ValidationError
from .hydraulics import NullSpaceSolver, dpsi, link_coefficients, psi
from .linalg import SPDFactor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JacobianBlocks:
    B: np.ndarray  # n_p x n_r, d(head loss)/d(theta)
    N: np.ndarray  # exponents n_l
    A11: np.ndarray  # rho_l |q_l|^(n_l - 1), smoothed
    F: np.ndarray  # d(head loss)/dq, the diagonal of N A11


def jacobian_B(net, state, theta, headloss="H-W"):
    c = link_coefficients(net, theta, headloss)
    q = state.q
    B = np.zeros((net.n_p, net.n_r))
    pipes = c.group >= 0
    B[np.where(pipes)[0], c.group[pipes]] = (c.drho * psi(q, c.exponent))[pipes]
    aq = np.abs(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        a11 = np.where(aq > 0, c.rho * psi(q, c.exponent) / np.where(aq > 0, q, 1.0),
                       c.rho * dpsi(q, c.exponent))
    return JacobianBlocks(B, c.exponent, a11, c.rho * dpsi(q, c.exponent))


def sensitivity_vectors(net, states, theta, solver=None, headloss="H-W"):
    """Gradients of every flow and head with respect to every group roughness.

    Returns an array ``S`` of shape ``(n_t, n_p + n_n, n_r)`` with
    ``S[k, i]`` the gradient of quantity ``i`` (flows first, then heads) in
    scenario ``k``. One factorisation of ``A12^T A12`` is shared by all
    scenarios and one of ``Z^T F Z`` is made per scenario.
    """
    solver = solver or NullSpaceSolver(net, headloss=headloss)
    A12 = solver.A12
    Z = solver.Z
    n_p, n_n = net.n_p, net.n_n
    # w_i for head rows; flow rows have w_i = 0
    W = solver.gram.solve(np.eye(n_n))
    A12W = A12 @ W  # n_p x n_n
    out = np.empty((len(states), n_p + n_n, net.n_r))
    for k, state in enumerate(states):
        blocks = jacobian_B(net, state, theta, headloss)
        F = blocks.F
        delta = np.zeros((n_p, n_p + n_n))
        delta[:, n_p:] = A12W
        if Z.shape[1]:
            try:
                P = SPDFactor((Z.T @ sp.diags(F) @ Z).tocsc(), what=f"Z^T N A11 Z (scenario {k})")
            except NumericalError as exc:
                raise NumericalError(
                    f"{exc}; a loop with zero flow makes the sensitivity system singular"
                ) from exc
            rhs = np.empty((Z.shape[1], n_p + n_n))
            rhs[:, :n_p] = Z.T.toarray()
            rhs[:, n_p:] = -(Z.T @ (F[:, None] * A12W))
            V = P.solve(rhs)
            delta += Z @ V
        out[k] = -(blocks.B.T @ delta).T
    return out


def saddle_oracle(net, states, theta, headloss="H-W"):
    """Same quantity as :func:`sensitivity_vectors` from the full dense KKT solve."""
    from .network import build_incidence

    A12 = build_incidence(net).A12.toarray()
    n_p, n_n = net.n_p, net.n_n
    out = np.empty((len(states), n_p + n_n, net.n_r))
    for k, state in enumerate(states):
        blocks = jacobian_B(net, state, theta, headloss)
        K = np.zeros((n_p + n_n, n_p + n_n))
        K[:n_p, :n_p] = np.diag(blocks.F)
        K[:n_p, n_p:] = A12
        K[n_p:, :n_p] = A12.T
        rhs = np.zeros((n_p + n_n, net.n_r))
        rhs[:n_p] = blocks.B
        out[k] = -np.linalg.solve(K, rhs)
    return out


def head_sensitivities(net, sens):
    """``A_j`` for every node: array ``(n_n, n_r, n_t)``."""
    return np.ascontiguousarray(sens[:, net.n_p:, :].transpose(1, 2, 0))


def flow_sensitivities(net, sens, links):
    return np.ascontiguousarray(sens[:, list(links), :].transpose(1, 2, 0))


@dataclass(frozen=True)
class SensitivityBundle:
    A: np.ndarray  # (n_n, n_r', n_t) head sensitivities of estimated groups
    X0: np.ndarray  # (n_r', n_r')
    sigma: float = 1.0
    lam: float = np.inf
    groups: tuple = ()  # 0-based estimated groups

    @property
    def n_n(self):
        return self.A.shape[0]

    @property
    def n_r(self):
        return self.A.shape[1]

    @property
    def outer(self):
        """Per-node ``A_j A_j^T`` stacked as ``(n_n, n_r, n_r)``."""
        cached = self.__dict__.get("_outer")
        if cached is None:
            cached = np.einsum("jak,jbk->jab", self.A, self.A)
            object.__setattr__(self, "_outer", cached)
        return cached

    def information(self, z):
        return self.X0 + np.einsum("j,jab->ab", np.asarray(z, dtype=float), self.outer)


def build_information(net, sens, flow_sensors=(), sigma=1.0, lam=np.inf,
                      estimated_groups=None):
    """Assemble the sensitivity bundle used by the D-optimality objective.

    ``flow_sensors`` indexes links with fixed flow meters (duplicates count
    twice). A finite prior variance ``lam`` adds ``(sigma^2 / lam) I``.
    """
    groups = tuple(range(net.n_r)) if estimated_groups is None else tuple(estimated_groups)
    if not groups:
        raise ValidationError("no parameter groups left to estimate")
    if min(groups) < 0 or max(groups) >= net.n_r:
        raise ValidationError(f"estimated groups {groups} out of range 0..{net.n_r - 1}")
    sens = sens[:, :, list(groups)]
    A = head_sensitivities(net, sens)
    flow = flow_sensitivities(net, sens, flow_sensors)
    X0 = np.einsum("jak,jbk->ab", flow, flow) if len(flow_sensors) else np.zeros((len(groups),) * 2)
    if np.isfinite(lam):
        if lam <= 0:
            raise ValidationError("prior variance lambda must be positive")
        X0 = X0 + (sigma ** 2 / lam) * np.eye(len(groups))
    bundle = SensitivityBundle(A, 0.5 * (X0 + X0.T), float(sigma), float(lam), groups)
    full = bundle.information(np.ones(net.n_n))
    eig = np.linalg.eigvalsh(full)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        msg = ("information matrix is singular even with a sensor at every node; "
               "the head sensitivities do not span all parameter groups")
        if not np.isfinite(lam):
            msg += " - set a finite prior variance lambda"
        raise SingularInformationError(msg)
    return bundle


# ------------------------------------------------------------------- cache


def bundle_key(net, theta, scenarios, **params):
    h = hashlib.sha256()
    h.update(net.to_json().encode())
    h.update(np.asarray(theta, dtype=float).tobytes())
    h.update(json.dumps({"scenarios": list(scenarios), **params}, sort_keys=True,
                        default=str).encode())
    return h.hexdigest()[:32]


def save_bundle(path, bundle):
    np.savez(path, A=bundle.A, X0=bundle.X0, sigma=bundle.sigma, lam=bundle.lam,
             groups=np.array(bundle.groups, dtype=np.int64))


def load_bundle(path):
    with np.load(path) as f:
        return SensitivityBundle(f["A"], f["X0"], float(f["sigma"]), float(f["lam"]),
                                 tuple(int(g) for g in f["groups"]))


def cached_bundle(cache_dir, key, build):
    """Return the bundle stored under ``key`` or build and store it."""
    if cache_dir is None:
        return build()
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"sens-{key}.npz")
    if os.path.exists(path):
        log.info("loading sensitivity cache %s", path)
        return load_bundle(path)
    bundle = build()
    save_bundle(path, bundle)
    return bundle
