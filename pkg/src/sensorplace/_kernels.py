"""Hot inner loops of the p-median objective.

Two interchangeable backends share one signature per kernel: a numba
``@njit`` version and a vectorised numpy version.  The numba path is used
when numba imports cleanly and ``SENSORPLACE_DISABLE_NUMBA`` is unset (or
``0``).  ``set_backend`` switches at runtime, which the benchmark and the
cross-backend tests rely on.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

# remaining assignment mass below this counts as fully served
FILL_TOL = 1e-9


def _numba_requested():
    flag = os.environ.get("SENSORPLACE_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


# ---------------------------------------------------------------- numpy path


def _nearest_sensor_np(C, selected):
    n = C.shape[0]
    D = C[:, selected].copy()
    # a sensor node is not served by itself
    D[selected, np.arange(selected.size)] = np.inf
    best = D.min(axis=1) if selected.size else np.full(n, np.inf)
    return best.sum()


def _greedy_fill_np(C, order, z):
    n = C.shape[0]
    rows = np.arange(n)[:, None]
    zs = z[order]
    cs = C[rows, order]
    cum = np.cumsum(zs, axis=1)
    before = cum - zs
    take = np.clip(np.minimum(zs, 1.0 - before), 0.0, None)
    take[before >= 1.0 - FILL_TOL] = 0.0
    value = (cs * take).sum(axis=1).sum()

    served = take > 0.0
    # index of the last positively filled slot in each row
    last = served.shape[1] - 1 - np.argmax(served[:, ::-1], axis=1)
    t = cs[np.arange(n), last]
    t[~served.any(axis=1)] = 0.0
    feasible = bool(np.all(cum[:, -1] >= 1.0 - FILL_TOL)) if n > 1 else False

    excess = np.maximum(t[:, None] - C, 0.0)
    np.fill_diagonal(excess, 0.0)
    grad = -excess.sum(axis=0)
    return value, t, grad, feasible


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _nearest_sensor_nb(C, selected):
        n = C.shape[0]
        total = 0.0
        for i in range(n):
            best = np.inf
            for s in selected:
                if s != i and C[i, s] < best:
                    best = C[i, s]
            total += best
        return total

    @njit(cache=True)
    def _greedy_fill_nb(C, order, z):
        n = C.shape[0]
        width = order.shape[1]
        t = np.zeros(n)
        grad = np.zeros(n)
        total = 0.0
        feasible = n > 1
        for i in range(n):
            remaining = 1.0
            value = 0.0
            last = 0.0
            stop = width - 1
            for k in range(width):
                j = order[i, k]
                zj = z[j]
                if zj <= 0.0:
                    continue
                take = zj if zj < remaining else remaining
                value += C[i, j] * take
                remaining -= take
                last = C[i, j]
                if remaining <= FILL_TOL:
                    stop = k
                    break
            if remaining > FILL_TOL:
                feasible = False
            t[i] = last
            total += value
            # every j with C_ij < t_i sits in the walked prefix
            for k in range(stop + 1):
                j = order[i, k]
                d = last - C[i, j]
                if d > 0.0:
                    grad[j] -= d
        return total, t, grad, feasible


_IMPLS = {
    "numpy": (_nearest_sensor_np, _greedy_fill_np),
}
if HAVE_NUMBA:
    _IMPLS["numba"] = (_nearest_sensor_nb, _greedy_fill_nb)

_backend = "numba" if HAVE_NUMBA and _numba_requested() else "numpy"


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in _IMPLS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(_IMPLS)}")
    previous, _backend = _backend, name
    return previous


def available_backends():
    return sorted(_IMPLS)


def nearest_sensor_sum(C, selected):
    """Sum over all nodes of the distance to the closest *other* selected node."""
    selected = np.ascontiguousarray(selected, dtype=np.int64)
    return float(_IMPLS[_backend][0](C, selected))


def greedy_fill(C, order, z):
    """Per-node greedy solution of the fractional assignment LP.

    Returns ``(value, marginal_cost, subgradient, feasible)``.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    value, t, grad, feasible = _IMPLS[_backend][1](C, order, z)
    return float(value), t, grad, bool(feasible)
