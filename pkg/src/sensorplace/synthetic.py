"""Synthetic networks for tests, the ``verify`` command and benchmarks."""

import numpy as np

from .network import Inlet, Link, Network, Node

SCENARIO_FACTORS = (0.6, 1.0, 1.4)


def _finish(name, positions, edges, inlet_edges, rng, n_groups, n_scenarios,
            base_demand, inlet_head, diameter_range):
    n = len(positions)
    factors = np.array(SCENARIO_FACTORS[:n_scenarios]
                       if n_scenarios <= len(SCENARIO_FACTORS)
                       else np.linspace(0.5, 1.5, n_scenarios))
    demand = base_demand * rng.uniform(0.5, 1.5, size=n)
    nodes = tuple(
        Node(f"N{i + 1}", float(rng.uniform(0.0, 10.0)),
             tuple(float(x) for x in demand[i] * factors))
        for i in range(n))
    inlets = tuple(
        Inlet(f"R{r + 1}", tuple(float(inlet_head - 2.0 * r + 0.5 * s)
                                 for s in range(n_scenarios)))
        for r in range(len(inlet_edges)))
    # groups by horizontal band, so every group is spatially contiguous
    xs = np.array([p[0] for p in positions])
    cuts = np.quantile(xs, np.linspace(0, 1, n_groups + 1)[1:-1]) if n_groups > 1 else []
    links = []
    for e, (a, b) in enumerate(edges):
        mid = 0.5 * (positions[a][0] + positions[b][0])
        group = int(np.searchsorted(cuts, mid, side="right")) + 1
        length = float(np.hypot(*np.subtract(positions[a], positions[b])) * rng.uniform(0.9, 1.1))
        links.append(Link(f"P{e + 1}", f"N{a + 1}", f"N{b + 1}", max(length, 1.0),
                          float(rng.uniform(*diameter_range)), "pipe", group,
                          float(rng.choice([90.0, 110.0, 130.0]))))
    for r, a in enumerate(inlet_edges):
        links.append(Link(f"S{r + 1}", f"R{r + 1}", f"N{a + 1}", 50.0,
                          float(diameter_range[1]) * 1.5, "pipe", 1, 120.0))
    return Network(nodes, inlets, tuple(links), name=name, n_groups=n_groups)


def grid_network(rows, cols, n_groups=3, n_scenarios=3, n_inlets=1, seed=0,
                 spacing=100.0, base_demand=1e-3, inlet_head=100.0,
                 diameter_range=(0.1, 0.3), drop_fraction=0.0):
    """Looped grid; ``drop_fraction`` removes random non-bridge links."""
    rng = np.random.default_rng(seed)
    positions = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    if drop_fraction > 0:
        edges = _drop_links(len(positions), edges, drop_fraction, rng)
    corners = [0, rows * cols - 1, cols - 1, (rows - 1) * cols]
    return _finish(f"grid{rows}x{cols}", positions, edges, corners[:n_inlets], rng,
                   n_groups, n_scenarios, base_demand, inlet_head, diameter_range)


def tree_network(n, n_groups=2, n_scenarios=3, seed=0, base_demand=1e-3,
                 inlet_head=100.0, diameter_range=(0.1, 0.3)):
    rng = np.random.default_rng(seed)
    positions = [(0.0, 0.0)]
    edges = []
    for i in range(1, n):
        p = int(rng.integers(0, i))
        positions.append((positions[p][0] + rng.uniform(50, 150),
                          positions[p][1] + rng.uniform(-100, 100)))
        edges.append((p, i))
    return _finish(f"tree{n}", positions, edges, [0], rng, n_groups, n_scenarios,
                   base_demand, inlet_head, diameter_range)


def random_looped_network(n, extra_links=None, n_groups=3, n_scenarios=3,
                          n_inlets=1, seed=0, base_demand=1e-3, inlet_head=100.0,
                          diameter_range=(0.1, 0.3)):
    """Random geometric network: nearest-neighbour tree plus short chords."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100.0 * np.sqrt(n), size=(n, 2))
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    # Prim's tree keeps the layout planar-ish
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    src = np.zeros(n, dtype=int)
    edges = []
    for _ in range(n - 1):
        cand = np.where(~in_tree, best, np.inf)
        j = int(np.argmin(cand))
        edges.append((int(src[j]), j))
        in_tree[j] = True
        closer = d[j] < best
        src[closer] = j
        best = np.minimum(best, d[j])
    extra = n // 3 if extra_links is None else extra_links
    have = {tuple(sorted(e)) for e in edges}
    pairs = sorted(((d[a, b], a, b) for a in range(n) for b in range(a + 1, n)
                    if (a, b) not in have))
    for _, a, b in pairs[:extra]:
        edges.append((a, b))
    positions = [tuple(p) for p in pts]
    inlet_nodes = [int(i) for i in rng.choice(n, size=n_inlets, replace=False)]
    return _finish(f"random{n}", positions, edges, inlet_nodes, rng, n_groups,
                   n_scenarios, base_demand, inlet_head, diameter_range)


def _drop_links(n, edges, fraction, rng):
    keep = list(edges)
    for idx in rng.permutation(len(edges)):
        if len(keep) <= n - 1 or rng.uniform() > fraction:
            continue
        trial = [e for e in keep if e != edges[idx]]
        if _connected(n, trial):
            keep = trial
    return keep


def _connected(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(i) for i in range(n)}) == 1


def single_pipe(h0=50.0, demand=0.01, length=100.0, diameter=0.1, theta=100.0):
    return Network(
        nodes=(Node("J1", 0.0, (demand,)),),
        inlets=(Inlet("R1", (h0,)),),
        links=(Link("P1", "R1", "J1", length, diameter, "pipe", 1, theta),),
        name="single-pipe",
    )
