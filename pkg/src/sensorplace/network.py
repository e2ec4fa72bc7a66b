"""Network data model, INP-subset parsing and graph structures.

The parser reads the subset of EPANET's INP format needed for steady-state
sensitivity work: junctions, reservoirs, pipes and valves, plus two
extension sections, ``[GROUPS]`` (pipe roughness groups) and
``[SCENARIOS]`` (per-scenario demand, inlet head and valve loss snapshots).
Scenarios may also come from a sidecar CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import NetworkParseError, ValidationError

log = logging.getLogger(__name__)

# Valves have no physical length in INP files. They still need a positive
# graph weight so that shortest-path routines keep the edge.
VALVE_LENGTH = 1e-3

# flow unit -> m^3/s
FLOW_UNITS = {
    "CFS": 0.028316846592,
    "GPM": 6.30901964e-5,
    "MGD": 0.0438126364,
    "IMGD": 0.0526167961,
    "AFD": 0.0142764101,
    "LPS": 1e-3,
    "LPM": 1e-3 / 60.0,
    "MLD": 1e3 / 86400.0,
    "CMH": 1.0 / 3600.0,
    "CMD": 1.0 / 86400.0,
    "CMS": 1.0,
    "SI": 1.0,
}
US_UNITS = {"CFS", "GPM", "MGD", "IMGD", "AFD"}

KNOWN_SECTIONS = {
    "TITLE", "JUNCTIONS", "RESERVOIRS", "PIPES", "VALVES", "DEMANDS",
    "GROUPS", "SCENARIOS", "OPTIONS", "END",
}
UNSUPPORTED_SECTIONS = {"TANKS", "PUMPS"}


@dataclass(frozen=True)
class Node:
    id: str
    elevation: float
    demands: tuple  # m^3/s, one entry per scenario


@dataclass(frozen=True)
class Inlet:
    id: str
    heads: tuple  # m, one entry per scenario


@dataclass(frozen=True)
class Link:
    id: str
    start: str
    end: str
    length: float
    diameter: float
    kind: str = "pipe"  # "pipe" or "valve"
    group: int | None = None
    roughness: float | None = None  # nominal Hazen-Williams C from the file
    minor_loss: float = 0.0
    losses: tuple = ()  # valves only: fixed head loss per scenario, m
    valve_type: str | None = None

    @property
    def is_valve(self):
        return self.kind == "valve"


@dataclass(frozen=True)
class Network:
    nodes: tuple
    inlets: tuple
    links: tuple
    name: str = ""
    n_groups: int = field(default=0)

    def __post_init__(self):
        if not self.n_groups:
            groups = [l.group for l in self.links if l.group is not None]
            object.__setattr__(self, "n_groups", max(groups, default=0))
        self.validate()

    # sizes ------------------------------------------------------------
    @property
    def n_n(self):
        return len(self.nodes)

    @property
    def n_p(self):
        return len(self.links)

    @property
    def n_0(self):
        return len(self.inlets)

    @property
    def n_r(self):
        return self.n_groups

    @property
    def n_t(self):
        if self.nodes:
            return len(self.nodes[0].demands)
        return len(self.inlets[0].heads) if self.inlets else 0

    @cached_property
    def valve_indices(self):
        return [i for i, l in enumerate(self.links) if l.is_valve]

    @property
    def n_v(self):
        return len(self.valve_indices)

    @cached_property
    def node_index(self):
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def inlet_index(self):
        return {r.id: i for i, r in enumerate(self.inlets)}

    @cached_property
    def link_index(self):
        return {l.id: i for i, l in enumerate(self.links)}

    def demands(self, k):
        return np.array([n.demands[k] for n in self.nodes])

    def inlet_heads(self, k):
        return np.array([r.heads[k] for r in self.inlets])

    def valve_losses(self, k):
        return np.array([self.links[i].losses[k] for i in self.valve_indices])

    def nominal_roughness(self):
        """Mean file roughness per group, used when no estimate is configured."""
        theta = np.full(self.n_r, np.nan)
        for r in range(1, self.n_r + 1):
            vals = [l.roughness for l in self.links
                    if l.group == r and l.roughness is not None]
            if vals:
                theta[r - 1] = float(np.mean(vals))
        return theta

    # validation -------------------------------------------------------
    def validate(self):
        ids = [n.id for n in self.nodes] + [r.id for r in self.inlets]
        seen = set()
        for i in ids:
            if i in seen:
                raise ValidationError(f"duplicate node/inlet id {i!r}")
            seen.add(i)
        if not self.inlets:
            raise ValidationError("network has no inlet (reservoir)")
        counts = {len(n.demands) for n in self.nodes}
        counts |= {len(r.heads) for r in self.inlets}
        counts |= {len(l.losses) for l in self.links if l.is_valve}
        if len(counts) > 1:
            raise ValidationError(f"inconsistent scenario counts {sorted(counts)}")
        if counts == {0}:
            raise ValidationError("no scenarios defined")
        link_ids = set()
        for l in self.links:
            if l.id in link_ids:
                raise ValidationError(f"duplicate link id {l.id!r}")
            link_ids.add(l.id)
            for end in (l.start, l.end):
                if end not in seen:
                    raise ValidationError(
                        f"link {l.id!r} references unknown node {end!r}")
            if l.start == l.end:
                raise ValidationError(f"link {l.id!r} is a self-loop")
            if not (l.length > 0 and l.diameter > 0):
                raise ValidationError(
                    f"link {l.id!r} needs positive length and diameter")
            if l.kind == "pipe":
                if l.group is None or not 1 <= l.group <= self.n_groups:
                    raise ValidationError(
                        f"pipe {l.id!r} has group {l.group}, expected 1..{self.n_groups}")
            elif l.kind == "valve":
                if l.group is not None:
                    raise ValidationError(f"valve {l.id!r} must not carry a group")
            else:
                raise ValidationError(f"link {l.id!r} has unknown kind {l.kind!r}")
        self._check_connected()

    def _check_connected(self):
        n_all = self.n_n + self.n_0
        index = {**self.node_index,
                 **{r: self.n_n + i for r, i in self.inlet_index.items()}}
        parent = list(range(n_all))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for l in self.links:
            a, b = find(index[l.start]), find(index[l.end])
            if a != b:
                parent[a] = b
        roots = {find(i) for i in range(n_all)}
        if len(roots) > 1:
            isolated = [self.nodes[i].id for i in range(self.n_n)
                        if find(i) != find(self.n_n)]
            raise ValidationError(
                f"network is not connected (e.g. {isolated[:5]} cut off from "
                f"{self.inlets[0].id!r})")

    # serialisation ----------------------------------------------------
    def to_dict(self):
        return {
            "name": self.name,
            "n_groups": self.n_groups,
            "nodes": [
                {"id": n.id, "elevation": n.elevation, "demands": list(n.demands)}
                for n in self.nodes
            ],
            "inlets": [{"id": r.id, "heads": list(r.heads)} for r in self.inlets],
            "links": [
                {
                    "id": l.id, "start": l.start, "end": l.end,
                    "length": l.length, "diameter": l.diameter, "kind": l.kind,
                    "group": l.group, "roughness": l.roughness,
                    "minor_loss": l.minor_loss, "losses": list(l.losses),
                    "valve_type": l.valve_type,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            nodes=tuple(Node(d["id"], d["elevation"], tuple(d["demands"]))
                        for d in data["nodes"]),
            inlets=tuple(Inlet(d["id"], tuple(d["heads"])) for d in data["inlets"]),
            links=tuple(
                Link(d["id"], d["start"], d["end"], d["length"], d["diameter"],
                     d["kind"], d["group"], d["roughness"], d["minor_loss"],
                     tuple(d["losses"]), d["valve_type"])
                for d in data["links"]),
            name=data.get("name", ""),
            n_groups=data.get("n_groups", 0),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_inp(self):
        """Write the network back in the INP subset (base SI units, exact floats)."""
        out = io.StringIO()
        w = out.write
        w(f"[TITLE]\n{self.name}\n\n[OPTIONS]\n Units SI\n\n[JUNCTIONS]\n")
        for n in self.nodes:
            w(f" {n.id} {n.elevation!r} {n.demands[0]!r}\n")
        w("\n[RESERVOIRS]\n")
        for r in self.inlets:
            w(f" {r.id} {r.heads[0]!r}\n")
        w("\n[PIPES]\n")
        for l in self.links:
            if not l.is_valve:
                rough = l.roughness if l.roughness is not None else 100.0
                w(f" {l.id} {l.start} {l.end} {l.length!r} {l.diameter!r} "
                  f"{rough!r} {l.minor_loss!r} Open\n")
        w("\n[VALVES]\n")
        for l in self.links:
            if l.is_valve:
                w(f" {l.id} {l.start} {l.end} {l.diameter!r} {l.valve_type or 'TCV'} "
                  f"{l.losses[0]!r} {l.minor_loss!r} {l.length!r}\n")
        w("\n[GROUPS]\n")
        for l in self.links:
            if l.group is not None:
                w(f" {l.id} {l.group}\n")
        w("\n[SCENARIOS]\n")
        for n in self.nodes:
            w(" " + " ".join([n.id, *map(repr, n.demands)]) + "\n")
        for r in self.inlets:
            w(" " + " ".join([r.id, *map(repr, r.heads)]) + "\n")
        for l in self.links:
            if l.is_valve:
                w(" " + " ".join([l.id, *map(repr, l.losses)]) + "\n")
        w("\n[END]\n")
        return out.getvalue()


# ------------------------------------------------------------------- parsing


def _floats(parts, lineno, what):
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise NetworkParseError(f"non-numeric {what}: {' '.join(parts)}", lineno)


def _read_sections(text):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise NetworkParseError(f"malformed section header {line!r}", lineno)
            current = line[1:-1].strip().upper()
            if current in UNSUPPORTED_SECTIONS:
                raise NetworkParseError(f"section [{current}] is not supported", lineno)
            if current not in KNOWN_SECTIONS:
                log.warning("ignoring unknown section [%s] (line %d)", current, lineno)
            sections.setdefault(current, [])
            continue
        if current is None:
            raise NetworkParseError("data before first section header", lineno)
        sections[current].append((lineno, line.split()))
    return sections


def _parse_scenario_rows(rows):
    table = {}
    for lineno, parts in rows:
        if len(parts) < 2:
            raise NetworkParseError("scenario row needs an id and values", lineno)
        table[parts[0]] = _floats(parts[1:], lineno, "scenario values")
    return table


def read_scenario_csv(text):
    """Parse ``id,v1,v2,...`` rows (SI units) into ``{id: [values]}``."""
    table = {}
    reader = csv.reader(io.StringIO(text))
    header = True
    for lineno, row in enumerate(reader, start=1):
        row = [c.strip() for c in row if c.strip() != ""]
        if not row or row[0].startswith("#"):
            continue
        try:
            values = [float(c) for c in row[1:]]
        except ValueError:
            if header:
                header = False
                continue
            raise NetworkParseError(f"non-numeric scenario values {row}", lineno)
        header = False
        if not values:
            raise NetworkParseError("scenario row needs values", lineno)
        table[row[0]] = values
    return table


def parse_network(text, scenarios=None, name=None):
    """Parse INP-subset ``text`` into a validated :class:`Network`.

    ``scenarios`` optionally maps element ids to per-scenario values (SI):
    demand for junctions, head for reservoirs, head loss for valves. It
    overrides any ``[SCENARIOS]`` section in the file.
    """
    sections = _read_sections(text)
    units = "CMS"
    for lineno, parts in sections.get("OPTIONS", []):
        if parts[0].upper() == "UNITS" and len(parts) > 1:
            units = parts[1].upper()
            if units not in FLOW_UNITS:
                raise NetworkParseError(f"unknown flow units {parts[1]!r}", lineno)
    flow = FLOW_UNITS[units]
    if units == "SI":
        length_f, diam_f = 1.0, 1.0
    elif units in US_UNITS:
        length_f, diam_f = 0.3048, 0.0254
    else:
        length_f, diam_f = 1.0, 1e-3

    if name is None:
        title = sections.get("TITLE", [])
        name = " ".join(title[0][1]) if title else ""

    junctions = {}
    for lineno, parts in sections.get("JUNCTIONS", []):
        if len(parts) < 2:
            raise NetworkParseError("junction needs id and elevation", lineno)
        vals = _floats(parts[1:3], lineno, "junction data")
        demand = vals[1] * flow if len(vals) > 1 else 0.0
        junctions[parts[0]] = [vals[0] * length_f, demand]
    demand_rows = {}
    for lineno, parts in sections.get("DEMANDS", []):
        if len(parts) < 2:
            raise NetworkParseError("demand row needs id and value", lineno)
        if parts[0] not in junctions:
            raise ValidationError(f"[DEMANDS] references unknown junction {parts[0]!r}")
        demand_rows.setdefault(parts[0], 0.0)
        demand_rows[parts[0]] += _floats(parts[1:2], lineno, "demand")[0] * flow
    for jid, d in demand_rows.items():
        junctions[jid][1] = d

    reservoirs = {}
    for lineno, parts in sections.get("RESERVOIRS", []):
        if len(parts) < 2:
            raise NetworkParseError("reservoir needs id and head", lineno)
        reservoirs[parts[0]] = _floats(parts[1:2], lineno, "reservoir head")[0] * length_f

    groups = {}
    for lineno, parts in sections.get("GROUPS", []):
        if len(parts) != 2:
            raise NetworkParseError("group row must be '<pipe id> <group>'", lineno)
        try:
            groups[parts[0]] = int(parts[1])
        except ValueError:
            raise NetworkParseError(f"group index {parts[1]!r} is not an integer", lineno)

    raw_links = []
    for lineno, parts in sections.get("PIPES", []):
        if len(parts) < 6:
            raise NetworkParseError("pipe needs id, node1, node2, length, diameter, roughness", lineno)
        length, diameter, rough = _floats(parts[3:6], lineno, "pipe data")
        minor = _floats(parts[6:7], lineno, "minor loss")[0] if len(parts) > 6 else 0.0
        status = parts[7].upper() if len(parts) > 7 else "OPEN"
        if status == "CLOSED":
            log.warning("dropping closed pipe %s (line %d)", parts[0], lineno)
            continue
        raw_links.append(dict(
            id=parts[0], start=parts[1], end=parts[2], length=length * length_f,
            diameter=diameter * diam_f, kind="pipe",
            group=groups.get(parts[0], 1), roughness=rough, minor_loss=minor,
        ))
    for lineno, parts in sections.get("VALVES", []):
        if len(parts) < 6:
            raise NetworkParseError("valve needs id, node1, node2, diameter, type, setting", lineno)
        diameter, setting = _floats([parts[3], parts[5]], lineno, "valve data")
        minor = _floats(parts[6:7], lineno, "minor loss")[0] if len(parts) > 6 else 0.0
        length = _floats(parts[7:8], lineno, "valve length")[0] if len(parts) > 7 else VALVE_LENGTH
        if parts[0] in groups:
            raise ValidationError(f"valve {parts[0]!r} cannot belong to a group")
        raw_links.append(dict(
            id=parts[0], start=parts[1], end=parts[2], length=length,
            diameter=diameter * diam_f, kind="valve", group=None, roughness=None,
            minor_loss=minor, setting=setting * (1.0 if units == "SI" else length_f),
            valve_type=parts[4].upper(),
        ))
    unknown_groups = set(groups) - {l["id"] for l in raw_links}
    if unknown_groups:
        raise ValidationError(f"[GROUPS] references unknown pipes {sorted(unknown_groups)}")

    table = _parse_scenario_rows(sections.get("SCENARIOS", []))
    if scenarios is not None:
        table = dict(scenarios)
    n_t = len(next(iter(table.values()))) if table else 1
    known = set(junctions) | set(reservoirs) | {l["id"] for l in raw_links if l["kind"] == "valve"}
    for key, values in table.items():
        if key not in known:
            raise ValidationError(f"scenario data references unknown element {key!r}")
        if len(values) != n_t:
            raise ValidationError(f"scenario row {key!r} has {len(values)} values, expected {n_t}")

    def series(key, base):
        return tuple(table[key]) if key in table else (base,) * n_t

    nodes = tuple(Node(j, v[0], series(j, v[1])) for j, v in junctions.items())
    inlets = tuple(Inlet(r, series(r, h)) for r, h in reservoirs.items())
    links = []
    for d in raw_links:
        setting = d.pop("setting", None)
        if d["kind"] == "valve":
            d["losses"] = series(d["id"], setting)
        links.append(Link(**d))
    return Network(nodes, inlets, tuple(links), name=name)


def load_network(inp_path, scenario_path=None):
    with open(inp_path) as fh:
        text = fh.read()
    scenarios = None
    if scenario_path is not None:
        with open(scenario_path) as fh:
            scenarios = read_scenario_csv(fh.read())
    return parse_network(text, scenarios)


# ---------------------------------------------------------------- structures


@dataclass(frozen=True)
class IncidenceSet:
    A12: sp.csr_matrix  # n_p x n_n
    A10: sp.csr_matrix  # n_p x n_0
    A13: sp.csr_matrix  # n_p x n_v


def build_incidence(net):
    """Signed incidence matrices of the hydraulic equations.

    Flow is positive from ``start`` to ``end``; a link row holds -1 at its
    start and +1 at its end, so that ``A12^T q`` is the net inflow at each
    node and the energy rows read ``loss + h_end - h_start = 0``.
    """
    rows12, cols12, vals12 = [], [], []
    rows10, cols10, vals10 = [], [], []
    for l, link in enumerate(net.links):
        for node, sign in ((link.start, -1.0), (link.end, 1.0)):
            if node in net.node_index:
                rows12.append(l)
                cols12.append(net.node_index[node])
                vals12.append(sign)
            else:
                rows10.append(l)
                cols10.append(net.inlet_index[node])
                vals10.append(sign)
    A12 = sp.csr_matrix((vals12, (rows12, cols12)), shape=(net.n_p, net.n_n))
    A10 = sp.csr_matrix((vals10, (rows10, cols10)), shape=(net.n_p, net.n_0))
    vi = net.valve_indices
    A13 = sp.csr_matrix((np.ones(len(vi)), (vi, np.arange(len(vi)))),
                        shape=(net.n_p, len(vi)))
    return IncidenceSet(A12, A10, A13)


@dataclass(frozen=True)
class CostMatrix:
    C: np.ndarray  # n_n x n_n shortest-path lengths, m
    order: np.ndarray  # n_n x (n_n - 1): other nodes by ascending C, ties by index

    @classmethod
    def from_matrix(cls, C):
        C = np.ascontiguousarray(C, dtype=np.float64)
        n = C.shape[0]
        order = np.empty((n, max(n - 1, 0)), dtype=np.int64)
        for i in range(n):
            row = np.argsort(C[i], kind="stable")
            order[i] = row[row != i]
        return cls(C, order)


def shortest_path_costs(net):
    """All-pairs shortest paths between nodes; inlets are traversable only."""
    n_all = net.n_n + net.n_0
    index = {**net.node_index,
             **{r: net.n_n + i for r, i in net.inlet_index.items()}}
    best = {}
    for l in net.links:
        a, b = sorted((index[l.start], index[l.end]))
        best[(a, b)] = min(best.get((a, b), math.inf), l.length)
    pairs = np.array(list(best.keys()), dtype=np.int64).reshape(-1, 2)
    graph = sp.csr_matrix((list(best.values()), (pairs[:, 0], pairs[:, 1])),
                          shape=(n_all, n_all))
    dist = dijkstra(graph, directed=False, indices=np.arange(net.n_n))
    C = dist[:, : net.n_n]
    if not np.all(np.isfinite(C)):
        bad = np.where(~np.isfinite(C).all(axis=1))[0]
        raise ValidationError(
            f"nodes {[net.nodes[i].id for i in bad[:5]]} are disconnected; "
            "p-median costs undefined")
    return CostMatrix.from_matrix(C)


@dataclass(frozen=True)
class AdjacencyConstraints:
    G: sp.csr_matrix  # n_p x n_n, 0/1
    b: np.ndarray

    @cached_property
    def neighbors(self):
        """Node -> set of nodes sharing a link with it."""
        out = [set() for _ in range(self.G.shape[1])]
        for row in range(self.G.shape[0]):
            cols = self.G.indices[self.G.indptr[row]:self.G.indptr[row + 1]]
            if len(cols) == 2:
                a, b = cols
                out[a].add(int(b))
                out[b].add(int(a))
        return [frozenset(s) for s in out]

    def violation(self, z):
        return float(np.max(self.G @ np.asarray(z, dtype=float) - self.b)) if self.G.shape[0] else -1.0

    def feasible(self, z):
        return self.violation(z) <= 0.0


def adjacency_constraints(net):
    rows, cols = [], []
    for l, link in enumerate(net.links):
        for node in (link.start, link.end):
            if node in net.node_index:
                rows.append(l)
                cols.append(net.node_index[node])
    G = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(net.n_p, net.n_n))
    G.sort_indices()
    return AdjacencyConstraints(G, np.ones(net.n_p))
