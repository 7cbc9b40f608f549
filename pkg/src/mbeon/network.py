"""
Topology ingestion, k-shortest-path routing, biased demand generation and
precomputation of channel-connection capacity tables (CCRs).

Topology files are JSON::

    {"nodes": [{"id": ..., "name": ..., "core": true, "population": 1.0}, ...],
     "links": [{"a": ..., "b": ..., "length_km": 160.0, "spans_km": [80, 80]}, ...]}
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree

from .pep import fit_loss_model, solve_pep
from .physics import AmplifierSpec, ChannelGrid, FiberSpec, SpanSpec, default_amplifiers, default_fiber
from .qot import (
    DEFAULT_NLI,
    PenaltyConfig,
    TransceiverSpec,
    lightpath_gsnr,
    modulation_from_gsnr,
    span_gsnr,
)

logger = logging.getLogger(__name__)

SPAN_SUM_TOLERANCE_KM = 1.0
LCI_RATES_GBPS = (100, 200, 300, 400, 500, 600)


class TopologyError(ValueError):
    """Base class for topology validation failures."""


class TopologySchemaError(TopologyError):
    pass


class DisconnectedCoreError(TopologyError):
    pass


class ZeroLengthLinkError(TopologyError):
    pass


class SpanLengthMismatchError(TopologyError):
    pass


class TooFewNodesError(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: Hashable
    name: str
    core: bool = True
    population: float = 1.0


@dataclass(frozen=True)
class Link:
    index: int
    a: Hashable
    b: Hashable
    length_km: float
    spans_km: tuple[float, ...]
    extra_losses_db: tuple[float, ...]
    fiber: FiberSpec
    amplifiers: Mapping[str, AmplifierSpec]

    @property
    def average_span_km(self) -> float:
        return float(np.mean(self.spans_km))

    def spans(self, reverse: bool = False) -> list[SpanSpec]:
        """Spans in traversal order; ``reverse`` walks the link from ``b`` to ``a``."""
        pairs = list(zip(self.spans_km, self.extra_losses_db))
        if reverse:
            pairs.reverse()
        return [SpanSpec(km * 1e3, self.fiber, self.amplifiers, loss) for km, loss in pairs]

    def other(self, node):
        return self.b if node == self.a else self.a


@dataclass
class Topology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    _adj: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        adj = {n.id: {} for n in self.nodes}
        for link in self.links:
            adj[link.a][link.b] = link
            adj[link.b][link.a] = link
        self._adj = adj

    @property
    def node_ids(self) -> list:
        return [n.id for n in self.nodes]

    def node(self, node_id) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def neighbors(self, node_id) -> dict:
        return self._adj[node_id]

    def degree(self, node_id) -> int:
        return len(self._adj[node_id])

    def link_between(self, u, v) -> Link:
        return self._adj[u][v]

    @property
    def core_nodes(self) -> list:
        return sorted(n.id for n in self.nodes if n.core)

    def core_pairs(self) -> list[tuple]:
        core = self.core_nodes
        return [(s, d) for i, s in enumerate(core) for d in core[i + 1:]]


def _require(cond: bool, msg: str):
    if not cond:
        raise TopologySchemaError(msg)


def topology_from_dict(data: Mapping, seed: int = 1, fiber: FiberSpec | None = None,
                       penalties: PenaltyConfig | None = None,
                       amplifiers: Mapping[str, AmplifierSpec] | None = None) -> Topology:
    """Validate a topology document and draw per-span lumped losses from ``seed``."""
    _require(isinstance(data, Mapping), "topology document must be a JSON object")
    _require(isinstance(data.get("nodes"), list), "'nodes' must be a list")
    _require(isinstance(data.get("links"), list), "'links' must be a list")

    nodes = []
    for k, raw in enumerate(data["nodes"]):
        _require(isinstance(raw, Mapping) and "id" in raw, f"node #{k} lacks an 'id'")
        nid = raw["id"]
        _require(isinstance(nid, (int, str)) and not isinstance(nid, bool),
                 f"node #{k}: id must be an integer or a string")
        pop = raw.get("population", 1.0)
        _require(isinstance(pop, (int, float)) and not isinstance(pop, bool) and pop >= 0,
                 f"node {nid!r}: population must be a non-negative number")
        core = raw.get("core", True)
        _require(isinstance(core, bool), f"node {nid!r}: 'core' must be a boolean")
        nodes.append(Node(nid, str(raw.get("name", nid)), core, float(pop)))
    ids = [n.id for n in nodes]
    _require(len(set(ids)) == len(ids), "duplicate node ids")
    _require(len({type(i) for i in ids}) <= 1, "node ids must all be integers or all strings")
    if len(nodes) < 2:
        raise TooFewNodesError(f"topology has {len(nodes)} node(s); at least two are needed")

    fiber = fiber or default_fiber()
    amps = dict(amplifiers or default_amplifiers())
    penalties = penalties or PenaltyConfig()
    rng = np.random.default_rng(seed)
    known = set(ids)
    seen_pairs = set()
    links = []
    for k, raw in enumerate(data["links"]):
        _require(isinstance(raw, Mapping), f"link #{k} must be an object")
        for key in ("a", "b", "length_km", "spans_km"):
            _require(key in raw, f"link #{k} lacks '{key}'")
        a, b = raw["a"], raw["b"]
        _require(a in known and b in known, f"link #{k} references an unknown node")
        _require(a != b, f"link #{k} is a self-loop")
        pair = frozenset((a, b))
        _require(pair not in seen_pairs, f"link #{k} duplicates {a!r}-{b!r}")
        seen_pairs.add(pair)
        length = raw["length_km"]
        spans = raw["spans_km"]
        _require(isinstance(length, (int, float)), f"link #{k}: length_km must be a number")
        _require(isinstance(spans, list) and len(spans) > 0 and
                 all(isinstance(s, (int, float)) for s in spans),
                 f"link #{k}: spans_km must be a non-empty list of numbers")
        if length <= 0 or any(s <= 0 for s in spans):
            raise ZeroLengthLinkError(f"link {a!r}-{b!r} has a non-positive length")
        if abs(sum(spans) - length) > SPAN_SUM_TOLERANCE_KM:
            raise SpanLengthMismatchError(
                f"link {a!r}-{b!r}: spans sum to {sum(spans):.3f} km, link is {length:.3f} km"
            )
        losses = tuple(penalties.draw_span_loss(rng, float(s)) for s in spans)
        links.append(Link(k, a, b, float(length), tuple(float(s) for s in spans), losses, fiber, amps))

    topo = Topology(tuple(nodes), tuple(links))
    core = [n.id for n in nodes if n.core]
    if len(core) < 2:
        raise TooFewNodesError("fewer than two core nodes; no connection can be served")
    pos = {nid: i for i, nid in enumerate(ids)}
    if links:
        r = [pos[l.a] for l in links]
        c = [pos[l.b] for l in links]
        g = coo_matrix((np.ones(len(links)), (r, c)), shape=(len(ids), len(ids)))
        _, label = connected_components(g, directed=False)
    else:
        label = np.arange(len(ids))
    if len({label[pos[n]] for n in core}) > 1:
        raise DisconnectedCoreError("core nodes are not all mutually reachable")
    return topo


def load_topology(path, seed: int = 1, fiber: FiberSpec | None = None,
                  penalties: PenaltyConfig | None = None,
                  amplifiers: Mapping[str, AmplifierSpec] | None = None) -> Topology:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TopologySchemaError(f"{path}: not valid JSON ({exc.msg})") from None
    return topology_from_dict(data, seed, fiber, penalties, amplifiers)


def fixture_path() -> Path:
    """Path of the bundled 6-node synthetic topology."""
    return Path(str(resources.files("mbeon") / "data" / "fixture6.json"))


def load_fixture(seed: int = 1, **kw) -> Topology:
    return load_topology(fixture_path(), seed, **kw)


def random_topology(n_nodes: int, seed: int, extra_links: int | None = None,
                    area_km: float = 600.0, span_km: float = 80.0, core_fraction: float = 1.0) -> dict:
    """Random planar-ish topology document: Euclidean MST plus the shortest
    extra chords, spans of at most ``span_km``."""
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, area_km, size=(n_nodes, 2))
    d = np.linalg.norm(xy[:, None] - xy[None, :], axis=-1)
    d = np.maximum(d, 1.0)
    np.fill_diagonal(d, 0.0)
    mst = minimum_spanning_tree(d).tocoo()
    edges = {tuple(sorted((int(i), int(j)))) for i, j in zip(mst.row, mst.col)}
    extra = n_nodes // 2 if extra_links is None else extra_links
    cand = sorted((d[i, j], i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)
                  if (i, j) not in edges)
    for _, i, j in cand[:extra]:
        edges.add((i, j))
    n_core = max(2, int(round(core_fraction * n_nodes)))
    nodes = [{"id": i, "name": f"N{i}", "core": i < n_core,
              "population": float(rng.uniform(0.5, 2.0))} for i in range(n_nodes)]
    links = []
    for i, j in sorted(edges):
        length = round(float(d[i, j]), 3)
        n = max(1, int(np.ceil(length / span_km)))
        spans = [round(length / n, 6)] * n
        links.append({"a": i, "b": j, "length_km": length, "spans_km": spans})
    return {"nodes": nodes, "links": links}


# --- routing ---------------------------------------------------------------

@dataclass(frozen=True)
class CandidatePath:
    nodes: tuple
    links: tuple[int, ...]
    reversed_links: tuple[bool, ...]  # True when a link is walked from b to a
    length_km: float

    @property
    def roadm_hops(self) -> int:
        """ROADMs traversed, add and drop nodes included."""
        return len(self.nodes)


def _path_length(topo: Topology, nodes: Sequence) -> float:
    return float(sum(topo.link_between(u, v).length_km for u, v in zip(nodes, nodes[1:])))


def _to_candidate(topo: Topology, nodes: Sequence) -> CandidatePath:
    links, rev = [], []
    for u, v in zip(nodes, nodes[1:]):
        link = topo.link_between(u, v)
        links.append(link.index)
        rev.append(link.a != u)
    return CandidatePath(tuple(nodes), tuple(links), tuple(rev), _path_length(topo, nodes))


def _dijkstra(topo: Topology, s, d, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Shortest path with ties broken by the lexicographic node sequence."""
    heap = [(0.0, (s,))]
    done = set()
    while heap:
        dist, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == d:
            return path
        for v, link in topo.neighbors(u).items():
            if v in done or v in banned_nodes or frozenset((u, v)) in banned_edges:
                continue
            heapq.heappush(heap, (dist + link.length_km, path + (v,)))
    return None


def k_shortest_paths(topo: Topology, s, d, k: int) -> list[CandidatePath]:
    """Yen's loopless k-shortest paths, ordered by (length, node sequence)."""
    if s == d:
        raise ValueError("source and destination must differ")
    if k < 1:
        return []
    first = _dijkstra(topo, s, d)
    if first is None:
        return []
    found = [first]
    seen = {first}
    heap: list = []
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev) - 1):
            root = prev[: i + 1]
            banned_edges = {frozenset((p[i], p[i + 1])) for p in found
                            if len(p) > i + 1 and p[: i + 1] == root}
            spur = _dijkstra(topo, prev[i], d, frozenset(root[:-1]), frozenset(banned_edges))
            if spur is None:
                continue
            total = root[:-1] + spur
            if total not in seen:
                seen.add(total)
                heapq.heappush(heap, (_path_length(topo, total), total))
        if not heap:
            break
        found.append(heapq.heappop(heap)[1])
    return [_to_candidate(topo, p) for p in found]


# --- demands ---------------------------------------------------------------

@dataclass(frozen=True)
class Demand:
    id: int
    source: Hashable
    destination: Hashable
    rate: int  # bit/s

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError("demand endpoints must differ")


def node_weights(topo: Topology) -> dict:
    """Population times nodal degree for each core node."""
    return {n: topo.node(n).population * topo.degree(n) for n in topo.core_nodes}


def generate_demand_sequence(topo: Topology, seed: int, count: int,
                             rates_gbps: Sequence[int] = LCI_RATES_GBPS) -> list[Demand]:
    """Seeded demand list; endpoints drawn with probability proportional to
    ``w_s * w_d`` over unordered core pairs, rates uniform over ``rates_gbps``."""
    pairs = topo.core_pairs()
    if not pairs:
        raise TopologyError("need at least two core nodes")
    w = node_weights(topo)
    p = np.array([w[s] * w[d] for s, d in pairs], dtype=float)
    if not p.sum() > 0:
        raise TopologyError("all core-pair weights are zero")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pairs), size=count, p=p / p.sum())
    rates = rng.choice(np.asarray(rates_gbps, dtype=np.int64), size=count)
    return [Demand(i, *pairs[j], int(r) * 10**9) for i, (j, r) in enumerate(zip(idx, rates))]


# --- CCR tables ------------------------------------------------------------

@dataclass
class CcrEntry:
    paths: list[CandidatePath]
    gsnr: np.ndarray  # dB, (n_paths, n_channels)
    m: np.ndarray  # (n_paths, n_channels), int

    @property
    def rate(self) -> np.ndarray:
        return self.m.astype(np.int64) * 100 * 10**9


@dataclass
class CcrTable:
    grid: ChannelGrid
    trx: TransceiverSpec
    entries: dict  # (s, d) with s < d -> CcrEntry

    def entry(self, s, d) -> CcrEntry:
        key = (s, d) if (s, d) in self.entries else (d, s)
        return self.entries[key]

    def rows(self) -> Iterable[tuple]:
        for (s, d) in sorted(self.entries):
            e = self.entries[(s, d)]
            for p in range(len(e.paths)):
                for c in range(self.grid.n_channels):
                    yield s, d, p, c, float(e.gsnr[p, c]), int(e.m[p, c]), int(e.m[p, c]) * 100


CCR_HEADER = ("src", "dst", "path_idx", "channel_idx", "gsnr_db", "m", "rate_gbps")


def write_ccr_csv(table: CcrTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CCR_HEADER)
        for s, d, p, c, g, m, r in table.rows():
            w.writerow([s, d, p, c, f"{g:.6g}", m, r])


def _launch_vector(item, grid: ChannelGrid) -> np.ndarray:
    v = np.asarray(getattr(item, "launch", item), dtype=float)
    if v.shape != (grid.n_channels,):
        raise ValueError("launch profile does not match the grid")
    return v


class _SpanCache:
    """PEP, fit and NLI per (span length, launch profile)."""

    def __init__(self, grid, estimator):
        self.grid = grid
        self.estimator = estimator
        self._store: dict = {}

    def get(self, span: SpanSpec, launch: np.ndarray):
        key = (round(span.length, 6), id(span.fiber), launch.tobytes())
        hit = self._store.get(key)
        if hit is None:
            pep = solve_pep(launch, span, self.grid, "forward")
            fit = fit_loss_model(pep, self.grid)
            nli = self.estimator(span, fit, self.grid, pep.launch)
            hit = self._store[key] = (pep, fit, nli)
        return hit


def path_gsnr(topo: Topology, path: CandidatePath, grid: ChannelGrid, trx: TransceiverSpec,
              launches: Mapping[int, np.ndarray], penalties: PenaltyConfig,
              cache: _SpanCache) -> np.ndarray:
    """End-to-end GSNR profile (dB) of one candidate path under full load."""
    breakdowns = []
    n = len(path.links)
    for h, (li, rev) in enumerate(zip(path.links, path.reversed_links)):
        launch = launches[li]
        spans = topo.links[li].spans(reverse=rev)
        for s_idx, span in enumerate(spans):
            pep, fit, nli = cache.get(span, launch)
            if s_idx < len(spans) - 1:
                target = launch
            elif h < n - 1:
                target = launches[path.links[h + 1]]
            else:
                target = launch
            breakdowns.append(span_gsnr(span, pep, fit, grid, trx, target=target, p_nli=nli))
    return lightpath_gsnr(breakdowns, None, penalties, trx, path.roadm_hops)


def precompute_ccr(topo: Topology, grid: ChannelGrid, trx: TransceiverSpec,
                   link_launch: Mapping[int, object], k: int = 3,
                   penalties: PenaltyConfig | None = None,
                   estimator: Callable = DEFAULT_NLI) -> CcrTable:
    """CCR cells for every core pair, candidate path and channel.

    ``link_launch`` maps link index to an ``HPOResult`` or a launch vector
    (W) applied to every span of that link. All channels are assumed lit
    (idle ones by ASE-shaped filler), so the table does not depend on
    spectrum occupancy.
    """
    penalties = penalties or PenaltyConfig()
    launches = {l.index: _launch_vector(link_launch[l.index], grid) for l in topo.links}
    cache = _SpanCache(grid, estimator)
    entries = {}
    for s, d in topo.core_pairs():
        paths = k_shortest_paths(topo, s, d, k)
        if not paths:
            continue
        g = np.array([path_gsnr(topo, p, grid, trx, launches, penalties, cache) for p in paths])
        entries[(s, d)] = CcrEntry(paths, g, np.asarray(modulation_from_gsnr(g, trx), dtype=int))
    logger.debug("CCR: %d pairs, %d distinct span solves", len(entries), len(cache._store))
    return CcrTable(grid, trx, entries)
