"""Bandwidth-based clustering of the substrate into blocking islands.

A beta-island is a maximal set of nodes mutually reachable over links
whose free capacity (min of both directions) is at least beta. Islands
are computed per threshold; thresholds stacked in descending order form
a hierarchy in which every island points to the island containing it at
the next lower threshold. The hierarchy is maintained incrementally as
allocations come and go, and always equals a from-scratch rebuild.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .netstate import NetworkState, Route, to_kbps

Cable = Tuple[int, int]


@dataclass
class BlockingIsland:
    id: int
    beta_kbps: int
    nodes: FrozenSet[int]
    internal_links: FrozenSet[Cable]
    father_id: Optional[int] = None


@dataclass
class BIGraph:
    """One clustering level: the islands at a single threshold plus the
    abstract links between them (annotated with the best residual of the
    parallel cables they stand for)."""

    beta_kbps: int
    islands: Dict[int, BlockingIsland] = field(default_factory=dict)
    node_island: Dict[int, int] = field(default_factory=dict)
    abstract_links: Dict[Tuple[int, int], int] = field(default_factory=dict)


def _flood(state, start: int, beta_kbps: int,
           within: Optional[FrozenSet[int]] = None,
           stats: Optional[dict] = None) -> Tuple[FrozenSet[int], FrozenSet[Cable]]:
    """Greedy expansion from start over links with sym residual >= beta.

    Each cable is examined at most twice (once per flooded endpoint), so
    the search is linear in the link count.
    """
    graph = state.graph
    nodes = {start}
    stack = [start]
    links = set()
    visits = 0
    while stack:
        u = stack.pop()
        for v in graph.neighbors(u):
            if within is not None and v not in within:
                continue
            visits += 1
            if state.sym_residual(u, v) >= beta_kbps:
                links.add((u, v) if u < v else (v, u))
                if v not in nodes:
                    nodes.add(v)
                    stack.append(v)
    if stats is not None:
        stats["link_visits"] = stats.get("link_visits", 0) + visits
    return frozenset(nodes), frozenset(links)


def beta_bi_search(state: NetworkState, node: int, beta_mbps: float,
                   stats: Optional[dict] = None) -> Tuple[FrozenSet[int], FrozenSet[Cable]]:
    """The beta-island of a node, as (member nodes, internal cables)."""
    if beta_mbps <= 0:
        raise ValueError("beta must be positive, got %r" % beta_mbps)
    return _flood(state, node, to_kbps(beta_mbps), stats=stats)


class BIHierarchy:
    """Island clusterings at a descending ladder of thresholds."""

    def __init__(self, state: NetworkState, betas_mbps: Iterable[float]):
        betas = list(betas_mbps)
        if not betas:
            raise ValueError("empty threshold ladder")
        if any(b <= 0 for b in betas):
            raise ValueError("thresholds must be positive")
        if any(a <= b for a, b in zip(betas, betas[1:])):
            raise ValueError("thresholds must be strictly descending: %r" % betas)
        self.betas_mbps = betas
        self.betas_kbps = [to_kbps(b) for b in betas]
        self._next_id = 0
        self.levels: Dict[int, BIGraph] = {}
        for beta in self.betas_kbps:
            self.levels[beta] = self._build_level(state, beta)
        self._refresh_fathers()

    # -- construction ----------------------------------------------------

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def _build_level(self, state: NetworkState, beta_kbps: int) -> BIGraph:
        level = BIGraph(beta_kbps)
        for node in sorted(n.id for n in state.graph.nodes):
            if node in level.node_island:
                continue
            nodes, links = _flood(state, node, beta_kbps)
            iid = self._new_id()
            level.islands[iid] = BlockingIsland(iid, beta_kbps, nodes, links)
            for n in nodes:
                level.node_island[n] = iid
        self._rebuild_abstract(state, level)
        return level

    def _rebuild_abstract(self, state: NetworkState, level: BIGraph) -> None:
        abstract: Dict[Tuple[int, int], int] = {}
        for a, b in state.graph.cables():
            ia, ib = level.node_island[a], level.node_island[b]
            if ia == ib:
                continue
            key = (ia, ib) if ia < ib else (ib, ia)
            res = state.sym_residual(a, b)
            if res > abstract.get(key, -1):
                abstract[key] = res
        level.abstract_links = abstract

    def _refresh_fathers(self) -> None:
        order = self.betas_kbps
        for i, beta in enumerate(order):
            level = self.levels[beta]
            if i + 1 < len(order):
                below = self.levels[order[i + 1]]
                for island in level.islands.values():
                    member = next(iter(island.nodes))
                    island.father_id = below.node_island[member]
            else:
                for island in level.islands.values():
                    island.father_id = None

    # -- lookups ---------------------------------------------------------

    def island_of(self, beta_kbps: int, node: int) -> BlockingIsland:
        level = self.levels[beta_kbps]
        return level.islands[level.node_island[node]]

    def select(self, src: int, dst: int, kbps: int, mode: str) -> Optional[BlockingIsland]:
        """Pick the island to place a demand in, or None if no level both
        satisfies the bandwidth and joins the endpoints.

        'hbi' prefers the highest qualifying threshold (smallest island),
        'lbi' the lowest (largest island).
        """
        if mode not in ("hbi", "lbi"):
            raise ValueError("mode must be 'hbi' or 'lbi', got %r" % mode)
        chosen = None
        for beta in self.betas_kbps:
            if beta < kbps:
                continue
            level = self.levels[beta]
            iid = level.node_island.get(src)
            if iid is not None and iid == level.node_island.get(dst):
                if mode == "hbi":
                    return level.islands[iid]
                chosen = level.islands[iid]
        return chosen

    # -- incremental maintenance ----------------------------------------

    def _changed_cables(self, state: NetworkState, route: Route, kbps: int,
                        released: bool) -> Dict[Cable, Tuple[int, int]]:
        """Map cable -> (old sym residual, new sym residual) for cables the
        route touched. The state already reflects the change."""
        per_dir = Counter()
        for link in route.links():
            per_dir[(link.src, link.dst)] += kbps
        sign = -1 if released else 1
        changed: Dict[Cable, Tuple[int, int]] = {}
        cables = {((s, d) if s < d else (d, s)) for s, d in per_dir}
        for a, b in cables:
            old = min(state.residual(a, b) + sign * per_dir.get((a, b), 0),
                      state.residual(b, a) + sign * per_dir.get((b, a), 0))
            new = state.sym_residual(a, b)
            changed[(a, b)] = (old, new)
        return changed

    def update_on_allocation(self, state: NetworkState, route: Route, kbps: int) -> None:
        """Maintain the hierarchy after bandwidth was taken on a route.
        Residual drops can only split islands (or thin internal links)."""
        changed = self._changed_cables(state, route, kbps, released=False)
        for beta in self.betas_kbps:
            level = self.levels[beta]
            drops = [c for c, (old, new) in changed.items()
                     if old >= beta > new]
            touched = bool(drops) or any(
                level.node_island[a] != level.node_island[b]
                for (a, b) in changed)
            hit_islands = {level.node_island[c[0]] for c in drops}
            for iid in sorted(hit_islands):
                island = level.islands[iid]
                remaining = set(island.nodes)
                parts: List[Tuple[FrozenSet[int], FrozenSet[Cable]]] = []
                while remaining:
                    seed = min(remaining)
                    nodes, links = _flood(state, seed, beta, within=island.nodes)
                    parts.append((nodes, links))
                    remaining -= nodes
                if len(parts) == 1:
                    # still connected, only the internal link set thinned
                    level.islands[iid] = BlockingIsland(
                        iid, beta, parts[0][0], parts[0][1], island.father_id)
                else:
                    del level.islands[iid]
                    for nodes, links in parts:
                        nid = self._new_id()
                        level.islands[nid] = BlockingIsland(nid, beta, nodes, links)
                        for n in nodes:
                            level.node_island[n] = nid
            if touched or hit_islands:
                self._rebuild_abstract(state, level)
        self._refresh_fathers()

    def update_on_release(self, state: NetworkState, route: Route, kbps: int) -> None:
        """Maintain the hierarchy after bandwidth returned on a route.
        Residual rises can only merge islands (or add internal links)."""
        changed = self._changed_cables(state, route, kbps, released=True)
        for beta in self.betas_kbps:
            level = self.levels[beta]
            rises = sorted(c for c, (old, new) in changed.items()
                           if new >= beta > old)
            touched = bool(rises) or any(
                level.node_island[a] != level.node_island[b]
                for (a, b) in changed)
            for a, b in rises:
                ia, ib = level.node_island[a], level.node_island[b]
                cable = (a, b)
                if ia == ib:
                    island = level.islands[ia]
                    level.islands[ia] = BlockingIsland(
                        ia, beta, island.nodes,
                        island.internal_links | {cable}, island.father_id)
                else:
                    one, two = level.islands[ia], level.islands[ib]
                    nid = self._new_id()
                    merged = BlockingIsland(
                        nid, beta, one.nodes | two.nodes,
                        one.internal_links | two.internal_links | {cable})
                    del level.islands[ia]
                    del level.islands[ib]
                    level.islands[nid] = merged
                    for n in merged.nodes:
                        level.node_island[n] = nid
            if touched:
                self._rebuild_abstract(state, level)
        self._refresh_fathers()

    # -- comparison and debugging ---------------------------------------

    def canonical(self):
        """Id-free structural form: used to compare against a rebuild."""
        out = []
        for beta in self.betas_kbps:
            level = self.levels[beta]
            islands = sorted(
                (tuple(sorted(i.nodes)), tuple(sorted(i.internal_links)))
                for i in level.islands.values())
            abstract = []
            for (ia, ib), res in level.abstract_links.items():
                ka = tuple(sorted(level.islands[ia].nodes))
                kb = tuple(sorted(level.islands[ib].nodes))
                lo, hi = (ka, kb) if ka <= kb else (kb, ka)
                abstract.append((lo, hi, res))
            abstract.sort()
            out.append((beta, tuple(islands), tuple(abstract)))
        fathers = []
        for i, beta in enumerate(self.betas_kbps[:-1]):
            below = self.levels[self.betas_kbps[i + 1]]
            for island in self.levels[beta].islands.values():
                fathers.append((beta, tuple(sorted(island.nodes)),
                                tuple(sorted(below.islands[island.father_id].nodes))))
        return (tuple(out), tuple(sorted(fathers)))

    def dump(self) -> str:
        out = []
        for beta_mbps, beta in zip(self.betas_mbps, self.betas_kbps):
            level = self.levels[beta]
            out.append("beta %r" % beta_mbps)
            for iid in sorted(level.islands, key=lambda i: min(level.islands[i].nodes)):
                island = level.islands[iid]
                father = "-" if island.father_id is None else str(island.father_id)
                out.append("  island %d father %s nodes %s" % (
                    iid, father, " ".join(str(n) for n in sorted(island.nodes))))
            for (ia, ib) in sorted(level.abstract_links,
                                   key=lambda k: (min(level.islands[k[0]].nodes),
                                                  min(level.islands[k[1]].nodes))):
                out.append("  abstract %d-%d max %d"
                           % (ia, ib, level.abstract_links[(ia, ib)]))
        return "\n".join(out) + "\n"


def build_bih(state: NetworkState, betas_mbps: Iterable[float]) -> BIHierarchy:
    return BIHierarchy(state, betas_mbps)
