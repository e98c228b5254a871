"""Chain placement and routing heuristics.

Two families are provided. place_all clusters the substrate into
blocking islands, confines each demand to one island chosen by free
bandwidth (mode 'lbi' prefers the largest qualifying island, 'hbi' the
smallest), then walks the chain function by function, picking the
(PM, route) pair of least incremental power. bc_place_all is a
centrality baseline: every demand follows its hop-shortest path and
functions are stacked on the most central path nodes with capacity.

Path search weighs edges by a convex mix of normalized power and
normalized delay. Searches start power-only and shift weight toward
delay in fixed steps while the found route misses the delay budget.
"""

from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .bih import BlockingIsland, build_bih
from .netstate import (Allocation, FunctionAssignment, NetworkState, Route,
                       StateOverlay)
from .power import incremental_cost, network_power, pm_power_total
from .topology import FunctionType, Link, NetworkGraph

_EPS = 1e-9


@dataclass(frozen=True)
class PathSearchConfig:
    """Initial edge-weight mix and the reweighting step size."""

    power_weight: float = 1.0
    delay_weight: float = 0.0
    weight_step: float = 0.25

    def __post_init__(self):
        if self.power_weight < 0 or self.delay_weight < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.power_weight + self.delay_weight - 1.0) > _EPS:
            raise ValueError("weights must sum to 1")
        if not 0.0 < self.weight_step <= 1.0:
            raise ValueError("weight step must be in (0, 1]")


@dataclass(frozen=True)
class Candidate:
    """A PM able to host a chain position. category 1: reuses a running
    instance, 2: new instance on an already powered PM, 3: PM must be
    powered on."""

    node: int
    instance_id: Optional[int]
    category: int


@dataclass
class DemandOutcome:
    demand: object
    accepted: bool
    allocation: Optional[Allocation]
    reason: Optional[str]


@dataclass
class SolutionSet:
    outcomes: List[DemandOutcome]
    state: NetworkState
    network_power_w: float
    pm_power_w: float
    total_power_w: float
    mean_delay_ms: float
    acceptance: float
    runtime_s: float

    @property
    def accepted_count(self) -> int:
        return sum(1 for o in self.outcomes if o.accepted)


def _edge_power(params, src_lit: bool, dst_lit: bool, cable_lit: bool) -> float:
    power = 0.0
    if not src_lit:
        power += params.switch_static_w / 2.0
    if not dst_lit:
        power += params.switch_static_w / 2.0
    if not cable_lit:
        power += 2.0 * params.port_w
    return power


def edge_weight(state, link: Link, gamma: float, omega: float) -> float:
    """Mixed routing weight of one directed link under the given
    power/delay emphasis. Both terms are normalized to [0, 1]: power by
    the largest possible single-link activation cost, delay by the
    longest link in the graph."""
    params = state.graph.power
    power = _edge_power(params,
                        state.switch_active(link.src),
                        state.switch_active(link.dst),
                        state.cable_active(*link.cable))
    max_power = params.switch_static_w + 2.0 * params.port_w
    max_delay = state.graph.max_link_delay
    delay_term = link.delay / max_delay if max_delay > 0 else 0.0
    return gamma * (power / max_power) + omega * delay_term


def _dijkstra(statelike, island: BlockingIsland, src: int, dst: int,
              kbps: int, gamma: float, omega: float,
              lit_switch: Dict[int, bool],
              lit_cable: Dict[Tuple[int, int], bool]) -> Optional[List[Link]]:
    """Min-weight path inside the island; ties broken by delay, then hop
    count, then node ids, so results are reproducible."""
    if src == dst:
        return []
    graph = statelike.graph
    params = graph.power
    max_power = params.switch_static_w + 2.0 * params.port_w
    max_delay = graph.max_link_delay
    best: Dict[int, Tuple[float, float, int]] = {src: (0.0, 0.0, 0)}
    pred: Dict[int, Link] = {}
    heap = [(0.0, 0.0, 0, src)]
    done = set()
    while heap:
        weight, delay, hops, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for v in graph.neighbors(u):
            if v in done or v not in island.nodes:
                continue
            cable = (u, v) if u < v else (v, u)
            if cable not in island.internal_links:
                continue
            if statelike.residual(u, v) < kbps:
                continue
            link = graph.link(u, v)
            power = _edge_power(params, lit_switch[u], lit_switch[v],
                                lit_cable[cable])
            delay_term = link.delay / max_delay if max_delay > 0 else 0.0
            w = gamma * (power / max_power) + omega * delay_term
            cand = (weight + w, delay + link.delay, hops + 1)
            if v not in best or cand < best[v]:
                best[v] = cand
                pred[v] = link
                heapq.heappush(heap, (*cand, v))
    if dst not in pred:
        return None
    path = []
    at = dst
    while at != src:
        link = pred[at]
        path.append(link)
        at = link.src
    path.reverse()
    return path


def calculate_best_path(statelike, island: BlockingIsland, src: int, pm: int,
                        dst: int, kbps: int, budget_ms: float,
                        cfg: PathSearchConfig,
                        stats: Optional[dict] = None
                        ) -> Optional[Tuple[Tuple[Link, ...], Tuple[Link, ...], float, float]]:
    """Route src -> pm -> dst inside the island within the delay budget.

    Starts with the configured weight mix and shifts emphasis from power
    to delay in weight_step increments while the result misses the
    budget. Gives up once the mix would leave no power emphasis at all.
    Returns (entry segment, exit segment, entry delay, exit delay).
    """
    lit_switch = {n: statelike.switch_active(n) for n in island.nodes}
    lit_cable = {c: statelike.cable_active(*c) for c in island.internal_links}
    settings = 0
    step = 0
    while True:
        gamma = cfg.power_weight - step * cfg.weight_step
        omega = cfg.delay_weight + step * cfg.weight_step
        if gamma < _EPS or omega > 1.0 - _EPS:
            break
        settings += 1
        step += 1
        seg1 = _dijkstra(statelike, island, src, pm, kbps, gamma, omega,
                         lit_switch, lit_cable)
        if seg1 is None:
            continue
        seg2 = _dijkstra(statelike, island, pm, dst, kbps, gamma, omega,
                         lit_switch, lit_cable)
        if seg2 is None:
            continue
        # both segments carry the demand; shared links must fit twice
        need: Dict[Tuple[int, int], int] = {}
        for link in seg1 + seg2:
            pair = (link.src, link.dst)
            need[pair] = need.get(pair, 0) + kbps
        if any(statelike.residual(*pair) < total for pair, total in need.items()):
            continue
        d1 = sum(l.delay for l in seg1)
        d2 = sum(l.delay for l in seg2)
        if d1 + d2 <= budget_ms + _EPS:
            if stats is not None:
                stats["path_searches"] = stats.get("path_searches", 0) + 1
                stats["weight_settings_max"] = max(
                    stats.get("weight_settings_max", 0), settings)
            return tuple(seg1), tuple(seg2), d1, d2
    if stats is not None:
        stats["path_searches"] = stats.get("path_searches", 0) + 1
        stats["weight_settings_max"] = max(
            stats.get("weight_settings_max", 0), settings)
    return None


def get_candidate_pms(statelike, function: FunctionType,
                      island: BlockingIsland, kbps: int) -> List[Candidate]:
    """Island PMs able to host the function, cheapest category first."""
    out = []
    for node in sorted(island.nodes):
        found = statelike.find_reusable(node, function, kbps)
        if found is not None:
            out.append(Candidate(node, found[0], 1))
            continue
        if not statelike.has_room(node, function):
            continue
        out.append(Candidate(node, None, 2 if statelike.pm_active(node) else 3))
    out.sort(key=lambda c: (c.category, c.node))
    return out


def _island_hops(graph: NetworkGraph, island: BlockingIsland,
                 src: int) -> Dict[int, int]:
    """BFS hop counts from src over the island's internal links."""
    adj: Dict[int, List[int]] = {n: [] for n in island.nodes}
    for a, b in island.internal_links:
        adj[a].append(b)
        adj[b].append(a)
    for nbrs in adj.values():
        nbrs.sort()
    hops = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in hops:
                hops[v] = hops[u] + 1
                queue.append(v)
    return hops


def _plan_in_island(state: NetworkState, island: BlockingIsland, demand,
                    cfg: PathSearchConfig,
                    stats: Optional[dict] = None
                    ) -> Tuple[Optional[Allocation], Optional[str]]:
    """Greedy chain walk inside one island. Returns a planned allocation
    with placeholder instance ids, or (None, reason)."""
    kbps = demand.bandwidth_kbps
    chain = demand.chain
    processing = sum(f.processing_delay for f in chain)
    budget = demand.delay_budget - processing
    if budget < -_EPS:
        return None, "delay"
    overlay = StateOverlay(state)
    origin = demand.src
    spent = 0.0
    segments: List[Tuple[Link, ...]] = []
    assignments: List[FunctionAssignment] = []
    for idx, function in enumerate(chain):
        last = idx == len(chain) - 1
        candidates = get_candidate_pms(overlay, function, island, kbps)
        if not candidates:
            return None, "no-pm"
        hops = _island_hops(state.graph, island, origin)
        inf = math.inf
        candidates.sort(key=lambda c: (c.category, hops.get(c.node, inf), c.node))
        best = None
        best_key = None
        for cand in candidates:
            found = calculate_best_path(overlay, island, origin, cand.node,
                                        demand.dst, kbps, budget - spent,
                                        cfg, stats)
            if found is None:
                continue
            seg1, seg2, d1, d2 = found
            cost = incremental_cost(overlay, cand.node, cand.instance_id,
                                    function, seg1 + seg2)
            key = (cost, hops.get(cand.node, inf), cand.category, cand.node)
            if best_key is None or key < best_key:
                best_key = key
                best = (cand, seg1, seg2, d1, d2)
        if best is None:
            return None, "no-path"
        cand, seg1, seg2, d1, d2 = best
        overlay.add_links(seg1, kbps)
        inst_id = overlay.add_assignment(function, cand.node,
                                         cand.instance_id, kbps)
        assignments.append(FunctionAssignment(function, cand.node, inst_id))
        segments.append(seg1)
        spent += d1
        origin = cand.node
        if last:
            overlay.add_links(seg2, kbps)
            segments.append(seg2)
            spent += d2
    alloc = Allocation(demand.id, tuple(assignments), Route(tuple(segments)),
                       spent + processing, kbps)
    return alloc, None


def place_all(graph: NetworkGraph, demands: Iterable, betas_mbps: List[float],
              mode: str = "lbi", cfg: Optional[PathSearchConfig] = None,
              stats: Optional[dict] = None) -> SolutionSet:
    """Serve demands one by one with island-confined greedy placement.

    Rejected demands leave no trace on the state; the island hierarchy
    is kept in sync incrementally after every accepted demand.
    """
    if cfg is None:
        cfg = PathSearchConfig()
    state = NetworkState(graph)
    outcomes: List[DemandOutcome] = []
    start = time.perf_counter()
    hierarchy = build_bih(state, betas_mbps)
    for demand in demands:
        island = hierarchy.select(demand.src, demand.dst,
                                  demand.bandwidth_kbps, mode)
        if island is None:
            outcomes.append(DemandOutcome(demand, False, None, "no-island"))
            continue
        planned, reason = _plan_in_island(state, island, demand, cfg, stats)
        if planned is None:
            outcomes.append(DemandOutcome(demand, False, None, reason))
            continue
        committed = state.apply_allocation(planned, demand)
        hierarchy.update_on_allocation(state, committed.route,
                                       committed.bandwidth_kbps)
        outcomes.append(DemandOutcome(demand, True, committed, None))
    runtime = time.perf_counter() - start
    return _finish(outcomes, state, runtime)


def _finish(outcomes: List[DemandOutcome], state: NetworkState,
            runtime: float) -> SolutionSet:
    accepted = [o for o in outcomes if o.accepted]
    delays = [o.allocation.total_delay_ms for o in accepted]
    mean_delay = sum(delays) / len(delays) if delays else math.nan
    net = network_power(state)
    pm = pm_power_total(state)
    rate = len(accepted) / len(outcomes) if outcomes else 0.0
    return SolutionSet(outcomes, state, net, pm, net + pm, mean_delay,
                       rate, runtime)


# -- centrality baseline -------------------------------------------------


def betweenness(graph: NetworkGraph) -> Dict[int, float]:
    """Shortest-path betweenness, summed over ordered node pairs."""
    scores = {n.id: 0.0 for n in graph.nodes}
    for s in sorted(scores):
        sigma = {v: 0 for v in scores}
        dist = {v: -1 for v in scores}
        preds: Dict[int, List[int]] = {v: [] for v in scores}
        sigma[s] = 1
        dist[s] = 0
        order = []
        queue = deque([s])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in graph.neighbors(u):
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
                if dist[v] == dist[u] + 1:
                    sigma[v] += sigma[u]
                    preds[v].append(u)
        delta = {v: 0.0 for v in scores}
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                scores[w] += delta[w]
    return scores


def _bfs_path(graph: NetworkGraph, src: int, dst: int) -> Optional[List[int]]:
    """Deterministic hop-shortest path as a node list."""
    if src == dst:
        return [src]
    parent = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u):
            if v not in parent:
                parent[v] = u
                if v == dst:
                    path = [dst]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    path.reverse()
                    return path
                queue.append(v)
    return None


def _assign_on_path(overlay: StateOverlay, path: List[int], chain,
                    kbps: int, pref: List[int], k: int, min_pos: int
                    ) -> Optional[Tuple[List[int], List[FunctionAssignment]]]:
    """Depth-first assignment of chain[k:] to path positions >= min_pos,
    trying the most central nodes first and backtracking when the tail
    of the chain cannot fit. Returns the first complete assignment."""
    if k == len(chain):
        return [], []
    function = chain[k]
    for pos in pref:
        if pos < min_pos:
            continue
        node = path[pos]
        found = overlay.find_reusable(node, function, kbps)
        if found is None and not overlay.has_room(node, function):
            continue
        trial = overlay.fork()
        inst_id = trial.add_assignment(function, node,
                                       found[0] if found else None, kbps)
        tail = _assign_on_path(trial, path, chain, kbps, pref, k + 1, pos)
        if tail is not None:
            positions, assigns = tail
            overlay.link_debit = trial.link_debit
            overlay.inst_debit = trial.inst_debit
            overlay.pending = trial.pending
            return ([pos] + positions,
                    [FunctionAssignment(function, node, inst_id)] + assigns)
    return None


def _plan_on_path(state: NetworkState, path: List[int], demand,
                  scores: Dict[int, float]
                  ) -> Tuple[Optional[Allocation], Optional[str]]:
    """Stack the chain onto the fixed path, most central nodes first,
    never moving backwards, so the traffic crosses each path link once."""
    kbps = demand.bandwidth_kbps
    links = [state.graph.link(path[i], path[i + 1])
             for i in range(len(path) - 1)]
    for link in links:
        if state.residual(link.src, link.dst) < kbps:
            return None, "bandwidth"
    processing = sum(f.processing_delay for f in demand.chain)
    total_delay = sum(l.delay for l in links) + processing
    if total_delay > demand.delay_budget + _EPS:
        return None, "delay"
    overlay = StateOverlay(state)
    pref = sorted(range(len(path)), key=lambda i: (-scores[path[i]], path[i]))
    found = _assign_on_path(overlay, path, demand.chain, kbps, pref, 0, 0)
    if found is None:
        return None, "no-pm"
    positions, assignments = found
    segments = []
    prev = 0
    for pos in positions:
        segments.append(tuple(links[prev:pos]))
        prev = pos
    segments.append(tuple(links[prev:]))
    alloc = Allocation(demand.id, tuple(assignments), Route(tuple(segments)),
                       total_delay, kbps)
    return alloc, None


def bc_place_all(graph: NetworkGraph, demands: Iterable) -> SolutionSet:
    """Centrality baseline: hop-shortest routes, chain stacked on the
    most central path nodes with room. No detours are attempted."""
    state = NetworkState(graph)
    outcomes: List[DemandOutcome] = []
    start = time.perf_counter()
    scores = betweenness(graph)
    for demand in demands:
        path = _bfs_path(graph, demand.src, demand.dst)
        if path is None:
            outcomes.append(DemandOutcome(demand, False, None, "no-path"))
            continue
        planned, reason = _plan_on_path(state, path, demand, scores)
        if planned is None:
            outcomes.append(DemandOutcome(demand, False, None, reason))
            continue
        committed = state.apply_allocation(planned, demand)
        outcomes.append(DemandOutcome(demand, True, committed, None))
    runtime = time.perf_counter() - start
    return _finish(outcomes, state, runtime)
