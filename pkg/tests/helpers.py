"""Shared builders and oracles for the test suite."""

import random
from collections import deque
from typing import Dict, List, Tuple

from vnfplace.bih import beta_bi_search
from vnfplace.netstate import (Allocation, FunctionAssignment, NetworkState,
                               Route, to_kbps)
from vnfplace.topology import (CPU, FunctionType, NetworkGraph, NodeSpec,
                               PmSpec, ServiceType, link_delay_from_length)
from vnfplace.workload import Demand

# a one-function chain that never binds on processing capacity; used to
# shape link residuals without the catalog's 200 Mb/s instance ceiling
XL = FunctionType("XL", {CPU: 1}, 1e6, 0.0)


def make_graph(num_nodes, cables, cores=64):
    """cables: (a, b, capacity_mbps, delay_ms) tuples."""
    nodes = [NodeSpec(i, PmSpec({CPU: cores})) for i in range(num_nodes)]
    return NetworkGraph(nodes, cables)


def make_demand(demand_id, src, dst, chain, bandwidth_mbps, budget_ms):
    svc = ServiceType("svc%d" % demand_id, tuple(chain), bandwidth_mbps,
                      budget_ms, 1.0)
    return Demand(demand_id, src, dst, svc)


def route_allocation(state: NetworkState, path: List[int], mbps: float,
                     demand_id: int) -> Tuple[Allocation, Demand]:
    """Commit mbps along consecutive path nodes, one XL instance at the
    far end. Returns (committed allocation, demand) for later release."""
    demand = make_demand(demand_id, path[0], path[-1], (XL,), mbps, 1e9)
    links = tuple(state.graph.link(a, b) for a, b in zip(path, path[1:]))
    route = Route((links, ()))
    planned = Allocation(demand_id,
                         (FunctionAssignment(XL, path[-1], -1),),
                         route, route.propagation_ms, to_kbps(mbps))
    return state.apply_allocation(planned, demand), demand


# -- island oracles -------------------------------------------------------


def island_partition(state: NetworkState, beta_mbps: float) -> List[Tuple[int, ...]]:
    """Node partition found by flooding from every yet-unseen node."""
    seen = set()
    parts = []
    for node in sorted(n.id for n in state.graph.nodes):
        if node in seen:
            continue
        nodes, _ = beta_bi_search(state, node, beta_mbps)
        seen |= nodes
        parts.append(tuple(sorted(nodes)))
    return sorted(parts)


def partition_oracle(state: NetworkState, beta_mbps: float) -> List[Tuple[int, ...]]:
    """Union-find over cables whose symmetric residual clears the bar."""
    need = to_kbps(beta_mbps)
    parent = {n.id: n.id for n in state.graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in state.graph.cables():
        if state.sym_residual(a, b) >= need:
            parent[find(a)] = find(b)
    groups: Dict[int, List[int]] = {}
    for node in parent:
        groups.setdefault(find(node), []).append(node)
    return sorted(tuple(sorted(g)) for g in groups.values())


# -- fixture graphs -------------------------------------------------------

# three capacity tiers; at 50 the graph falls apart into four islands,
# at 40 into two, at 30 it is one piece
LAYERED_CABLES = [
    (0, 1, 50.0), (0, 3, 50.0), (1, 3, 50.0), (1, 2, 40.0),
    (4, 5, 50.0), (5, 6, 50.0), (4, 6, 50.0), (7, 8, 50.0),
    (6, 7, 40.0), (0, 2, 40.0), (3, 4, 30.0), (2, 4, 30.0),
    (3, 5, 30.0), (1, 8, 30.0),
]


def layered_graph(cores=64) -> NetworkGraph:
    cables = [(a, b, cap, 0.05) for a, b, cap in LAYERED_CABLES]
    return make_graph(9, cables, cores=cores)


def triangle_graph(delays=(0.1, 0.1, 0.1), cores=16) -> NetworkGraph:
    cables = [(0, 1, 1000.0, delays[0]), (1, 2, 1000.0, delays[1]),
              (0, 2, 1000.0, delays[2])]
    return make_graph(3, cables, cores=cores)


def random_connected_graph(rng: random.Random, max_nodes=50,
                           cap_range=(1, 100), cores=1000) -> NetworkGraph:
    """Random spanning tree plus extra cables, random capacities."""
    n = rng.randrange(4, max_nodes + 1)
    cables = []
    seen = set()
    for v in range(1, n):
        u = rng.randrange(v)
        seen.add((u, v))
        cables.append((u, v, float(rng.randrange(*cap_range)), 0.1))
    for _ in range(rng.randrange(0, n)):
        a, b = rng.randrange(n), rng.randrange(n)
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        cables.append((key[0], key[1], float(rng.randrange(*cap_range)), 0.1))
    return make_graph(n, cables, cores=cores)


def skim_random_links(state: NetworkState, rng: random.Random,
                      start_id: int = 0) -> int:
    """Take random single-link allocations so residuals differ from the
    raw capacities (and per direction). Returns the next free demand id."""
    cables = state.graph.cables()
    demand_id = start_id
    for _ in range(rng.randrange(0, 3 * len(cables) + 1)):
        a, b = cables[rng.randrange(len(cables))]
        if rng.random() < 0.5:
            a, b = b, a
        free = state.residual(a, b)
        if free <= 0 or not state.has_room(b, XL):
            continue
        take = rng.randrange(1, free + 1)
        route_allocation(state, [a, b], take / 1000.0, demand_id)
        demand_id += 1
    return demand_id


# -- tiny instances for exact comparison ----------------------------------


def tiny_instance(rng: random.Random):
    """Random instance inside the exact solver's limits, with ample link
    capacity so only topology, delay and PM packing drive the optimum."""
    n = rng.randrange(3, 7)
    cables = []
    seen = set()
    for v in range(1, n):
        u = rng.randrange(v)
        seen.add((u, v))
        cables.append((u, v, 1000.0,
                       link_delay_from_length(rng.choice([20, 50, 100, 200, 400]))))
    for _ in range(rng.randrange(0, 4)):
        a, b = rng.randrange(n), rng.randrange(n)
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        cables.append((key[0], key[1], 1000.0,
                       link_delay_from_length(rng.choice([20, 50, 100, 200, 400]))))
    graph = make_graph(n, cables, cores=16)
    fns = {name: FunctionType(name, {CPU: 4}, 200.0, 10.0) for name in "ABC"}
    demands = []
    for i in range(rng.randrange(1, 4)):
        src, dst = rng.randrange(n), rng.randrange(n)
        while dst == src:
            dst = rng.randrange(n)
        chain = tuple(fns[rng.choice("ABC")] for _ in range(rng.randrange(1, 3)))
        demands.append(make_demand(i, src, dst, chain,
                                   rng.choice([1.0, 2.0, 5.0, 10.0, 20.0]),
                                   rng.choice([25.0, 30.0, 50.0, 100.0])))
    return graph, demands


def betweenness_oracle(graph: NetworkGraph) -> Dict[int, float]:
    """Literal enumeration of every shortest path between ordered pairs."""
    scores = {n.id: 0.0 for n in graph.nodes}
    for s in scores:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in graph.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for t in scores:
            if t == s or t not in dist:
                continue
            paths = []

            def walk(node, acc):
                if node == t:
                    paths.append(list(acc))
                    return
                for v in graph.neighbors(node):
                    if dist.get(v) == dist[node] + 1 and dist[v] <= dist[t]:
                        acc.append(v)
                        walk(v, acc)
                        acc.pop()

            walk(s, [s])
            share = 1.0 / len(paths)
            for path in paths:
                for v in path[1:-1]:
                    scores[v] += share
    return scores
