"""Substrate network model, topology file I/O, and default catalogs.

The substrate is an undirected multigraph-free network of switches, each
co-located with one physical machine (PM). Internally every undirected
cable is represented as two directed links with equal capacity and delay.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

CPU = "cpu"

# signal propagation in fiber, microseconds per km
PROPAGATION_US_PER_KM = 5.0


class TopologyError(ValueError):
    """Malformed topology input or inconsistent graph data."""


def link_delay_from_length(length_km: float) -> float:
    """Propagation delay (ms) of a fiber span of the given length (km)."""
    if length_km < 0:
        raise TopologyError("negative link length: %r" % (length_km,))
    return length_km * PROPAGATION_US_PER_KM / 1000.0


@dataclass(frozen=True)
class PowerParams:
    """Power ratings of the substrate hardware, all in watts."""

    switch_static_w: float = 130.0
    port_w: float = 1.0
    pm_idle_w: float = 150.0
    pm_max_w: float = 250.0


@dataclass(frozen=True)
class Link:
    """One direction of a cable. capacity in Mb/s, delay in ms."""

    src: int
    dst: int
    capacity: float
    delay: float

    @property
    def cable(self) -> Tuple[int, int]:
        return (self.src, self.dst) if self.src < self.dst else (self.dst, self.src)


@dataclass(frozen=True)
class PmSpec:
    """Per-resource capacity of a physical machine. 'cpu' is mandatory."""

    capacity: Mapping[str, int]

    def __post_init__(self):
        if CPU not in self.capacity:
            raise TopologyError("PM spec lacks a %r capacity" % CPU)
        for res, amount in self.capacity.items():
            if amount <= 0:
                raise TopologyError("non-positive %s capacity: %r" % (res, amount))

    @property
    def cores(self) -> int:
        return self.capacity[CPU]


@dataclass(frozen=True)
class NodeSpec:
    id: int
    pm: PmSpec


@dataclass(frozen=True)
class FunctionType:
    """A network function type deployable on any PM.

    requirements: per-resource demand of one instance ('cpu' mandatory).
    processing_capacity: traffic one instance can serve, Mb/s.
    processing_delay: per-traversal processing latency, ms.
    """

    name: str
    requirements: Mapping[str, int]
    processing_capacity: float
    processing_delay: float

    def __post_init__(self):
        if CPU not in self.requirements:
            raise TopologyError("function %s lacks a %r requirement" % (self.name, CPU))
        for res, amount in self.requirements.items():
            if amount <= 0:
                raise TopologyError("function %s: non-positive %s demand" % (self.name, res))
        if self.processing_capacity <= 0:
            raise TopologyError("function %s: non-positive processing capacity" % self.name)
        if self.processing_delay < 0:
            raise TopologyError("function %s: negative processing delay" % self.name)

    @property
    def cores(self) -> int:
        return self.requirements[CPU]


@dataclass(frozen=True)
class ServiceType:
    """An ordered function chain with its traffic profile."""

    name: str
    chain: Tuple[FunctionType, ...]
    bandwidth: float        # Mb/s per demand
    delay_budget: float     # ms end to end
    traffic_share: float    # fraction of generated demands

    def __post_init__(self):
        if not self.chain:
            raise TopologyError("service %s has an empty chain" % self.name)
        if self.bandwidth <= 0:
            raise TopologyError("service %s: non-positive bandwidth" % self.name)
        if self.delay_budget <= 0:
            raise TopologyError("service %s: non-positive delay budget" % self.name)
        if not 0.0 <= self.traffic_share <= 1.0:
            raise TopologyError("service %s: traffic share outside [0, 1]" % self.name)


class NetworkGraph:
    """Immutable substrate graph. Every cable appears as two directed links."""

    def __init__(self, nodes: Iterable[NodeSpec],
                 cables: Iterable[Tuple[int, int, float, float]],
                 power: Optional[PowerParams] = None):
        self.nodes: List[NodeSpec] = sorted(nodes, key=lambda n: n.id)
        self.power = power if power is not None else PowerParams()
        self.links: List[Link] = []
        self._by_pair: Dict[Tuple[int, int], Link] = {}
        self._adj: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        self._cables: List[Tuple[int, int]] = []
        if len(self._adj) != len(self.nodes):
            raise TopologyError("duplicate node id")
        for a, b, capacity, delay in cables:
            self._add_cable(a, b, capacity, delay)
        for nbrs in self._adj.values():
            nbrs.sort()
        self._cables.sort()
        self._max_delay = max((l.delay for l in self.links), default=0.0)
        self.validate()

    def _add_cable(self, a: int, b: int, capacity: float, delay: float) -> None:
        if a == b:
            raise TopologyError("self loop at node %d" % a)
        if a not in self._adj or b not in self._adj:
            raise TopologyError("link endpoint %d not defined as a node" % (a if a not in self._adj else b))
        key = (min(a, b), max(a, b))
        if key in self._by_pair:
            raise TopologyError("duplicate cable %d-%d" % key)
        if capacity <= 0:
            raise TopologyError("cable %d-%d: non-positive capacity" % key)
        if delay < 0:
            raise TopologyError("cable %d-%d: negative delay" % key)
        for src, dst in ((a, b), (b, a)):
            link = Link(src, dst, capacity, delay)
            self.links.append(link)
            self._by_pair[(src, dst)] = link
        self._adj[a].append(b)
        self._adj[b].append(a)
        self._cables.append(key)

    # -- lookups ---------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> NodeSpec:
        try:
            return self.nodes[node_id]
        except IndexError:
            raise TopologyError("unknown node id %r" % node_id) from None

    def has_link(self, src: int, dst: int) -> bool:
        return (src, dst) in self._by_pair

    def link(self, src: int, dst: int) -> Link:
        try:
            return self._by_pair[(src, dst)]
        except KeyError:
            raise TopologyError("no link %d->%d" % (src, dst)) from None

    def neighbors(self, node_id: int) -> List[int]:
        return self._adj[node_id]

    def cables(self) -> List[Tuple[int, int]]:
        """Undirected cables as sorted (low, high) node pairs."""
        return self._cables

    def cable_link(self, a: int, b: int) -> Link:
        """The canonical (low->high) direction of a cable."""
        lo, hi = (a, b) if a < b else (b, a)
        return self.link(lo, hi)

    @property
    def max_link_delay(self) -> float:
        return self._max_delay

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise TopologyError("node ids must be dense 0..N-1, got %r" % (ids,))
        for a, b in self._cables:
            fwd, rev = self._by_pair[(a, b)], self._by_pair[(b, a)]
            if fwd.capacity != rev.capacity or fwd.delay != rev.delay:
                raise TopologyError("asymmetric cable %d-%d" % (a, b))

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return (self.nodes == other.nodes and self.links == other.links
                and self.power == other.power)


# -- file format ---------------------------------------------------------
#
#   node <id> <cores>
#   link <src> <dst> <capacity_mbps> <length_km | length"km" | delay"ms">
#
# '#' starts a comment, blank lines are skipped. A bare number in the
# fourth link field is a length in km; a 'ms' suffix gives the delay
# directly. Each link line declares one undirected cable.


def parse_topology(text: str, power: Optional[PowerParams] = None) -> NetworkGraph:
    nodes: List[NodeSpec] = []
    cables: List[Tuple[int, int, float, float]] = []
    seen_ids = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node":
                if len(parts) != 3:
                    raise ValueError("expected 'node <id> <cores>'")
                node_id, cores = int(parts[1]), int(parts[2])
                if node_id in seen_ids:
                    raise ValueError("duplicate node id %d" % node_id)
                seen_ids.add(node_id)
                nodes.append(NodeSpec(node_id, PmSpec({CPU: cores})))
            elif parts[0] == "link":
                if len(parts) != 5:
                    raise ValueError("expected 'link <src> <dst> <capacity> <length|delay>'")
                src, dst = int(parts[1]), int(parts[2])
                capacity = float(parts[3])
                spec = parts[4]
                if spec.endswith("ms"):
                    delay = float(spec[:-2])
                    if delay < 0:
                        raise ValueError("negative delay")
                elif spec.endswith("km"):
                    delay = link_delay_from_length(float(spec[:-2]))
                else:
                    delay = link_delay_from_length(float(spec))
                cables.append((src, dst, capacity, delay))
            else:
                raise ValueError("unknown record %r" % parts[0])
        except (ValueError, TopologyError) as exc:
            raise TopologyError("line %d: %s" % (lineno, exc)) from None
    if not nodes:
        raise TopologyError("topology defines no nodes")
    return NetworkGraph(nodes, cables, power)


def serialize_topology(graph: NetworkGraph) -> str:
    """Canonical text form; parse_topology(serialize_topology(g)) == g."""
    out = []
    for node in graph.nodes:
        out.append("node %d %d" % (node.id, node.pm.cores))
    for a, b in graph.cables():
        link = graph.link(a, b)
        out.append("link %d %d %r %rms" % (a, b, link.capacity, link.delay))
    return "\n".join(out) + "\n"


def nobel_germany(power: Optional[PowerParams] = None) -> NetworkGraph:
    """The bundled 17-node German reference backbone."""
    text = importlib.resources.files("vnfplace").joinpath(
        "data/nobel_germany.txt").read_text(encoding="utf-8")
    return parse_topology(text, power)


def default_catalogs() -> Tuple[Dict[str, FunctionType], Dict[str, ServiceType]]:
    """Built-in function and service catalogs.

    Six function types, each needing 4 cores, serving 200 Mb/s and adding
    10 ms of processing delay. Four services whose traffic shares sum to 1.
    """
    functions = {
        name: FunctionType(name, {CPU: 4}, 200.0, 10.0)
        for name in ("NAT", "FW", "TM", "WOC", "VOC", "IDPS")
    }
    f = functions

    def chain(*names):
        return tuple(f[n] for n in names)

    services = {
        "web": ServiceType("web", chain("NAT", "FW", "TM", "WOC", "IDPS"),
                           0.1, 500.0, 0.182),
        "voip": ServiceType("voip", chain("NAT", "FW", "TM", "FW", "NAT"),
                            0.064, 100.0, 0.118),
        "video": ServiceType("video", chain("NAT", "FW", "TM", "VOC", "IDPS"),
                             4.0, 100.0, 0.699),
        "gaming": ServiceType("gaming", chain("NAT", "FW", "VOC", "WOC", "IDPS"),
                              0.05, 60.0, 0.001),
    }
    return functions, services
