"""Mutable substrate state: link residuals, function instances, allocations.

Bandwidth is tracked internally as integer kb/s so that applying and
releasing an allocation are exact inverses (no float drift). Public
inputs in Mb/s are quantized to a 1 kb/s grid.

Switch, cable and PM activity are not stored; they are derived from use
counts and hosted instances, which keeps the on/off bookkeeping
consistent by construction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, TYPE_CHECKING

from .topology import CPU, FunctionType, Link, NetworkGraph

if TYPE_CHECKING:
    from .workload import Demand


class AllocationError(ValueError):
    """A requested state change would violate capacity or consistency."""


def to_kbps(mbps: float) -> int:
    return int(round(mbps * 1000.0))


def to_mbps(kbps: int) -> float:
    return kbps / 1000.0


@dataclass
class VnfInstance:
    """One running function instance on a PM.

    served maps demand id to the total kb/s this instance processes for
    that demand (a chain may traverse the same instance more than once).
    """

    id: int
    node: int
    function: FunctionType
    residual_kbps: int
    served: Dict[int, int]

    @property
    def capacity_kbps(self) -> int:
        return to_kbps(self.function.processing_capacity)


@dataclass(frozen=True)
class Route:
    """Per-virtual-hop physical paths. segments[k] carries the traffic
    from the k-th chain position's predecessor to the position itself;
    the final segment reaches the destination. Empty segments mean
    co-location."""

    segments: Tuple[Tuple[Link, ...], ...]

    def links(self):
        for seg in self.segments:
            for link in seg:
                yield link

    @property
    def propagation_ms(self) -> float:
        return sum(l.delay for l in self.links())

    def hop_count(self) -> int:
        return sum(len(seg) for seg in self.segments)


@dataclass(frozen=True)
class FunctionAssignment:
    """Chain position -> (PM node, instance). Negative instance ids are
    placeholders for instances that do not exist yet; equal placeholders
    within one allocation resolve to the same new instance."""

    function: FunctionType
    node: int
    instance_id: int


@dataclass(frozen=True)
class Allocation:
    demand_id: int
    assignments: Tuple[FunctionAssignment, ...]
    route: Route
    total_delay_ms: float
    bandwidth_kbps: int


class NetworkState:
    """All mutable capacity state of a substrate network."""

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self.residual_kbps: Dict[Tuple[int, int], int] = {
            (l.src, l.dst): to_kbps(l.capacity) for l in graph.links}
        self.link_use: Dict[Tuple[int, int], int] = {
            (l.src, l.dst): 0 for l in graph.links}
        self.instances: Dict[int, VnfInstance] = {}
        self.allocations: Dict[int, Allocation] = {}
        self._next_instance = 0

    # -- read API (mirrored by StateOverlay) -----------------------------

    def residual(self, src: int, dst: int) -> int:
        """Free capacity of the directed link, kb/s."""
        return self.residual_kbps[(src, dst)]

    def sym_residual(self, a: int, b: int) -> int:
        """min of both directions, kb/s; the cable-level free capacity."""
        return min(self.residual_kbps[(a, b)], self.residual_kbps[(b, a)])

    def link_used(self, src: int, dst: int) -> bool:
        return self.link_use[(src, dst)] > 0

    def cable_active(self, a: int, b: int) -> bool:
        return self.link_use[(a, b)] > 0 or self.link_use[(b, a)] > 0

    def switch_active(self, node: int) -> bool:
        return any(self.cable_active(node, nbr) for nbr in self.graph.neighbors(node))

    def pm_active(self, node: int) -> bool:
        return any(inst.node == node for inst in self.instances.values())

    def active_cables(self) -> List[Tuple[int, int]]:
        return [c for c in self.graph.cables() if self.cable_active(*c)]

    def active_switches(self) -> List[int]:
        return [n.id for n in self.graph.nodes if self.switch_active(n.id)]

    def active_pms(self) -> List[int]:
        return sorted({inst.node for inst in self.instances.values()})

    def instances_on(self, node: int) -> List[VnfInstance]:
        return sorted((i for i in self.instances.values() if i.node == node),
                      key=lambda i: i.id)

    def used_resources(self, node: int) -> Dict[str, int]:
        used: Dict[str, int] = {}
        for inst in self.instances.values():
            if inst.node == node:
                for res, amount in inst.function.requirements.items():
                    used[res] = used.get(res, 0) + amount
        return used

    def has_room(self, node: int, function: FunctionType) -> bool:
        used = self.used_resources(node)
        cap = self.graph.node(node).pm.capacity
        return all(used.get(res, 0) + amount <= cap.get(res, 0)
                   for res, amount in function.requirements.items())

    def cpu_utilization(self, node: int) -> float:
        return self.used_resources(node).get(CPU, 0) / self.graph.node(node).pm.cores

    def find_reusable(self, node: int, function: FunctionType,
                      need_kbps: int) -> Optional[Tuple[int, int]]:
        """Best-fit instance of the given function type on the node with at
        least need_kbps spare, as (instance id, residual); None if none fits."""
        best = None
        for inst in self.instances.values():
            if inst.node != node or inst.function.name != function.name:
                continue
            if inst.residual_kbps >= need_kbps:
                key = (inst.residual_kbps, inst.id)
                if best is None or key < best:
                    best = key
        if best is None:
            return None
        return (best[1], best[0])

    # -- mutation --------------------------------------------------------

    def _check_route(self, allocation: Allocation, demand: "Demand") -> None:
        route = allocation.route
        if len(route.segments) != len(allocation.assignments) + 1:
            raise AllocationError("route must have one segment per chain hop")
        at = demand.src
        for k, seg in enumerate(route.segments):
            for link in seg:
                if link.src != at:
                    raise AllocationError("discontinuous route at node %d" % at)
                if not self.graph.has_link(link.src, link.dst):
                    raise AllocationError("route uses unknown link %d->%d"
                                          % (link.src, link.dst))
                at = link.dst
            want = (allocation.assignments[k].node
                    if k < len(allocation.assignments) else demand.dst)
            if at != want:
                raise AllocationError("segment %d ends at %d, expected %d"
                                      % (k, at, want))

    def apply_allocation(self, allocation: Allocation, demand: "Demand") -> Allocation:
        """Atomically commit an allocation. Placeholder instance ids are
        resolved to fresh instances; the committed allocation is returned.
        Raises AllocationError leaving the state untouched on any violation."""
        if demand.id in self.allocations:
            raise AllocationError("demand %d already allocated" % demand.id)
        if allocation.demand_id != demand.id:
            raise AllocationError("allocation/demand id mismatch")
        chain_names = [f.name for f in demand.chain]
        if [a.function.name for a in allocation.assignments] != chain_names:
            raise AllocationError("assignments do not match the demand chain")
        self._check_route(allocation, demand)
        kbps = allocation.bandwidth_kbps

        link_need = Counter()
        for link in allocation.route.links():
            link_need[(link.src, link.dst)] += kbps
        for pair, need in link_need.items():
            if self.residual_kbps[pair] < need:
                raise AllocationError("link %d->%d lacks %d kbps" % (*pair, need))

        inst_need: Dict[int, int] = Counter()
        placeholder_fn: Dict[int, Tuple[FunctionType, int]] = {}
        for a in allocation.assignments:
            inst_need[a.instance_id] += kbps
            if a.instance_id < 0:
                prior = placeholder_fn.get(a.instance_id)
                if prior is not None and prior != (a.function, a.node):
                    raise AllocationError("placeholder %d reused inconsistently"
                                          % a.instance_id)
                placeholder_fn[a.instance_id] = (a.function, a.node)
        new_by_node: Dict[int, List[FunctionType]] = {}
        for inst_id, need in inst_need.items():
            if inst_id >= 0:
                inst = self.instances.get(inst_id)
                if inst is None:
                    raise AllocationError("unknown instance %d" % inst_id)
                if inst.residual_kbps < need:
                    raise AllocationError("instance %d lacks %d kbps" % (inst_id, need))
            else:
                function, node = placeholder_fn[inst_id]
                if to_kbps(function.processing_capacity) < need:
                    raise AllocationError("new %s instance cannot carry %d kbps"
                                          % (function.name, need))
                new_by_node.setdefault(node, []).append(function)
        for a in allocation.assignments:
            if a.instance_id >= 0:
                inst = self.instances[a.instance_id]
                if inst.node != a.node or inst.function.name != a.function.name:
                    raise AllocationError("instance %d does not match assignment"
                                          % a.instance_id)
        for node, fns in new_by_node.items():
            used = self.used_resources(node)
            cap = self.graph.node(node).pm.capacity
            extra: Dict[str, int] = Counter()
            for fn in fns:
                for res, amount in fn.requirements.items():
                    extra[res] += amount
            for res, amount in extra.items():
                if used.get(res, 0) + amount > cap.get(res, 0):
                    raise AllocationError("PM %d lacks %s for new instances"
                                          % (node, res))

        # all checks passed, now mutate
        for pair, need in link_need.items():
            self.residual_kbps[pair] -= need
        for link in allocation.route.links():
            self.link_use[(link.src, link.dst)] += 1
        id_map: Dict[int, int] = {}
        for a in allocation.assignments:
            if a.instance_id < 0 and a.instance_id not in id_map:
                function, node = placeholder_fn[a.instance_id]
                new_id = self._next_instance
                self._next_instance += 1
                self.instances[new_id] = VnfInstance(
                    new_id, node, function,
                    to_kbps(function.processing_capacity), {})
                id_map[a.instance_id] = new_id
        resolved = []
        for a in allocation.assignments:
            inst_id = id_map.get(a.instance_id, a.instance_id)
            resolved.append(FunctionAssignment(a.function, a.node, inst_id))
        for inst_id, need in inst_need.items():
            inst = self.instances[id_map.get(inst_id, inst_id)]
            inst.residual_kbps -= need
            inst.served[demand.id] = inst.served.get(demand.id, 0) + need
        committed = Allocation(allocation.demand_id, tuple(resolved),
                               allocation.route, allocation.total_delay_ms, kbps)
        self.allocations[demand.id] = committed
        return committed

    def release_allocation(self, demand_id: int) -> None:
        """Exact inverse of apply_allocation. Instances left with full
        residual are shut down."""
        alloc = self.allocations.pop(demand_id, None)
        if alloc is None:
            raise AllocationError("demand %d has no allocation" % demand_id)
        kbps = alloc.bandwidth_kbps
        for link in alloc.route.links():
            pair = (link.src, link.dst)
            self.residual_kbps[pair] += kbps
            self.link_use[pair] -= 1
        for inst_id in {a.instance_id for a in alloc.assignments}:
            inst = self.instances[inst_id]
            inst.residual_kbps += inst.served.pop(demand_id)
            if inst.residual_kbps == inst.capacity_kbps:
                del self.instances[inst_id]

    def clone(self) -> "NetworkState":
        dup = NetworkState.__new__(NetworkState)
        dup.graph = self.graph
        dup.residual_kbps = dict(self.residual_kbps)
        dup.link_use = dict(self.link_use)
        dup.instances = {
            i.id: VnfInstance(i.id, i.node, i.function, i.residual_kbps,
                              dict(i.served))
            for i in self.instances.values()}
        dup.allocations = dict(self.allocations)
        dup._next_instance = self._next_instance
        return dup

    # -- integrity -------------------------------------------------------

    def validate(self) -> List[str]:
        """Cross-check every piece of bookkeeping; returns violations."""
        bad: List[str] = []
        want_res: Dict[Tuple[int, int], int] = Counter()
        want_use: Dict[Tuple[int, int], int] = Counter()
        for alloc in self.allocations.values():
            for link in alloc.route.links():
                want_res[(link.src, link.dst)] += alloc.bandwidth_kbps
                want_use[(link.src, link.dst)] += 1
        for link in self.graph.links:
            pair = (link.src, link.dst)
            cap = to_kbps(link.capacity)
            res = self.residual_kbps[pair]
            if not 0 <= res <= cap:
                bad.append("link %d->%d residual %d outside [0, %d]"
                           % (link.src, link.dst, res, cap))
            if cap - res != want_res[pair]:
                bad.append("link %d->%d books %d kbps, allocations need %d"
                           % (link.src, link.dst, cap - res, want_res[pair]))
            if self.link_use[pair] != want_use[pair]:
                bad.append("link %d->%d use count %d, allocations route %d"
                           % (link.src, link.dst, self.link_use[pair], want_use[pair]))
        want_served: Dict[Tuple[int, int], int] = Counter()
        for alloc in self.allocations.values():
            for a in alloc.assignments:
                want_served[(a.instance_id, alloc.demand_id)] += alloc.bandwidth_kbps
        for inst in self.instances.values():
            take = sum(inst.served.values())
            if inst.residual_kbps + take != inst.capacity_kbps:
                bad.append("instance %d residual %d + served %d != capacity %d"
                           % (inst.id, inst.residual_kbps, take, inst.capacity_kbps))
            if inst.residual_kbps < 0:
                bad.append("instance %d oversubscribed" % inst.id)
            for dem, amount in inst.served.items():
                if want_served.get((inst.id, dem)) != amount:
                    bad.append("instance %d serves demand %d with %d kbps, "
                               "allocations say %s"
                               % (inst.id, dem, amount,
                                  want_served.get((inst.id, dem))))
        for (inst_id, dem), amount in want_served.items():
            if inst_id not in self.instances:
                bad.append("allocation %d references missing instance %d"
                           % (dem, inst_id))
        for node in self.graph.nodes:
            used = self.used_resources(node.id)
            for res, amount in used.items():
                if amount > node.pm.capacity.get(res, 0):
                    bad.append("PM %d over capacity on %s (%d > %d)"
                               % (node.id, res, amount,
                                  node.pm.capacity.get(res, 0)))
        for dem, alloc in self.allocations.items():
            if alloc.demand_id != dem:
                bad.append("allocation keyed %d carries id %d" % (dem, alloc.demand_id))
            proc = sum(a.function.processing_delay for a in alloc.assignments)
            total = alloc.route.propagation_ms + proc
            if abs(total - alloc.total_delay_ms) > 1e-9:
                bad.append("allocation %d delay %r, recomputed %r"
                           % (dem, alloc.total_delay_ms, total))
        return bad

    def snapshot(self) -> str:
        """Deterministic text dump of all non-pristine state."""
        out = []
        for link in sorted(self.link_use, key=lambda p: p):
            res = self.residual_kbps[link]
            cap = to_kbps(self.graph.link(*link).capacity)
            if res != cap or self.link_use[link]:
                out.append("link %d %d residual %d use %d"
                           % (link[0], link[1], res, self.link_use[link]))
        for inst in sorted(self.instances.values(), key=lambda i: i.id):
            served = ",".join("%d:%d" % kv for kv in sorted(inst.served.items()))
            out.append("instance %d node %d fn %s residual %d served %s"
                       % (inst.id, inst.node, inst.function.name,
                          inst.residual_kbps, served))
        for dem in sorted(self.allocations):
            alloc = self.allocations[dem]
            fns = ",".join("%s@%d#%d" % (a.function.name, a.node, a.instance_id)
                           for a in alloc.assignments)
            segs = ";".join(",".join("%d-%d" % (l.src, l.dst) for l in seg)
                            for seg in alloc.route.segments)
            out.append("alloc %d bw %d delay %r fns %s route %s"
                       % (dem, alloc.bandwidth_kbps, alloc.total_delay_ms,
                          fns, segs))
        return "\n".join(out) + "\n"


class StateOverlay:
    """A NetworkState read view with uncommitted deltas layered on top.

    Placement plans a chain hop by hop; each planned segment and instance
    is recorded here so later hops see the partial plan, while the real
    state stays untouched until the whole chain fits.
    """

    def __init__(self, state: NetworkState):
        self.state = state
        self.graph = state.graph
        self.link_debit: Dict[Tuple[int, int], int] = {}
        self.inst_debit: Dict[int, int] = {}
        self.pending: Dict[int, VnfInstance] = {}
        self._next_placeholder = -1

    def fork(self) -> "StateOverlay":
        """Independent copy of the pending deltas over the same state;
        used to explore alternatives without unwinding."""
        dup = StateOverlay(self.state)
        dup.link_debit = dict(self.link_debit)
        dup.inst_debit = dict(self.inst_debit)
        dup.pending = {
            k: VnfInstance(p.id, p.node, p.function, p.residual_kbps,
                           dict(p.served))
            for k, p in self.pending.items()}
        dup._next_placeholder = self._next_placeholder
        return dup

    # -- deltas ----------------------------------------------------------

    def add_links(self, links: Iterable[Link], kbps: int) -> None:
        for link in links:
            pair = (link.src, link.dst)
            self.link_debit[pair] = self.link_debit.get(pair, 0) + kbps

    def add_assignment(self, function: FunctionType, node: int,
                       instance_id: Optional[int], kbps: int) -> int:
        """Record one chain position. instance_id None creates a pending
        instance and returns its placeholder id (negative)."""
        if instance_id is None:
            inst_id = self._next_placeholder
            self._next_placeholder -= 1
            self.pending[inst_id] = VnfInstance(
                inst_id, node, function,
                to_kbps(function.processing_capacity) - kbps, {})
            return inst_id
        if instance_id in self.pending:
            self.pending[instance_id].residual_kbps -= kbps
        else:
            self.inst_debit[instance_id] = self.inst_debit.get(instance_id, 0) + kbps
        return instance_id

    # -- read API --------------------------------------------------------

    def residual(self, src: int, dst: int) -> int:
        return self.state.residual(src, dst) - self.link_debit.get((src, dst), 0)

    def sym_residual(self, a: int, b: int) -> int:
        return min(self.residual(a, b), self.residual(b, a))

    def link_used(self, src: int, dst: int) -> bool:
        return self.state.link_used(src, dst) or self.link_debit.get((src, dst), 0) > 0

    def cable_active(self, a: int, b: int) -> bool:
        return self.link_used(a, b) or self.link_used(b, a)

    def switch_active(self, node: int) -> bool:
        return any(self.cable_active(node, nbr) for nbr in self.graph.neighbors(node))

    def pm_active(self, node: int) -> bool:
        if self.state.pm_active(node):
            return True
        return any(p.node == node for p in self.pending.values())

    def instances_on(self, node: int) -> List[VnfInstance]:
        merged = self.state.instances_on(node)
        merged += [p for p in self.pending.values() if p.node == node]
        return merged

    def used_resources(self, node: int) -> Dict[str, int]:
        used = self.state.used_resources(node)
        for p in self.pending.values():
            if p.node == node:
                for res, amount in p.function.requirements.items():
                    used[res] = used.get(res, 0) + amount
        return used

    def has_room(self, node: int, function: FunctionType) -> bool:
        used = self.used_resources(node)
        cap = self.graph.node(node).pm.capacity
        return all(used.get(res, 0) + amount <= cap.get(res, 0)
                   for res, amount in function.requirements.items())

    def cpu_utilization(self, node: int) -> float:
        return self.used_resources(node).get(CPU, 0) / self.graph.node(node).pm.cores

    def find_reusable(self, node: int, function: FunctionType,
                      need_kbps: int) -> Optional[Tuple[int, int]]:
        best = None
        for inst in self.state.instances.values():
            if inst.node != node or inst.function.name != function.name:
                continue
            left = inst.residual_kbps - self.inst_debit.get(inst.id, 0)
            if left >= need_kbps:
                key = (left, inst.id)
                if best is None or key < best:
                    best = key
        for inst in self.pending.values():
            if inst.node != node or inst.function.name != function.name:
                continue
            if inst.residual_kbps >= need_kbps:
                key = (inst.residual_kbps, inst.id)
                if best is None or key < best:
                    best = key
        if best is None:
            return None
        return (best[1], best[0])
