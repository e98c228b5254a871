"""Random demand generation and the demand file format."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Dict, Iterable, List

from .netstate import to_kbps
from .topology import NetworkGraph, ServiceType


class WorkloadError(ValueError):
    """Bad demand input or an unusable service mix."""


@dataclass(frozen=True)
class Demand:
    """One service request between two distinct substrate nodes."""

    id: int
    src: int
    dst: int
    service: ServiceType

    @property
    def chain(self):
        return self.service.chain

    @property
    def bandwidth(self) -> float:
        return self.service.bandwidth

    @property
    def bandwidth_kbps(self) -> int:
        return to_kbps(self.service.bandwidth)

    @property
    def delay_budget(self) -> float:
        return self.service.delay_budget


def _check_services(services: Dict[str, ServiceType]) -> None:
    if not services:
        raise WorkloadError("empty service catalog")
    total = sum(s.traffic_share for s in services.values())
    if abs(total - 1.0) > 1e-6:
        raise WorkloadError("traffic shares sum to %r, expected 1" % total)


def generate_demands(graph: NetworkGraph, count: int,
                     services: Dict[str, ServiceType], seed: int) -> List[Demand]:
    """Sample demands with uniform ordered (src, dst) pairs, src != dst,
    and services drawn by traffic share.

    Only rng.random() is drawn (pairs by index arithmetic, services by
    inverse CDF), so a seed pins the exact sequence.
    """
    if count < 0:
        raise WorkloadError("negative demand count")
    n = graph.num_nodes
    if count > 0 and n < 2:
        raise WorkloadError("need at least 2 nodes to build demands")
    _check_services(services)
    ordered = list(services.values())
    rng = random.Random(seed)
    demands = []
    for i in range(count):
        k = int(rng.random() * n * (n - 1))
        src = k // (n - 1)
        off = k % (n - 1)
        dst = off if off < src else off + 1
        r = rng.random()
        acc = 0.0
        service = ordered[-1]
        for s in ordered:
            acc += s.traffic_share
            if r < acc:
                service = s
                break
        demands.append(Demand(i, src, dst, service))
    return demands


# -- demand file format --------------------------------------------------
#
#   <id> <src> <dst> <service_name>
#
# '#' starts a comment, blank lines are skipped.


def export_demands(demands: Iterable[Demand]) -> str:
    lines = ["%d %d %d %s" % (d.id, d.src, d.dst, d.service.name)
             for d in demands]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_demands(text: str, graph: NetworkGraph,
                  services: Dict[str, ServiceType]) -> List[Demand]:
    demands: List[Demand] = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError("expected '<id> <src> <dst> <service>'")
            did, src, dst = int(parts[0]), int(parts[1]), int(parts[2])
            if did in seen:
                raise ValueError("duplicate demand id %d" % did)
            if not (0 <= src < graph.num_nodes and 0 <= dst < graph.num_nodes):
                raise ValueError("endpoint outside the topology")
            if src == dst:
                raise ValueError("src equals dst")
            service = services.get(parts[3])
            if service is None:
                raise ValueError("unknown service %r" % parts[3])
            seen.add(did)
            demands.append(Demand(did, src, dst, service))
        except ValueError as exc:
            raise WorkloadError("line %d: %s" % (lineno, exc)) from None
    return demands
