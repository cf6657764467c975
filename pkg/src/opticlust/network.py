"""Logical and physical optical-network synthesis from projected traffic.

Flow: map parallelism groups intra/inter-MCM, split the MCM's optical links
across inter parallelisms by traffic share (optionally time-multiplexing one
pair of phase-disjoint parallelisms), shape per-parallelism rings/FC, then
pick the rail-dimension physical topology that needs the fewest OCSs.
"""

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .errors import (
    InsufficientLinks,
    NoFeasibleMapping,
    NoIntraFill,
    TpExceedsMcm,
)
from .workload import PARALLELISM_ORDER, Parallelism, ParallelStrategy, PhaseTag


def rail_degree(strategy: ParallelStrategy, p: Parallelism) -> int:
    """Group size of ``p`` at the MCM level.

    EP groups are carved out of DP ranks, so the data-parallel rail spans
    only the dp/ep residual.
    """
    if p == Parallelism.DP:
        return strategy.dp // strategy.ep
    return strategy.degree(p)


def map_parallelisms(
    strategy: ParallelStrategy,
    mcm_dies: int,
    volumes: Dict[Parallelism, float],
) -> Tuple[List[Parallelism], List[Parallelism]]:
    """Split parallelisms into intra-MCM and inter-MCM sets.

    TP is always intra.  If TP alone does not fill the die grid, the
    highest-traffic remaining parallelism whose degree completes the grid
    exactly is pulled in as well.  The intra product must equal ``mcm_dies``
    so that every MCM is one clean endpoint of each inter ring.
    """
    if strategy.tp > mcm_dies:
        raise TpExceedsMcm(f"tp={strategy.tp} exceeds {mcm_dies} dies per MCM")
    if mcm_dies % strategy.tp != 0:
        raise NoIntraFill(f"tp={strategy.tp} does not divide mcm_dies={mcm_dies}")
    intra = [Parallelism.TP]
    fill = mcm_dies // strategy.tp
    if fill > 1:
        candidates = [
            p
            for p in (Parallelism.CP, Parallelism.EP, Parallelism.DP, Parallelism.PP)
            if rail_degree(strategy, p) == fill
        ]
        if not candidates:
            raise NoIntraFill(
                f"no parallelism of degree {fill} to fill the remaining dies"
            )
        best = max(candidates, key=lambda p: (volumes.get(p, 0.0), -PARALLELISM_ORDER.index(p)))
        intra.append(best)
    inter = [
        p
        for p in (Parallelism.CP, Parallelism.EP, Parallelism.DP, Parallelism.PP)
        if p not in intra and rail_degree(strategy, p) > 1
    ]
    return intra, inter


def _leftover_target(volumes: Dict[Parallelism, float], pool: Sequence[Parallelism]) -> Parallelism:
    # Highest volume wins; ties resolved by the fixed parallelism order.
    return max(pool, key=lambda p: (volumes[p], -PARALLELISM_ORDER.index(p)))


def _ensure_min_one(alloc: Dict[Parallelism, int], volumes: Dict[Parallelism, float]):
    for p in sorted(alloc, key=PARALLELISM_ORDER.index):
        if volumes[p] > 0 and alloc[p] == 0:
            donor = max(
                alloc, key=lambda q: (alloc[q], -PARALLELISM_ORDER.index(q))
            )
            if alloc[donor] <= 1:
                raise InsufficientLinks("cannot give every active parallelism a link")
            alloc[donor] -= 1
            alloc[p] = 1


@dataclass
class LinkAllocation:
    per_parallelism: Dict[Parallelism, int]
    reuse_pair: Optional[Tuple[Parallelism, Parallelism]] = None
    reuse_links: int = 0

    def links(self, p: Parallelism) -> int:
        if self.reuse_pair and p in self.reuse_pair:
            return self.reuse_links
        return self.per_parallelism.get(p, 0)

    def total(self) -> int:
        return sum(self.per_parallelism.values()) + self.reuse_links


def allocate_links(
    L: int,
    volumes: Dict[Parallelism, float],
    reuse_pair: Optional[Tuple[Parallelism, Parallelism]] = None,
) -> LinkAllocation:
    """Split ``L`` links across inter parallelisms by traffic proportion.

    Without reuse each parallelism gets floor(L*v/sum(v)); leftovers go to
    the highest-volume one.  With a reuse pair the shared pool is sized by
    the pair's dominant phase volume, and the rest is split proportionally
    among the others.  Every nonzero-volume parallelism keeps at least one
    link.
    """
    active = {p: v for p, v in volumes.items() if v > 0}
    if not active:
        return LinkAllocation(per_parallelism={})
    if reuse_pair is not None:
        p1, p2 = reuse_pair
        if p1 not in active or p2 not in active:
            reuse_pair = None
    n_claims = len(active) - (1 if reuse_pair else 0)
    if L < n_claims:
        raise InsufficientLinks(f"{L} links for {n_claims} allocations")
    if reuse_pair is None:
        total = sum(active.values())
        alloc = {p: math.floor(L * v / total) for p, v in active.items()}
        leftover = L - sum(alloc.values())
        if leftover:
            alloc[_leftover_target(active, list(active))] += leftover
        _ensure_min_one(alloc, active)
        return LinkAllocation(per_parallelism=alloc)

    p1, p2 = reuse_pair
    vmax = max(active[p1], active[p2])
    others = {p: v for p, v in active.items() if p not in (p1, p2)}
    denom = sum(others.values()) + vmax
    l_reuse = math.floor(L * vmax / denom)
    l_reuse = max(l_reuse, 1)
    remaining = L - l_reuse
    if others:
        if remaining < len(others):
            raise InsufficientLinks("reuse pool leaves too few links for the rest")
        osum = sum(others.values())
        alloc = {p: math.floor(remaining * v / osum) for p, v in others.items()}
        leftover = remaining - sum(alloc.values())
        if leftover:
            alloc[_leftover_target(others, list(others))] += leftover
        _ensure_min_one(alloc, others)
    else:
        alloc = {}
        l_reuse = L  # single shared pair takes everything
    return LinkAllocation(per_parallelism=alloc, reuse_pair=(p1, p2), reuse_links=l_reuse)


class RingShape(str, Enum):
    RING = "Ring"
    FULLY_CONNECTED = "FullyConnected"


@dataclass(frozen=True)
class ParallelStructure:
    parallelism: Parallelism
    shape: RingShape
    group_size: int
    links: int


@dataclass
class LogicalTopology:
    structures: Dict[Parallelism, ParallelStructure]
    reuse_pair: Optional[Tuple[Parallelism, Parallelism]] = None
    reuse_links: int = 0
    phase_configs: Dict[PhaseTag, Dict[Parallelism, int]] = field(default_factory=dict)

    def links(self, p: Parallelism) -> int:
        if self.reuse_pair and p in self.reuse_pair:
            return self.reuse_links
        s = self.structures.get(p)
        return s.links if s else 0


def build_logical(
    inter: Sequence[Parallelism],
    strategy: ParallelStrategy,
    alloc: LinkAllocation,
    ep_fully_connected: bool = False,
) -> LogicalTopology:
    """Shape each inter parallelism as a ring (or FC for EP) on its links.

    With a reuse pair, per-phase configs move the shared pool between the
    attention-phase member (CP) and the ffn-phase member (EP).
    """
    structures: Dict[Parallelism, ParallelStructure] = {}
    for p in inter:
        size = rail_degree(strategy, p)
        links = alloc.links(p)
        shape = RingShape.RING
        if p == Parallelism.EP and ep_fully_connected and links >= size - 1:
            shape = RingShape.FULLY_CONNECTED
        structures[p] = ParallelStructure(p, shape, size, links)
    phase_configs: Dict[PhaseTag, Dict[Parallelism, int]] = {}
    if alloc.reuse_pair:
        p_attn, p_ffn = alloc.reuse_pair
        # CP talks in the attention phase, EP around the FFN.
        if p_attn != Parallelism.CP and p_ffn == Parallelism.CP:
            p_attn, p_ffn = p_ffn, p_attn
        phase_configs[PhaseTag.ATTENTION] = {p_attn: alloc.reuse_links}
        phase_configs[PhaseTag.FFN] = {p_ffn: alloc.reuse_links}
    return LogicalTopology(
        structures=structures,
        reuse_pair=alloc.reuse_pair,
        reuse_links=alloc.reuse_links,
        phase_configs=phase_configs,
    )


@dataclass(frozen=True)
class RailDimension:
    size: int  # N_i, MCMs per rail
    links: int  # R_i, links per MCM in this dimension
    fan_in: int  # k_i, links per MCM to one OCS
    parallelisms: Tuple[Parallelism, ...]

    @property
    def ocs_groups(self) -> int:
        return self.links // self.fan_in  # S_i


@dataclass
class PhysicalTopology:
    dims: List[RailDimension]
    mcm_count: int

    @property
    def total_ocs(self) -> int:
        n = self.mcm_count
        total = 0
        for d in self.dims:
            total += (n // d.size) * d.ocs_groups
        return total

    def dim_of(self, p: Parallelism) -> Optional[RailDimension]:
        for d in self.dims:
            if p in d.parallelisms:
                return d
        return None


def _dimension(
    group: Sequence[Parallelism],
    strategy: ParallelStrategy,
    links: int,
    port_count: int,
) -> Optional[RailDimension]:
    size = 1
    for p in group:
        size *= rail_degree(strategy, p)
    if size < 2 or links < 1:
        return None
    fan_in = min(port_count // size, links)
    if fan_in < 1:
        return None  # N_i exceeds the OCS port count even at k=1
    return RailDimension(size=size, links=links, fan_in=fan_in, parallelisms=tuple(group))


def _partitions_pairs(items: List[Parallelism]):
    """All partitions of ``items`` into blocks of size one or two."""
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for sub in _partitions_pairs(rest):
        yield [[head]] + sub
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1 :]
        for sub in _partitions_pairs(remaining):
            yield [[head, other]] + sub


def derive_physical(
    logical: LogicalTopology,
    strategy: ParallelStrategy,
    mcm_count: int,
    total_links: int,
    port_count: int,
) -> PhysicalTopology:
    """Fewest-OCS assignment of parallelisms to at most four rail dimensions.

    Enumerates partitions into single- or pair-parallelism dimensions (a
    reuse pair is forced into one dimension), maximizes per-dimension OCS
    fan-in under the port cap, and keeps the minimum-OCS topology.  Ties
    break toward fewer dimensions, then the lexicographically smallest
    dimension-size tuple.
    """
    inter = sorted(logical.structures, key=PARALLELISM_ORDER.index)
    if len(inter) > 4:
        raise NoFeasibleMapping("more than four inter-MCM parallelisms")
    if not inter:
        return PhysicalTopology(dims=[], mcm_count=mcm_count)
    best: Optional[PhysicalTopology] = None
    best_key = None
    for partition in _partitions_pairs(list(inter)):
        if len(partition) > 4:
            continue
        if logical.reuse_pair:
            pair = set(logical.reuse_pair)
            if not any(set(block) == pair for block in partition):
                continue
        dims: List[RailDimension] = []
        feasible = True
        for block in partition:
            if logical.reuse_pair and set(block) == set(logical.reuse_pair):
                links = logical.reuse_links
            else:
                links = sum(logical.links(p) for p in block)
            dim = _dimension(block, strategy, links, port_count)
            if dim is None:
                feasible = False
                break
            dims.append(dim)
        if not feasible:
            continue
        prod = 1
        for d in dims:
            prod *= d.size
        if prod != mcm_count:
            continue
        if sum(d.links for d in dims) > total_links:
            continue
        dims.sort(key=lambda d: (d.size, [PARALLELISM_ORDER.index(p) for p in d.parallelisms]))
        topo = PhysicalTopology(dims=dims, mcm_count=mcm_count)
        key = (topo.total_ocs, len(dims), tuple(d.size for d in dims))
        if best_key is None or key < best_key:
            best, best_key = topo, key
    if best is None:
        raise NoFeasibleMapping(
            f"no rail assignment fits {mcm_count} MCMs under P={port_count}"
        )
    return best


@dataclass
class TopologyReport:
    ok: bool
    violations: List[str]


def validate_topology(
    phys: PhysicalTopology, mcm_count: int, total_links: int, port_count: int
) -> TopologyReport:
    violations: List[str] = []
    prod = 1
    for d in phys.dims:
        prod *= d.size
    if prod != mcm_count:
        violations.append(f"dimension sizes multiply to {prod}, expected {mcm_count}")
    if sum(d.links for d in phys.dims) > total_links:
        violations.append("link overcommit")
    for d in phys.dims:
        if d.fan_in * d.size > port_count:
            violations.append(
                f"dimension {d.parallelisms}: k*N = {d.fan_in * d.size} > P = {port_count}"
            )
        if d.ocs_groups != d.links // d.fan_in:
            violations.append(f"dimension {d.parallelisms}: inconsistent OCS group count")
    if len(phys.dims) > 4:
        violations.append("more than four rail dimensions")
    return TopologyReport(ok=not violations, violations=violations)


def wiring_plan(phys: PhysicalTopology, tech_port_count: int) -> Dict:
    """JSON-serializable wiring description: per dimension, OCS groups and
    per-MCM port usage."""
    dims = []
    for i, d in enumerate(phys.dims):
        dims.append(
            {
                "dimension": i,
                "parallelisms": [p.value for p in d.parallelisms],
                "mcms_per_rail": d.size,
                "links_per_mcm": d.links,
                "links_per_ocs": d.fan_in,
                "ocs_groups_per_rail": d.ocs_groups,
                "rails": phys.mcm_count // d.size,
                "ocs_ports_used": d.fan_in * d.size,
                "ocs_port_count": tech_port_count,
            }
        )
    return {"mcm_count": phys.mcm_count, "total_ocs": phys.total_ocs, "dimensions": dims}
