"""Cluster presets for throughput-scaling comparisons.

Four presets share the workload and the analytical iteration model and
differ only in the interconnect fabric and, for the rail presets, in how
optical links are allocated:

  gpu_clos     8-device scale-up domains (900 GB/s rings), clos scale-out
               at 60 GB/s per device.
  chiplet_ib   MCM scale-up over the on-package mesh, electrical scale-out
               at 60 GB/s per die.
  railx_like   MCM + optical circuit switches, two rail dimensions with a
               uniform link split (dynamic CP/EP reuse still applied).
  opticlust    MCM + OCS with traffic-proportional allocation and
               fewest-OCS rail synthesis (the full pipeline).
"""

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .arch import McmArch, TechParams, cost_model, derive_mcm
from .errors import NoFeasibleStrategy, OpticlustError
from .network import (
    LinkAllocation,
    RingShape,
    build_logical,
    derive_physical,
    map_parallelisms,
    rail_degree,
)
from .opt import DesignPoint, evaluate_design, valid_strategies
from .sim import CommFabric, optical_fabric, reuse_window, simulate_iteration
from .workload import (
    ModelConfig,
    Parallelism,
    ParallelStrategy,
    PhaseTag,
    project_traffic,
    validate_strategy,
)

GPU_SCALE_UP_BW = 900.0  # GB/s per device, NVLink-class
IB_BW = 60.0  # GB/s per device, InfiniBand-class

PRESETS = ("gpu_clos", "chiplet_ib", "railx_like", "opticlust")


def gpu_arch(total_compute: float, tech: TechParams, m: int = 6) -> McmArch:
    """A GPU cluster expressed in MCM terms: one die per package."""
    die_perf = tech.compute_density * 814.0  # H100-class die
    n = max(1, round(total_compute / die_perf))
    return derive_mcm(n * die_perf, N=n, x=1, y=1, m=m, o=1, r=0.5, tech=tech)


def _evaluate_electrical(
    model: ModelConfig,
    strategy: ParallelStrategy,
    arch: McmArch,
    tech: TechParams,
    scale_up_bw: Optional[float],
    scale_out_bw_per_device: float,
    scale_up_size: int,
) -> DesignPoint:
    """Shared evaluator for the gpu_clos and chiplet_ib presets."""
    validate_strategy(model, strategy, arch.device_count)
    profile = project_traffic(model, strategy)
    volumes = profile.volumes()
    intra, inter = map_parallelisms(strategy, scale_up_size, volumes)
    intra_bw: Dict[Parallelism, float] = {}
    for p in intra:
        size = strategy.degree(p) if p == Parallelism.TP else rail_degree(strategy, p)
        if size <= 1:
            continue
        if scale_up_bw is not None:
            intra_bw[p] = scale_up_bw
        else:
            intra_bw[p] = min(arch.x, arch.y) * arch.nop_link_bw / size
    aggregate = scale_up_size
    inter_bw = {p: scale_out_bw_per_device * aggregate for p in inter}
    if strategy.dp > 1 and Parallelism.DP not in inter_bw and Parallelism.DP not in intra:
        inter_bw[Parallelism.DP] = scale_out_bw_per_device * aggregate
    fabric = CommFabric(
        intra=intra,
        intra_bw=intra_bw,
        inter_bw=inter_bw,
        aggregate=aggregate,
        endpoint_mem_bw=aggregate * arch.mem_bw_per_die,
        device_mem_bw=arch.mem_bw_per_die,
    )
    result = simulate_iteration(model, strategy, arch, fabric, tech, profile=profile)
    cost = cost_model(arch, total_ocs=0, tech=tech)
    return DesignPoint(arch, strategy, None, None, result, cost)


def evaluate_gpu_clos(model, strategy, total_compute, tech) -> DesignPoint:
    arch = gpu_arch(total_compute, tech)
    return _evaluate_electrical(
        model, strategy, arch, tech, GPU_SCALE_UP_BW, IB_BW, scale_up_size=8
    )


def evaluate_chiplet_ib(model, strategy, arch, tech) -> DesignPoint:
    return _evaluate_electrical(
        model,
        strategy,
        arch,
        tech,
        scale_up_bw=None,
        scale_out_bw_per_device=IB_BW,
        scale_up_size=arch.dies_per_mcm,
    )


def _railx_allocation(
    inter_vols: Dict[Parallelism, float],
    L: int,
    strategy: ParallelStrategy,
    mcm_count: int,
    reuse: bool,
) -> Tuple[LinkAllocation, List[List[Parallelism]]]:
    """Uniform two-dimension link split in the rail style of prior designs.

    Parallelisms are split into two groups whose degree products multiply
    to the MCM count, choosing the most square split; each group's links
    are shared evenly among its members (or time-multiplexed for a CP/EP
    pair when reuse is on).
    """
    active = [p for p, v in sorted(inter_vols.items(), key=lambda kv: kv[0].value) if v > 0]
    if len(active) <= 1:
        alloc = LinkAllocation(per_parallelism={p: L for p in active})
        return alloc, [active]
    best_split = None
    best_gap = None
    for mask in range(1, 1 << len(active)):
        g1 = [p for i, p in enumerate(active) if mask & (1 << i)]
        g2 = [p for i, p in enumerate(active) if not mask & (1 << i)]
        if not g1 or not g2:
            continue
        if reuse and Parallelism.CP in active and Parallelism.EP in active:
            same = (Parallelism.CP in g1) == (Parallelism.EP in g1)
            if not same:
                continue
        n1 = math.prod(rail_degree(strategy, p) for p in g1)
        n2 = math.prod(rail_degree(strategy, p) for p in g2)
        if n1 * n2 != mcm_count:
            continue
        gap = abs(n1 - n2)
        key = (gap, tuple(p.value for p in g1))
        if best_gap is None or key < best_gap:
            best_gap, best_split = key, (g1, g2)
    if best_split is None:
        # No two-group split exists (for example three coprime degrees);
        # fall back to an even per-parallelism split.
        per = {p: L // len(active) for p in active}
        return LinkAllocation(per_parallelism=per), [[p] for p in active]
    g1, g2 = best_split
    half = L // 2
    per: Dict[Parallelism, int] = {}
    reuse_pair = None
    reuse_links = 0
    for group in (g1, g2):
        if (
            reuse
            and Parallelism.CP in group
            and Parallelism.EP in group
            and len(group) == 2
        ):
            reuse_pair = (Parallelism.CP, Parallelism.EP)
            reuse_links = half
        else:
            share = half // len(group)
            for p in group:
                per[p] = max(1, share)
    alloc = LinkAllocation(per_parallelism=per, reuse_pair=reuse_pair, reuse_links=reuse_links)
    return alloc, [g1, g2]


def evaluate_railx_like(
    model: ModelConfig,
    strategy: ParallelStrategy,
    arch: McmArch,
    tech: TechParams,
    use_reuse: bool = True,
) -> DesignPoint:
    validate_strategy(model, strategy, arch.device_count)
    profile = project_traffic(model, strategy)
    volumes = profile.volumes()
    intra, inter = map_parallelisms(strategy, arch.dies_per_mcm, volumes)
    inter_vols = {p: volumes[p] for p in inter}
    reuse = (
        use_reuse
        and inter_vols.get(Parallelism.CP, 0) > 0
        and inter_vols.get(Parallelism.EP, 0) > 0
        and reuse_window(model, strategy, arch.die_perf, tech) > tech.ocs_switch_latency
    )
    alloc, groups = _railx_allocation(inter_vols, arch.total_links, strategy, arch.N, reuse)
    logical = build_logical(inter, strategy, alloc)
    physical = derive_physical(logical, strategy, arch.N, arch.total_links, tech.ocs_port_count)
    fabric = optical_fabric(arch, logical, intra, strategy, tech)
    result = simulate_iteration(model, strategy, arch, fabric, tech, profile=profile)
    cost = cost_model(arch, physical.total_ocs, tech)
    return DesignPoint(arch, strategy, logical, physical, result, cost)


def search_preset(
    preset: str,
    model: ModelConfig,
    total_compute: float,
    tech: TechParams,
    budget: int,
    seed: int,
    mcm_vars: Optional[dict] = None,
    use_reuse: bool = True,
) -> Optional[DesignPoint]:
    """Best design point of a preset under a strategy-sampling budget."""
    mcm_vars = dict(mcm_vars or {})
    if preset == "gpu_clos":
        arch = gpu_arch(total_compute, tech)
        scale_up = 8

        def run(s):
            return _evaluate_electrical(model, s, arch, tech, GPU_SCALE_UP_BW, IB_BW, 8)

    else:
        arch = derive_mcm(total_compute, tech=tech, **mcm_vars)
        scale_up = arch.dies_per_mcm
        if preset == "chiplet_ib":

            def run(s):
                return evaluate_chiplet_ib(model, s, arch, tech)

        elif preset == "railx_like":

            def run(s):
                return evaluate_railx_like(model, s, arch, tech, use_reuse=use_reuse)

        elif preset == "opticlust":

            def run(s):
                return evaluate_design(model, s, arch, tech, use_reuse=use_reuse)

        else:
            raise ValueError(f"unknown preset {preset}")

    candidates = valid_strategies(model, arch.device_count, scale_up)
    if not candidates:
        return None
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(candidates))
    best: Optional[DesignPoint] = None
    for idx in order[: max(1, budget)]:
        try:
            point = run(candidates[int(idx)])
        except (OpticlustError, ValueError):
            continue
        if best is None or point.throughput > best.throughput:
            best = point
    return best
