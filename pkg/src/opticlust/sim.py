"""Analytical performance model for one training iteration.

Collective formulas follow the ring algorithm with an alpha-beta cost per
step; effective link bandwidth is clamped by half the attached memory
bandwidth because every relayed byte needs one read and one write on the
memory dies.  The iteration timeline is a 1F1B pipeline of per-microbatch
stage times, with the data-parallel gradient gather overlapped against
backward compute.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .arch import McmArch, TechParams
from .errors import CapacityExceeded
from .network import LogicalTopology, RingShape, rail_degree
from .workload import (
    Collective,
    ModelConfig,
    PARALLELISM_ORDER,
    Parallelism,
    ParallelStrategy,
    PhaseTag,
    TrafficProfile,
    project_traffic,
)

GB = 1e9
TFLOP = 1e12


def _beff(link_bw: float, mem_bw: float) -> float:
    return min(link_bw, mem_bw / 2.0)


def collective_time(
    kind: Collective,
    group_size: int,
    volume: float,
    link_bw: float,
    alpha: float,
    mem_bw: float = math.inf,
    ring_a2a: bool = False,
) -> float:
    """Time of one collective.

    ``volume`` is the full result size for AG/RS and the per-device payload
    (including the local share) for A2A; ``link_bw`` and ``mem_bw`` in GB/s.
    """
    n = group_size
    if n <= 1 or volume <= 0:
        return 0.0
    b = _beff(link_bw, mem_bw) * GB
    if kind in (Collective.ALL_GATHER, Collective.REDUCE_SCATTER):
        return (n - 1) * (alpha + (volume / n) / b)
    if kind == Collective.ALL_TO_ALL:
        if ring_a2a:
            # Chunks forwarded along the ring; per-link bytes are
            # (V/n) * sum of hop distances = V*(n-1)/2.
            return (n - 1) * alpha + (volume * (n - 1) / 2.0) / b
        return alpha + (volume * (n - 1) / n) / b
    if kind == Collective.P2P:
        return alpha + volume / b
    raise ValueError(f"unknown collective {kind}")


def time_from_transmitted(
    kind: Collective,
    group_size: int,
    transmitted: float,
    link_bw: float,
    alpha: float,
    mem_bw: float = math.inf,
    ring_a2a: bool = False,
) -> float:
    """Collective time given the bytes a device actually sends."""
    n = group_size
    if n <= 1 or transmitted <= 0:
        return 0.0
    if kind in (Collective.ALL_GATHER, Collective.REDUCE_SCATTER, Collective.ALL_TO_ALL):
        volume = transmitted * n / (n - 1)
    else:
        volume = transmitted
    return collective_time(kind, n, volume, link_bw, alpha, mem_bw, ring_a2a=ring_a2a)


# ---------------------------------------------------------------------------
# Compute model


def layer_flops_forward(model: ModelConfig, strategy: ParallelStrategy, tokens: float) -> Dict[str, float]:
    """Per-device forward FLOPs of one layer for a token block.

    Standard dense matmul counts (2 FLOPs per MAC); attention runs over the
    full gathered context, expert FFNs over top_k routed copies.
    """
    m, s = model, strategy
    qkv = 2.0 * tokens * m.hidden_dim * (m.q_dim + 2 * m.kv_dim) / s.tp
    attention = 4.0 * tokens * m.context_length * m.q_dim / s.tp
    out_proj = 2.0 * tokens * m.q_dim * m.hidden_dim / s.tp
    fan_out = m.top_k_experts if m.is_moe else 1
    ffn = 2.0 * tokens * 3 * m.hidden_dim * m.ffn_dim * fan_out / s.tp
    return {"qkv_proj": qkv, "attention": attention, "out_proj": out_proj, "ffn": ffn}


def compute_time(flops: float, die_perf: float, efficiency: float) -> float:
    """Seconds to execute ``flops`` on one die of ``die_perf`` TFLOPS."""
    if flops <= 0:
        return 0.0
    if die_perf <= 0 or not 0 < efficiency <= 1:
        raise ValueError("die_perf must be > 0 and efficiency in (0, 1]")
    return flops / (die_perf * TFLOP * efficiency)


def memory_footprint(model: ModelConfig, strategy: ParallelStrategy, tech: TechParams) -> float:
    """Bytes per device: weights, gradients, optimizer states, checkpoints."""
    m, s = model, strategy
    dense = (m.params_total - m.params_expert) / (s.tp * s.pp)
    expert = m.params_expert / (s.tp * s.pp * s.ep)
    params_dev = dense + expert
    weights = params_dev * m.bytes_per_element
    grads = params_dev * m.bytes_per_element
    states = params_dev * tech.optimizer_bytes_per_param
    tokens_mb = (m.global_batch / (s.dp * s.num_microbatches)) * m.context_length / s.cp
    layers_per_stage = m.num_layers // s.pp
    inflight = min(s.pp, s.num_microbatches)
    acts = layers_per_stage * tokens_mb * m.hidden_dim * m.bytes_per_element / s.tp * inflight
    return weights + grads + states + acts


# ---------------------------------------------------------------------------
# Communication fabrics


class Bottleneck(str, Enum):
    COMPUTE = "Compute"
    MEMORY = "Memory"
    NOP = "NoP"
    OI = "OI"
    CAPACITY = "Capacity"


@dataclass
class CommFabric:
    """Bandwidth lookup for a cluster style.

    ``intra`` parallelisms ride the scale-up fabric; the rest cross the
    scale-out network.  ``aggregate`` is the number of devices whose
    traffic funnels through one scale-out endpoint (dies per MCM for
    optical clusters, 1 for per-device NICs).
    """

    intra: List[Parallelism]
    intra_bw: Dict[Parallelism, float]  # GB/s for the device-level ring
    inter_bw: Dict[Parallelism, float]  # GB/s at the endpoint level
    inter_bw_by_phase: Dict[Tuple[Parallelism, PhaseTag], float] = field(default_factory=dict)
    aggregate: int = 1
    endpoint_mem_bw: float = math.inf  # GB/s absorbing scale-out traffic
    device_mem_bw: float = math.inf
    ep_shape: RingShape = RingShape.RING

    def bw(self, p: Parallelism, phase: PhaseTag) -> float:
        if (p, phase) in self.inter_bw_by_phase:
            return self.inter_bw_by_phase[(p, phase)]
        return self.inter_bw.get(p, 0.0)


def optical_fabric(
    arch: McmArch,
    logical: LogicalTopology,
    intra: List[Parallelism],
    strategy: ParallelStrategy,
    tech: TechParams,
) -> CommFabric:
    """Fabric of an MCM + optical-circuit cluster."""
    intra_bw = {}
    for p in intra:
        size = strategy.degree(p) if p == Parallelism.TP else rail_degree(strategy, p)
        if size > 1:
            # Mesh bisection bandwidth, shared by the ring members.
            bisection = min(arch.x, arch.y) * arch.nop_link_bw
            intra_bw[p] = bisection / size
    inter_bw = {}
    by_phase = {}
    ep_shape = RingShape.RING
    for p, st in logical.structures.items():
        inter_bw[p] = st.links * tech.optical_link_bw
        if p == Parallelism.EP:
            ep_shape = st.shape
    if logical.reuse_pair:
        for phase, cfg in logical.phase_configs.items():
            for p, links in cfg.items():
                by_phase[(p, phase)] = links * tech.optical_link_bw
    if strategy.dp > 1 and Parallelism.DP not in inter_bw and Parallelism.DP not in intra:
        # DP carved fully into the EP dimension (ep == dp residual): the
        # gradient gather rides the expert-parallel links or mesh.
        if Parallelism.EP in inter_bw:
            links = logical.links(Parallelism.EP)
            inter_bw[Parallelism.DP] = links * tech.optical_link_bw
        elif Parallelism.EP in intra:
            bisection = min(arch.x, arch.y) * arch.nop_link_bw
            intra = intra + [Parallelism.DP]
            intra_bw[Parallelism.DP] = bisection / strategy.dp
    return CommFabric(
        intra=intra,
        intra_bw=intra_bw,
        inter_bw=inter_bw,
        inter_bw_by_phase=by_phase,
        aggregate=arch.dies_per_mcm,
        endpoint_mem_bw=arch.dies_per_mcm * arch.mem_bw_per_die,
        device_mem_bw=arch.mem_bw_per_die,
        ep_shape=ep_shape,
    )


# ---------------------------------------------------------------------------
# Iteration simulation


@dataclass
class DiagnosticLog:
    compute_utilization: float
    mem_bw_utilization: float
    peak_memory_per_die: float  # GB
    comm_exposed: Dict[Parallelism, float]  # seconds per iteration
    bottleneck: Bottleneck
    bottleneck_parallelism: Optional[Parallelism] = None
    reuse_window: float = 0.0  # s, smallest compute gap between CP and EP comm


@dataclass
class SimResult:
    iteration_time: float
    throughput: float  # tokens/s
    phase_breakdown: Dict[str, float]
    logs: DiagnosticLog

    def to_dict(self) -> Dict:
        return {
            "iteration_time": self.iteration_time,
            "throughput": self.throughput,
            "phase_breakdown": dict(self.phase_breakdown),
            "logs": {
                "compute_utilization": self.logs.compute_utilization,
                "mem_bw_utilization": self.logs.mem_bw_utilization,
                "peak_memory_per_die": self.logs.peak_memory_per_die,
                "comm_exposed": {p.value: t for p, t in self.logs.comm_exposed.items()},
                "bottleneck": self.logs.bottleneck.value,
                "bottleneck_parallelism": (
                    self.logs.bottleneck_parallelism.value
                    if self.logs.bottleneck_parallelism
                    else None
                ),
                "reuse_window": self.logs.reuse_window,
            },
        }


def reuse_window(
    model: ModelConfig, strategy: ParallelStrategy, die_perf: float, tech: TechParams
) -> float:
    """Smallest compute gap separating CP and EP communication in a layer.

    Forward direction: attention + out_proj sit between the CP gather and
    the A2A dispatch; qkv_proj sits between a combine and the next gather.
    """
    tokens_mb = (model.global_batch / (strategy.dp * strategy.num_microbatches)) * (
        model.context_length / strategy.cp
    )
    fl = layer_flops_forward(model, strategy, tokens_mb)
    eff = tech.compute_efficiency
    gap_fwd = compute_time(fl["attention"] + fl["out_proj"], die_perf, eff)
    gap_wrap = compute_time(fl["qkv_proj"], die_perf, eff)
    return min(gap_fwd, gap_wrap)


def simulate_iteration(
    model: ModelConfig,
    strategy: ParallelStrategy,
    arch: McmArch,
    fabric: CommFabric,
    tech: TechParams,
    profile: Optional[TrafficProfile] = None,
    overlap_dp: bool = True,
) -> SimResult:
    """Compose the iteration timeline and diagnostics.

    Raises CapacityExceeded when the per-die footprint does not fit the
    attached memory.
    """
    s, m = strategy, model
    footprint = memory_footprint(m, s, tech)
    capacity = arch.mem_cap_per_die * GB
    if footprint > capacity:
        raise CapacityExceeded(
            f"{footprint / GB:.1f} GB per die exceeds {capacity / GB:.1f} GB"
        )
    if profile is None:
        profile = project_traffic(m, s)
    volumes = profile.volumes()
    mb = s.num_microbatches
    alpha = tech.link_latency + tech.launch_overhead
    layers_per_stage = m.num_layers // s.pp

    tokens_mb = (m.global_batch / (s.dp * mb)) * m.context_length / s.cp
    fl = layer_flops_forward(m, s, tokens_mb)
    eff = tech.compute_efficiency
    fwd_layer = sum(compute_time(f, arch.die_perf, eff) for f in fl.values())
    fwd_mb = fwd_layer * layers_per_stage
    bwd_mb = 2.0 * fwd_mb  # backward matmuls cost twice the forward pass

    def comm_event_time(p: Parallelism, entry_kind: Collective, transmitted: float, phase: PhaseTag) -> float:
        """Time for a device to move ``transmitted`` bytes for parallelism p."""
        if transmitted <= 0:
            return 0.0
        # DP's collective always spans the full dp group even when its rail
        # residual is 1 (ep == dp) and it rides the EP links.
        if p in (Parallelism.TP, Parallelism.DP):
            size = s.degree(p)
        else:
            size = rail_degree(s, p)
        if p in fabric.intra:
            bw = fabric.intra_bw.get(p, 0.0)
            if bw <= 0:
                return math.inf
            return time_from_transmitted(
                entry_kind, size, transmitted, bw, alpha, fabric.device_mem_bw
            )
        bw = fabric.bw(p, phase)
        if bw <= 0:
            return math.inf
        agg = transmitted * fabric.aggregate
        ring_a2a = entry_kind == Collective.ALL_TO_ALL and fabric.ep_shape == RingShape.RING
        return time_from_transmitted(
            entry_kind, size, agg, bw, alpha, fabric.endpoint_mem_bw, ring_a2a=ring_a2a
        )

    # Per-microbatch communication, split evenly between fwd and bwd halves.
    comm_totals: Dict[Parallelism, float] = {p: 0.0 for p in PARALLELISM_ORDER}
    for entry in profile.entries:
        if entry.volume_per_device <= 0:
            continue
        p = entry.parallelism
        if p == Parallelism.DP:
            comm_totals[p] += comm_event_time(p, entry.collective, entry.volume_per_device, entry.phase)
        elif p == Parallelism.PP:
            comm_totals[p] += comm_event_time(p, entry.collective, entry.volume_per_device, entry.phase)
        else:
            per_mb = entry.volume_per_device / mb
            comm_totals[p] += mb * comm_event_time(p, entry.collective, per_mb, entry.phase)
    for p, t in comm_totals.items():
        if math.isinf(t):
            raise ValueError(f"no bandwidth available for parallelism {p.value}")

    per_mb_comm = sum(
        comm_totals[p] / mb for p in (Parallelism.TP, Parallelism.CP, Parallelism.EP)
    )
    stage_mb = fwd_mb + bwd_mb + per_mb_comm + comm_totals[Parallelism.PP] / mb
    pipeline_slots = mb + s.pp - 1
    pipeline_time = pipeline_slots * stage_mb

    dp_time = comm_totals[Parallelism.DP]
    bwd_compute_total = bwd_mb * mb
    dp_exposed = max(0.0, dp_time - bwd_compute_total) if overlap_dp else dp_time
    iteration_time = pipeline_time + dp_exposed

    compute_total = (fwd_mb + bwd_mb) * mb
    exposed = {
        Parallelism.TP: comm_totals[Parallelism.TP],
        Parallelism.CP: comm_totals[Parallelism.CP],
        Parallelism.EP: comm_totals[Parallelism.EP],
        Parallelism.PP: comm_totals[Parallelism.PP],
        Parallelism.DP: dp_exposed,
    }

    bubble = (s.pp - 1) * stage_mb
    phase_breakdown = {
        "compute": compute_total,
        "pp_bubble": bubble,
        **{f"comm_{p.value}": exposed[p] for p in PARALLELISM_ORDER},
    }

    # Diagnostics
    comp_util = compute_total / iteration_time if iteration_time > 0 else 0.0
    mem_util = min(1.0, footprint / capacity)
    candidates: List[Tuple[float, Bottleneck, Optional[Parallelism]]] = [
        (compute_total, Bottleneck.COMPUTE, None)
    ]
    for p, t in exposed.items():
        if t <= 0:
            continue
        if p in fabric.intra:
            candidates.append((t, Bottleneck.NOP, p))
        else:
            bw = fabric.bw(p, PhaseTag.ATTENTION if p == Parallelism.CP else PhaseTag.FFN)
            mem_limited = fabric.endpoint_mem_bw / 2.0 < bw
            candidates.append((t, Bottleneck.MEMORY if mem_limited else Bottleneck.OI, p))
    worst = max(candidates, key=lambda c: c[0])
    logs = DiagnosticLog(
        compute_utilization=comp_util,
        mem_bw_utilization=mem_util,
        peak_memory_per_die=footprint / GB,
        comm_exposed=exposed,
        bottleneck=worst[1],
        bottleneck_parallelism=worst[2],
        reuse_window=reuse_window(m, s, arch.die_perf, tech),
    )
    tokens_per_iter = m.global_batch * m.context_length
    return SimResult(
        iteration_time=iteration_time,
        throughput=tokens_per_iter / iteration_time,
        phase_breakdown=phase_breakdown,
        logs=logs,
    )
