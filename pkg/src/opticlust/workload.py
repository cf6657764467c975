"""LLM workload description and deterministic per-iteration traffic projection.

Volumes are closed-form per-device byte counts for the collectives each
parallelism performs in one training iteration.  All formulas are exact
integer/float arithmetic on the model shape, so two calls with the same
inputs produce bit-identical profiles.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import (
    DegreeProductMismatch,
    IndivisibleDimension,
    PlacementIncomplete,
)


class Parallelism(str, Enum):
    TP = "TP"
    CP = "CP"
    EP = "EP"
    DP = "DP"
    PP = "PP"


# Fixed order used for deterministic tie-breaks everywhere.
PARALLELISM_ORDER = [
    Parallelism.TP,
    Parallelism.CP,
    Parallelism.EP,
    Parallelism.DP,
    Parallelism.PP,
]


class Collective(str, Enum):
    ALL_GATHER = "AllGather"
    REDUCE_SCATTER = "ReduceScatter"
    ALL_TO_ALL = "AllToAll"
    P2P = "P2P"


class PhaseTag(str, Enum):
    ATTENTION = "AttentionPhase"
    FFN = "FfnPhase"
    BACKWARD = "BackwardPhase"
    STAGE_BOUNDARY = "StageBoundary"


@dataclass(frozen=True)
class ModelConfig:
    """Transformer / MoE workload shape.

    ``num_kv_heads`` covers grouped-query attention; it defaults to
    ``num_heads`` (classic multi-head attention).
    """

    num_layers: int
    hidden_dim: int
    num_heads: int
    head_dim: int
    ffn_dim: int
    num_experts: int = 1
    top_k_experts: int = 1
    vocab_size: int = 32000
    context_length: int = 4096
    global_batch: int = 64
    bytes_per_element: int = 2
    num_kv_heads: Optional[int] = None

    def __post_init__(self):
        for name in (
            "num_layers",
            "hidden_dim",
            "num_heads",
            "head_dim",
            "ffn_dim",
            "num_experts",
            "top_k_experts",
            "vocab_size",
            "context_length",
            "global_batch",
            "bytes_per_element",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.top_k_experts > self.num_experts:
            raise ValueError("top_k_experts must be <= num_experts")
        if self.num_kv_heads is None:
            object.__setattr__(self, "num_kv_heads", self.num_heads)

    @property
    def q_dim(self) -> int:
        return self.num_heads * self.head_dim

    @property
    def kv_dim(self) -> int:
        return self.num_kv_heads * self.head_dim

    @property
    def is_moe(self) -> bool:
        return self.num_experts > 1

    @property
    def params_per_layer(self) -> int:
        """Parameters of one transformer layer (attention + FFN/MoE)."""
        attn = self.hidden_dim * (self.q_dim + 2 * self.kv_dim)  # q, k, v
        attn += self.q_dim * self.hidden_dim  # output projection
        # Gated FFN: gate, up, down matrices per expert.
        ffn = 3 * self.hidden_dim * self.ffn_dim * self.num_experts
        router = self.hidden_dim * self.num_experts if self.is_moe else 0
        norms = 2 * self.hidden_dim
        return attn + ffn + router + norms

    @property
    def params_expert(self) -> int:
        """Expert (FFN) parameters across all layers."""
        return 3 * self.hidden_dim * self.ffn_dim * self.num_experts * self.num_layers

    @property
    def params_total(self) -> int:
        embed = 2 * self.vocab_size * self.hidden_dim  # untied in/out embeddings
        return embed + self.num_layers * self.params_per_layer


@dataclass(frozen=True)
class ParallelStrategy:
    tp: int = 1
    cp: int = 1
    pp: int = 1
    dp: int = 1
    ep: int = 1
    num_microbatches: int = 1

    def __post_init__(self):
        for name in ("tp", "cp", "pp", "dp", "ep", "num_microbatches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def device_count(self) -> int:
        return self.tp * self.cp * self.pp * self.dp

    def degree(self, p: Parallelism) -> int:
        return {
            Parallelism.TP: self.tp,
            Parallelism.CP: self.cp,
            Parallelism.EP: self.ep,
            Parallelism.DP: self.dp,
            Parallelism.PP: self.pp,
        }[p]


def validate_strategy(
    model: ModelConfig, strategy: ParallelStrategy, device_count: int
) -> ParallelStrategy:
    """Check group structure and divisibility; returns the strategy unchanged."""
    if device_count < 1:
        raise ValueError("device_count must be >= 1")
    if strategy.device_count != device_count:
        raise DegreeProductMismatch(
            f"tp*cp*pp*dp = {strategy.device_count} != device_count {device_count}"
        )
    if strategy.dp % strategy.ep != 0:
        raise IndivisibleDimension("ep", f"ep={strategy.ep} must divide dp={strategy.dp}")
    if model.num_heads % strategy.tp != 0:
        raise IndivisibleDimension(
            "num_heads", f"num_heads={model.num_heads} not divisible by tp={strategy.tp}"
        )
    if model.num_experts % strategy.ep != 0:
        raise IndivisibleDimension(
            "num_experts",
            f"num_experts={model.num_experts} not divisible by ep={strategy.ep}",
        )
    if model.num_layers % strategy.pp != 0:
        raise IndivisibleDimension(
            "num_layers", f"num_layers={model.num_layers} not divisible by pp={strategy.pp}"
        )
    if strategy.pp > 1 and strategy.num_microbatches < strategy.pp:
        raise IndivisibleDimension(
            "num_microbatches",
            f"num_microbatches={strategy.num_microbatches} must be >= pp={strategy.pp}",
        )
    if model.context_length % strategy.cp != 0:
        raise IndivisibleDimension(
            "context_length",
            f"context_length={model.context_length} not divisible by cp={strategy.cp}",
        )
    if model.global_batch % strategy.dp != 0:
        raise IndivisibleDimension(
            "global_batch",
            f"global_batch={model.global_batch} not divisible by dp={strategy.dp}",
        )
    return strategy


@dataclass(frozen=True)
class TrafficEntry:
    parallelism: Parallelism
    collective: Collective
    group_size: int
    volume_per_device: float  # bytes transmitted per device per iteration
    phase: PhaseTag


@dataclass
class TrafficProfile:
    entries: List[TrafficEntry]
    phase_timeline: List[PhaseTag]

    def volume(self, p: Parallelism) -> float:
        return sum(e.volume_per_device for e in self.entries if e.parallelism == p)

    def volumes(self) -> Dict[Parallelism, float]:
        return {p: self.volume(p) for p in PARALLELISM_ORDER}


def activation_bytes_per_device(model: ModelConfig, strategy: ParallelStrategy) -> float:
    """Per-device activation bytes of one layer's token block."""
    batch_per_device = model.global_batch / strategy.dp
    tokens = batch_per_device * model.context_length / strategy.cp
    return tokens * model.hidden_dim * model.bytes_per_element


def project_traffic(model: ModelConfig, strategy: ParallelStrategy) -> TrafficProfile:
    """Project per-parallelism per-device traffic volume for one iteration.

    Volume constants (per transformer layer unless noted):
      TP  4*(tp-1)/tp * A          two AG + two RS spanning fwd+bwd
      CP  2*(cp-1)/cp * KV_local   ring-attention KV gather, fwd + bwd recompute
      EP  2 * top_k/ep * (ep-1)/ep * A   dispatch + combine, remote share only
      DP  (dp-1)/dp * shard bytes  gradient all-gather, once per iteration
      PP  2*mb*act_mb*(pp-1)/pp    stage-boundary sends, fwd + bwd
    where A is the per-device activation block of one layer.  Per-layer
    volumes accumulate over the ``num_layers/pp`` layers a device hosts.
    """
    s, mdl = strategy, model
    hosted_layers = mdl.num_layers // s.pp
    a_bytes = activation_bytes_per_device(mdl, s)
    kv_local = (
        (mdl.global_batch / s.dp)
        * (mdl.context_length / s.cp)
        * 2
        * mdl.kv_dim
        * mdl.bytes_per_element
    )
    entries: List[TrafficEntry] = []

    tp_layer = 4.0 * (s.tp - 1) / s.tp * a_bytes if s.tp > 1 else 0.0
    tp_total = tp_layer * hosted_layers
    entries.append(
        TrafficEntry(Parallelism.TP, Collective.ALL_GATHER, s.tp, tp_total / 2, PhaseTag.ATTENTION)
    )
    entries.append(
        TrafficEntry(Parallelism.TP, Collective.REDUCE_SCATTER, s.tp, tp_total / 2, PhaseTag.FFN)
    )

    cp_layer = 2.0 * (s.cp - 1) / s.cp * kv_local if s.cp > 1 else 0.0
    entries.append(
        TrafficEntry(
            Parallelism.CP,
            Collective.ALL_GATHER,
            s.cp,
            cp_layer * hosted_layers,
            PhaseTag.ATTENTION,
        )
    )

    if mdl.is_moe and s.ep > 1:
        ep_layer = 2.0 * (mdl.top_k_experts / s.ep) * ((s.ep - 1) / s.ep) * a_bytes
    else:
        ep_layer = 0.0
    entries.append(
        TrafficEntry(
            Parallelism.EP,
            Collective.ALL_TO_ALL,
            s.ep,
            ep_layer * hosted_layers,
            PhaseTag.FFN,
        )
    )

    grad_shard = mdl.params_total / (s.tp * s.pp) * mdl.bytes_per_element
    dp_total = (s.dp - 1) / s.dp * grad_shard if s.dp > 1 else 0.0
    entries.append(
        TrafficEntry(Parallelism.DP, Collective.ALL_GATHER, s.dp, dp_total, PhaseTag.BACKWARD)
    )

    if s.pp > 1:
        act_mb = a_bytes / s.num_microbatches
        pp_total = 2.0 * s.num_microbatches * act_mb * (s.pp - 1) / s.pp
    else:
        pp_total = 0.0
    entries.append(
        TrafficEntry(Parallelism.PP, Collective.P2P, s.pp, pp_total, PhaseTag.STAGE_BOUNDARY)
    )

    timeline = [PhaseTag.ATTENTION, PhaseTag.FFN] * mdl.num_layers
    return TrafficProfile(entries=entries, phase_timeline=timeline)


class PhaseKind(str, Enum):
    COMPUTE = "compute"
    COMM = "comm"


@dataclass(frozen=True)
class Phase:
    name: str
    kind: PhaseKind
    tag: PhaseTag
    parallelism: Optional[Parallelism] = None  # comm phases only


def phase_schedule(model: ModelConfig, strategy: ParallelStrategy) -> List[Phase]:
    """Ordered forward compute/communication phases plus stage-boundary P2Ps.

    Per layer, CP and EP communication are always separated by at least one
    compute phase: attention/out_proj sit between CP-AG and A2A-dispatch, and
    the next layer's qkv_proj sits between A2A-combine and the next CP-AG.
    """
    s, mdl = strategy, model
    phases: List[Phase] = []
    for _ in range(mdl.num_layers // s.pp):  # layers on one stage
        phases.append(Phase("qkv_proj", PhaseKind.COMPUTE, PhaseTag.ATTENTION))
        if s.tp > 1:
            phases.append(
                Phase("tp_ag", PhaseKind.COMM, PhaseTag.ATTENTION, Parallelism.TP)
            )
        if s.cp > 1:
            phases.append(
                Phase("cp_ag", PhaseKind.COMM, PhaseTag.ATTENTION, Parallelism.CP)
            )
        phases.append(Phase("attention", PhaseKind.COMPUTE, PhaseTag.ATTENTION))
        phases.append(Phase("out_proj", PhaseKind.COMPUTE, PhaseTag.ATTENTION))
        if mdl.is_moe and s.ep > 1:
            phases.append(
                Phase("ep_a2a_dispatch", PhaseKind.COMM, PhaseTag.FFN, Parallelism.EP)
            )
        phases.append(Phase("ffn", PhaseKind.COMPUTE, PhaseTag.FFN))
        if mdl.is_moe and s.ep > 1:
            phases.append(
                Phase("ep_a2a_combine", PhaseKind.COMM, PhaseTag.FFN, Parallelism.EP)
            )
        if s.tp > 1:
            phases.append(Phase("tp_rs", PhaseKind.COMM, PhaseTag.FFN, Parallelism.TP))
    if s.pp > 1:
        # 1F1B: every non-edge boundary crossed once forward and once backward
        # per microbatch; (stages-1)*microbatches*2 P2P events in total.
        for _ in range((s.pp - 1) * s.num_microbatches):
            phases.append(
                Phase("pp_send_fwd", PhaseKind.COMM, PhaseTag.STAGE_BOUNDARY, Parallelism.PP)
            )
            phases.append(
                Phase("pp_send_bwd", PhaseKind.COMM, PhaseTag.STAGE_BOUNDARY, Parallelism.PP)
            )
    if s.dp > 1:
        phases.append(Phase("dp_grad_ag", PhaseKind.COMM, PhaseTag.BACKWARD, Parallelism.DP))
    return phases


@dataclass
class Placement:
    """Per-parallelism group structure over a flat device index space.

    ``groups[p]`` lists the device-id tuples of every group of parallelism
    ``p``; each tuple is in ring order.
    """

    device_count: int
    groups: Dict[Parallelism, List[Tuple[int, ...]]]

    def validate(self):
        for p, groups in self.groups.items():
            seen = set()
            for g in groups:
                seen.update(g)
            if seen != set(range(self.device_count)):
                raise PlacementIncomplete(
                    f"parallelism {p.value} does not cover all devices"
                )


def default_placement(strategy: ParallelStrategy) -> Placement:
    """Canonical device layout: tp fastest, then cp, ep, pp, dp-residual."""
    s = strategy
    dpr = s.dp // s.ep  # data-parallel residual outside the EP carve-out
    shape = (dpr, s.pp, s.ep, s.cp, s.tp)
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    groups: Dict[Parallelism, List[Tuple[int, ...]]] = {p: [] for p in PARALLELISM_ORDER}
    for d in range(dpr):
        for q in range(s.pp):
            for e in range(s.ep):
                for c in range(s.cp):
                    groups[Parallelism.TP].append(tuple(idx[d, q, e, c, :]))
    for d in range(dpr):
        for q in range(s.pp):
            for e in range(s.ep):
                for t in range(s.tp):
                    groups[Parallelism.CP].append(tuple(idx[d, q, e, :, t]))
    for d in range(dpr):
        for q in range(s.pp):
            for c in range(s.cp):
                for t in range(s.tp):
                    groups[Parallelism.EP].append(tuple(idx[d, q, :, c, t]))
    for d in range(dpr):
        for e in range(s.ep):
            for c in range(s.cp):
                for t in range(s.tp):
                    groups[Parallelism.PP].append(tuple(idx[d, :, e, c, t]))
    for q in range(s.pp):
        for c in range(s.cp):
            for t in range(s.tp):
                # DP spans the ep and residual axes together (ep | dp).
                for_e = [tuple(idx[d, q, e, c, t] for d in range(dpr) for e in range(s.ep))]
                groups[Parallelism.DP].extend(for_e)
    return Placement(device_count=s.device_count, groups=groups)


def traffic_heatmap(profile: TrafficProfile, placement: Placement) -> np.ndarray:
    """Source x destination byte matrix under ring / uniform-A2A routing.

    Ring collectives send only to the ring successor; A2A spreads a device's
    volume uniformly over its group peers; P2P splits between the pipeline
    successor (forward) and predecessor (backward).
    """
    placement.validate()
    n = placement.device_count
    mat = np.zeros((n, n))
    for entry in profile.entries:
        if entry.volume_per_device <= 0 or entry.group_size <= 1:
            continue
        for group in placement.groups[entry.parallelism]:
            k = len(group)
            if k <= 1:
                continue
            if entry.collective in (Collective.ALL_GATHER, Collective.REDUCE_SCATTER):
                for i, dev in enumerate(group):
                    mat[dev, group[(i + 1) % k]] += entry.volume_per_device
            elif entry.collective == Collective.ALL_TO_ALL:
                for dev in group:
                    for peer in group:
                        if peer != dev:
                            mat[dev, peer] += entry.volume_per_device / (k - 1)
            elif entry.collective == Collective.P2P:
                # Each device's projected volume goes to its actual pipeline
                # neighbors; edge stages have only one.
                for i, dev in enumerate(group):
                    if i == 0:
                        mat[dev, group[1]] += entry.volume_per_device
                    elif i == k - 1:
                        mat[dev, group[k - 2]] += entry.volume_per_device
                    else:
                        mat[dev, group[i + 1]] += entry.volume_per_device / 2
                        mat[dev, group[i - 1]] += entry.volume_per_device / 2
    return mat
