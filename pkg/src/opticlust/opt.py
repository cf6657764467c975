"""Nested multi-objective search over MCM architecture, parallel strategy
and network topology, with a throughput/cost Pareto archive.

The inner search samples parallel strategies (seeded random warmup, then a
random-forest surrogate ranks the remaining candidates); the outer search
mutates one MCM variable at a time, driven by the bottleneck reported in
the simulation logs.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arch import (
    CostBreakdown,
    McmArch,
    TechParams,
    cost_model,
    derive_mcm,
    max_optical_links_per_edge,
)
from .errors import (
    CapacityExceeded,
    EdgeBudgetExceeded,
    InsufficientLinks,
    NoFeasibleMapping,
    NoFeasibleStrategy,
    NoIntraFill,
    OpticalPortOverflow,
    OpticlustError,
    SearchExhausted,
    TpExceedsMcm,
)
from .network import (
    LogicalTopology,
    PhysicalTopology,
    allocate_links,
    build_logical,
    derive_physical,
    map_parallelisms,
    rail_degree,
)
from .sim import Bottleneck, SimResult, optical_fabric, reuse_window, simulate_iteration
from .workload import (
    ModelConfig,
    Parallelism,
    ParallelStrategy,
    project_traffic,
    validate_strategy,
)


@dataclass
class DesignPoint:
    arch: McmArch
    strategy: ParallelStrategy
    logical: Optional[LogicalTopology]
    physical: Optional[PhysicalTopology]
    result: SimResult
    cost: CostBreakdown

    @property
    def throughput(self) -> float:
        return self.result.throughput

    @property
    def total_cost(self) -> float:
        return self.cost.total

    def to_record(self) -> Dict:
        rec = {
            "arch": {
                "N": self.arch.N,
                "x": self.arch.x,
                "y": self.arch.y,
                "m": self.arch.m,
                "o": self.arch.o,
                "r": self.arch.r,
                "total_compute": self.arch.total_compute,
                "die_perf": self.arch.die_perf,
                "die_area": self.arch.die_area,
                "nop_link_bw": self.arch.nop_link_bw,
            },
            "strategy": {
                "tp": self.strategy.tp,
                "cp": self.strategy.cp,
                "pp": self.strategy.pp,
                "dp": self.strategy.dp,
                "ep": self.strategy.ep,
                "num_microbatches": self.strategy.num_microbatches,
            },
            "result": self.result.to_dict(),
            "cost": self.cost.to_dict(),
        }
        if self.physical is not None:
            rec["total_ocs"] = self.physical.total_ocs
        return rec


def evaluate_design(
    model: ModelConfig,
    strategy: ParallelStrategy,
    arch: McmArch,
    tech: TechParams,
    use_reuse: bool = True,
    force_reuse: Optional[bool] = None,
) -> DesignPoint:
    """Full pipeline for one (strategy, arch) point on the optical cluster.

    Projects traffic, maps and allocates links (time-multiplexing the CP/EP
    pair when both are inter-MCM and the compute gap exceeds the OCS switch
    latency), derives the fewest-OCS physical topology, and simulates the
    ring and fully-connected EP variants, keeping the faster.
    """
    validate_strategy(model, strategy, arch.device_count)
    profile = project_traffic(model, strategy)
    volumes = profile.volumes()
    intra, inter = map_parallelisms(strategy, arch.dies_per_mcm, volumes)
    inter_vols = {p: volumes[p] for p in inter}

    reuse_pair = None
    both_inter = Parallelism.CP in inter and Parallelism.EP in inter
    if both_inter and inter_vols.get(Parallelism.CP, 0) > 0 and inter_vols.get(Parallelism.EP, 0) > 0:
        if force_reuse is True:
            reuse_pair = (Parallelism.CP, Parallelism.EP)
        elif force_reuse is None and use_reuse:
            window = reuse_window(model, strategy, arch.die_perf, tech)
            if window > tech.ocs_switch_latency:
                reuse_pair = (Parallelism.CP, Parallelism.EP)

    alloc = allocate_links(arch.total_links, inter_vols, reuse_pair)

    variants = [False]
    ep_struct_size = rail_degree(strategy, Parallelism.EP)
    if (
        Parallelism.EP in inter
        and ep_struct_size > 2
        and alloc.links(Parallelism.EP) >= ep_struct_size - 1
    ):
        variants.append(True)

    best: Optional[Tuple[SimResult, LogicalTopology, PhysicalTopology]] = None
    for ep_fc in variants:
        logical = build_logical(inter, strategy, alloc, ep_fully_connected=ep_fc)
        physical = derive_physical(
            logical, strategy, arch.N, arch.total_links, tech.ocs_port_count
        )
        fabric = optical_fabric(arch, logical, intra, strategy, tech)
        result = simulate_iteration(model, strategy, arch, fabric, tech, profile=profile)
        if best is None or result.iteration_time < best[0].iteration_time:
            best = (result, logical, physical)
    result, logical, physical = best
    cost = cost_model(arch, physical.total_ocs, tech)
    return DesignPoint(arch, strategy, logical, physical, result, cost)


# ---------------------------------------------------------------------------
# Strategy enumeration


def _divisors(n: int) -> List[int]:
    out = [d for d in range(1, n + 1) if n % d == 0]
    return out


def valid_strategies(
    model: ModelConfig,
    device_count: int,
    mcm_dies: int,
    default_microbatches: int = 8,
    max_tp: Optional[int] = None,
) -> List[ParallelStrategy]:
    """All strategies that validate and fill the MCM die grid exactly."""
    out = []
    cap_tp = min(mcm_dies, model.num_heads, max_tp or mcm_dies)
    for tp in _divisors(device_count):
        if tp > cap_tp or model.num_heads % tp or mcm_dies % tp:
            continue
        rest = device_count // tp
        for cp in _divisors(rest):
            if model.context_length % cp:
                continue
            rest2 = rest // cp
            for pp in _divisors(rest2):
                if model.num_layers % pp:
                    continue
                dp = rest2 // pp
                if model.global_batch % dp:
                    continue
                eps = [
                    e
                    for e in _divisors(dp)
                    if model.num_experts % e == 0 and (e == 1 or model.is_moe)
                ]
                for ep in eps:
                    mb = max(pp, default_microbatches)
                    if (model.global_batch // dp) % mb:
                        continue
                    s = ParallelStrategy(tp=tp, cp=cp, pp=pp, dp=dp, ep=ep, num_microbatches=mb)
                    # Intra fill: TP alone or with one exact-fit partner.
                    fill = mcm_dies // tp
                    if fill > 1 and not any(
                        rail_degree(s, p) == fill
                        for p in (Parallelism.CP, Parallelism.EP, Parallelism.DP, Parallelism.PP)
                    ):
                        continue
                    out.append(s)
    return out


@dataclass
class EvalRecord:
    strategy: ParallelStrategy
    point: Optional[DesignPoint]  # None when infeasible
    error: Optional[str] = None


@dataclass
class InnerSearchResult:
    best: Optional[DesignPoint]
    evaluations: List[EvalRecord]

    @property
    def feasible(self) -> List[DesignPoint]:
        return [r.point for r in self.evaluations if r.point is not None]


def _strategy_features(s: ParallelStrategy) -> List[float]:
    return [math.log2(s.tp), math.log2(s.cp), math.log2(s.pp), math.log2(s.dp), math.log2(s.ep)]


def inner_search(
    arch: McmArch,
    model: ModelConfig,
    tech: TechParams,
    budget: int,
    seed: int,
    use_reuse: bool = True,
    warmup_fraction: float = 0.3,
    improvement_threshold: float = 0.01,
    window: Optional[int] = None,
    default_microbatches: int = 8,
) -> InnerSearchResult:
    """Sample strategies for one MCM architecture, best-throughput first.

    Seeded random sampling for the warmup fraction of the budget, then a
    random-forest surrogate ranks the remaining candidates by predicted
    throughput.  Stops early when the best result improved by less than
    ``improvement_threshold`` over the trailing window.  Infeasible samples
    consume budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    candidates = valid_strategies(
        model, arch.device_count, arch.dies_per_mcm, default_microbatches
    )
    if not candidates:
        raise NoFeasibleStrategy("no strategy satisfies the divisibility constraints")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(candidates)))
    queue = [candidates[i] for i in order]

    evaluations: List[EvalRecord] = []
    best: Optional[DesignPoint] = None
    best_history: List[float] = []
    win = window if window is not None else max(5, int(0.1 * budget))
    warmup = max(1, int(math.ceil(warmup_fraction * budget)))

    def evaluate(s: ParallelStrategy):
        nonlocal best
        try:
            point = evaluate_design(model, s, arch, tech, use_reuse=use_reuse)
            evaluations.append(EvalRecord(s, point))
            if best is None or point.throughput > best.throughput:
                best = point
        except (OpticlustError, ValueError) as exc:
            evaluations.append(EvalRecord(s, None, error=f"{type(exc).__name__}: {exc}"))
        best_history.append(best.throughput if best else 0.0)

    def should_stop() -> bool:
        if improvement_threshold <= 0 or len(best_history) < win + 1:
            return False
        prev = best_history[-win - 1]
        cur = best_history[-1]
        if prev <= 0:
            return False
        return (cur - prev) / prev < improvement_threshold

    used = 0
    while used < budget and queue and used < warmup:
        evaluate(queue.pop(0))
        used += 1
        if should_stop():
            return InnerSearchResult(best, evaluations)

    while used < budget and queue:
        feats, targets = [], []
        for rec in evaluations:
            if rec.point is not None:
                feats.append(_strategy_features(rec.strategy))
                targets.append(rec.point.throughput)
        if len(targets) >= 3:
            from sklearn.ensemble import RandomForestRegressor

            forest = RandomForestRegressor(n_estimators=30, random_state=seed)
            forest.fit(np.array(feats), np.array(targets))
            preds = forest.predict(np.array([_strategy_features(s) for s in queue]))
            pick = int(np.argmax(preds))
        else:
            pick = 0
        evaluate(queue.pop(pick))
        used += 1
        if should_stop():
            break
    if best is None and not queue:
        # Everything sampled failed; report only if nothing was feasible.
        if not any(r.point for r in evaluations):
            raise NoFeasibleStrategy("every sampled strategy violated constraints")
    return InnerSearchResult(best, evaluations)


# ---------------------------------------------------------------------------
# Outer search


@dataclass(frozen=True)
class ArchBounds:
    n_min: int = 1
    n_max: int = 1 << 20
    m_max: int = 16
    dies_min: int = 1
    dies_max: int = 64


def _factor_pair(dies: int) -> Tuple[int, int]:
    """Most-square (x, y) factor pair, x <= y."""
    best = (1, dies)
    for x in range(1, int(math.isqrt(dies)) + 1):
        if dies % x == 0:
            best = (x, dies // x)
    return best


@dataclass(frozen=True)
class ArchVars:
    N: int
    x: int
    y: int
    m: int
    o: int
    r: float

    def key(self):
        return (self.N, self.x, self.y, self.m, self.o, round(self.r, 9))


def _mutations(v: ArchVars, bounds: ArchBounds, total_compute: float, tech: TechParams) -> List[ArchVars]:
    """Single-variable neighbors in a fixed, deterministic order."""
    out: List[ArchVars] = []
    dies = v.x * v.y
    if v.m + 1 <= bounds.m_max:
        out.append(ArchVars(v.N, v.x, v.y, v.m + 1, v.o, v.r))
    if v.m > 1:
        out.append(ArchVars(v.N, v.x, v.y, v.m - 1, v.o, v.r))
    out.append(ArchVars(v.N, v.x, v.y, v.m, v.o + 1, v.r))
    if v.o > 1:
        out.append(ArchVars(v.N, v.x, v.y, v.m, v.o - 1, v.r))
    if v.N % 2 == 0 and v.N // 2 >= bounds.n_min and dies * 2 <= bounds.dies_max:
        x2, y2 = _factor_pair(dies * 2)
        out.append(ArchVars(v.N // 2, x2, y2, v.m, v.o, v.r))  # grow MCM
    if dies % 2 == 0 and dies // 2 >= bounds.dies_min and v.N * 2 <= bounds.n_max:
        x2, y2 = _factor_pair(dies // 2)
        out.append(ArchVars(v.N * 2, x2, y2, v.m, v.o, v.r))  # shrink MCM
    sq = _factor_pair(dies)
    if sq != (v.x, v.y):
        out.append(ArchVars(v.N, sq[0], sq[1], v.m, v.o, v.r))
    return out


def _rule_mutation(v: ArchVars, logs, bounds: ArchBounds, total_compute: float, tech: TechParams) -> ArchVars:
    """First matching planner rule; mutates exactly one variable."""
    dies = v.x * v.y
    o_cap = max_optical_links_per_edge(total_compute, v.N, v.x, v.y, v.r, tech)

    def grow() -> ArchVars:
        if v.N % 2 == 0 and dies * 2 <= bounds.dies_max:
            x2, y2 = _factor_pair(dies * 2)
            return ArchVars(v.N // 2, x2, y2, v.m, v.o, v.r)
        return v

    def shrink() -> ArchVars:
        if dies % 2 == 0:
            x2, y2 = _factor_pair(dies // 2)
            return ArchVars(v.N * 2, x2, y2, v.m, v.o, v.r)
        return v

    b = logs.bottleneck
    if b == Bottleneck.CAPACITY or b == Bottleneck.MEMORY:
        return ArchVars(v.N, v.x, v.y, min(v.m + 1, bounds.m_max), v.o, v.r)
    if b == Bottleneck.OI:
        if v.o < o_cap:
            return ArchVars(v.N, v.x, v.y, v.m, v.o + 1, v.r)
        return grow()
    if b == Bottleneck.NOP:
        sq = _factor_pair(dies)
        if sq != (v.x, v.y):
            return ArchVars(v.N, sq[0], sq[1], v.m, v.o, v.r)
        return shrink()
    # Compute-bound
    if logs.compute_utilization > 0.9 and v.o < o_cap:
        return grow()
    if logs.compute_utilization < 0.4:
        if v.m > 1:
            return ArchVars(v.N, v.x, v.y, v.m - 1, v.o, v.r)
        if v.o > 1:
            return ArchVars(v.N, v.x, v.y, v.m, v.o - 1, v.r)
    return shrink()


def arch_feasible(v: ArchVars, total_compute: float, tech: TechParams) -> Optional[McmArch]:
    try:
        return derive_mcm(total_compute, v.N, v.x, v.y, v.m, v.o, v.r, tech)
    except (EdgeBudgetExceeded, OpticalPortOverflow, ValueError):
        return None


def outer_step(
    history: Sequence[ArchVars],
    last_logs,
    total_compute: float,
    tech: TechParams,
    bounds: ArchBounds = ArchBounds(),
) -> ArchVars:
    """Next architecture sample: rule-table mutation, skipping visited points.

    Falls back to a breadth-first walk over single-variable mutations for
    the nearest unvisited feasible neighbor.
    """
    if not history:
        raise ValueError("history must be nonempty")
    current = history[-1]
    visited = {v.key() for v in history}
    proposal = _rule_mutation(current, last_logs, bounds, total_compute, tech)
    frontier = [proposal, current]
    seen = set()
    while frontier:
        nxt: List[ArchVars] = []
        for v in frontier:
            if v.key() in seen:
                continue
            seen.add(v.key())
            if v.key() not in visited and arch_feasible(v, total_compute, tech) is not None:
                return v
            nxt.extend(_mutations(v, bounds, total_compute, tech))
        frontier = nxt
        if len(seen) > 10000:
            break
    raise SearchExhausted("no unvisited feasible architecture neighbor")


# ---------------------------------------------------------------------------
# Pareto archive


@dataclass
class ParetoArchive:
    points: List[DesignPoint] = field(default_factory=list)
    all_evaluated: List[DesignPoint] = field(default_factory=list)

    def dominated(self, a: DesignPoint, b: DesignPoint) -> bool:
        """True when b dominates a."""
        return (
            b.throughput >= a.throughput
            and b.total_cost <= a.total_cost
            and (b.throughput > a.throughput or b.total_cost < a.total_cost)
        )


def pareto_update(archive: ParetoArchive, point: DesignPoint) -> ParetoArchive:
    """Insert a point, keeping ``points`` the nondominated subset."""
    archive.all_evaluated.append(point)
    if any(archive.dominated(point, q) for q in archive.points):
        return archive
    archive.points = [q for q in archive.points if not archive.dominated(q, point)]
    archive.points.append(point)
    return archive


@dataclass
class OptimizeSettings:
    total_compute: float
    initial: ArchVars
    inner_budget: int = 50
    outer_budget: int = 8
    total_budget: int = 400
    seed: int = 0
    use_reuse: bool = True
    improvement_threshold: float = 0.01
    window: Optional[int] = None
    default_microbatches: int = 8
    bounds: ArchBounds = field(default_factory=ArchBounds)


def optimize(model: ModelConfig, tech: TechParams, settings: OptimizeSettings) -> ParetoArchive:
    """Nested outer/inner search; archives every feasible evaluation."""
    archive = ParetoArchive()
    history: List[ArchVars] = []
    current = settings.initial
    sims_used = 0
    for outer_i in range(settings.outer_budget):
        remaining = settings.total_budget - sims_used
        if remaining <= 0:
            break
        arch = arch_feasible(current, settings.total_compute, tech)
        if arch is None:
            # Initial point infeasible: walk to the nearest feasible one.
            history.append(current)
            try:
                current = outer_step(
                    history,
                    _NEUTRAL_LOGS,
                    settings.total_compute,
                    tech,
                    settings.bounds,
                )
            except SearchExhausted:
                break
            continue
        history.append(current)
        try:
            inner = inner_search(
                arch,
                model,
                tech,
                budget=min(settings.inner_budget, remaining),
                seed=settings.seed + outer_i,
                use_reuse=settings.use_reuse,
                improvement_threshold=settings.improvement_threshold,
                window=settings.window,
                default_microbatches=settings.default_microbatches,
            )
        except NoFeasibleStrategy:
            inner = None
        if inner is not None:
            sims_used += len(inner.evaluations)
            for point in inner.feasible:
                pareto_update(archive, point)
        if inner is None or inner.best is None:
            logs = _NEUTRAL_LOGS
        else:
            logs = inner.best.result.logs
        try:
            current = outer_step(
                history, logs, settings.total_compute, tech, settings.bounds
            )
        except SearchExhausted:
            break
    return archive


class _NeutralLogs:
    bottleneck = Bottleneck.COMPUTE
    compute_utilization = 0.5


_NEUTRAL_LOGS = _NeutralLogs()
