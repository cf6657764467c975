"""MCM design-point derivation and manufacturing/packaging/network cost.

One design point is a grid of ``x*y`` logic dies per package, ``m`` memory
dies per logic die, and ``o`` optical links per peripheral die edge.  Total
cluster compute ``C`` is the input constant; die size follows from how many
dies it is split across.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

from .errors import EdgeBudgetExceeded, OpticalPortOverflow

# 300 mm wafer, ignoring edge loss.
WAFER_AREA_MM2 = math.pi * 150.0**2


@dataclass(frozen=True)
class TechParams:
    """Technology constants; defaults follow published device figures."""

    d2d_bw_density: float = 658.0  # GB/s per mm of die edge
    d2d_energy: float = 0.29  # pJ/bit
    cpo_bw_density: float = 128.0  # GB/s per mm of package edge
    optical_link_bw: float = 400.0  # GB/s per link
    hbm_bw_per_die: float = 550.0  # GB/s
    hbm_capacity_per_die: float = 16.0  # GB
    hbm_edge_width: float = 6.0  # mm of logic-die edge per memory die
    ocs_port_count: int = 128
    ocs_cost_per_port: float = 300.0  # $
    wafer_cost: float = 16000.0  # $
    defect_density: float = 0.001  # defects per mm^2
    yield_alpha: float = 3.0
    package_cost_per_mm2: float = 0.2  # $
    hbm_cost_per_die: float = 250.0  # $
    cpo_cost_per_port: float = 200.0  # $ (fiber cost folded in)
    ocs_switch_latency: float = 100e-6  # s
    link_latency: float = 1e-6  # s
    launch_overhead: float = 5e-6  # s, software per-step overhead
    compute_density: float = 989.0 / 814.0  # TFLOPS per mm^2 (H100-class anchor)
    compute_efficiency: float = 0.5  # achieved fraction of peak FLOPs
    min_d2d_edge: float = 1.0  # mm that must remain per facing edge
    optimizer_bytes_per_param: int = 12  # fp32 moments + master copy

    def __post_init__(self):
        for name in (
            "d2d_bw_density",
            "cpo_bw_density",
            "optical_link_bw",
            "hbm_bw_per_die",
            "hbm_capacity_per_die",
            "hbm_edge_width",
            "ocs_port_count",
            "wafer_cost",
            "yield_alpha",
            "package_cost_per_mm2",
            "compute_density",
            "compute_efficiency",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class McmArch:
    """One MCM design point with derived geometry and bandwidths."""

    N: int  # MCM count in the cluster
    x: int
    y: int
    m: int  # memory dies per logic die
    o: int  # optical links per peripheral logic-die edge
    r: float  # fraction of outer perimeter devoted to CPO
    total_compute: float  # C, TFLOPS for the whole cluster
    # derived
    die_perf: float = 0.0  # TFLOPS
    die_area: float = 0.0  # mm^2
    die_edge: float = 0.0  # mm
    total_links: int = 0  # L = 2*(x+y)*o
    nop_link_bw: float = 0.0  # B_p, GB/s per mesh link
    mem_bw_per_die: float = 0.0  # GB/s
    mem_cap_per_die: float = 0.0  # GB

    @property
    def dies_per_mcm(self) -> int:
        return self.x * self.y

    @property
    def device_count(self) -> int:
        return self.N * self.x * self.y

    def key(self):
        return (self.N, self.x, self.y, self.m, self.o, round(self.r, 9))


@dataclass
class EdgeBudgetReport:
    ok: bool
    die_edge: float  # mm
    cpo_len_per_outer_edge: float  # mm, peripheral dies
    memory_len: float  # mm claimed by memory dies per die
    worst_facing_edge: float  # mm left for D2D on the tightest facing edge
    detail: str = ""


def _edge_budget(x: int, y: int, m: int, r: float, die_edge: float, tech: TechParams):
    """Apply the edge layout rule and return (report, nop_link_bw).

    Memory dies claim outer edges first; overflow displaces D2D on facing
    edges; CPO claims fraction ``r`` of every outer edge.  The mesh link
    bandwidth is set by the shortest remaining facing edge over all dies so
    links stay symmetric.
    """
    e = die_edge
    mem_need = m * tech.hbm_edge_width
    worst_remaining = e
    worst_detail = ""
    # Die classes by number of outer (package-boundary) sides.
    classes = sorted(
        {
            (i == 0) + (i == x - 1) + (j == 0) + (j == y - 1)
            for i in range(x)
            for j in range(y)
        }
    )
    for outer_sides in classes:
        facing_sides = 4 - outer_sides
        outer_capacity = outer_sides * e * (1.0 - r)
        overflow = max(0.0, mem_need - outer_capacity)
        if facing_sides == 0:
            if overflow > 0:
                return (
                    EdgeBudgetReport(
                        False, e, r * e, mem_need, 0.0, "memory exceeds single-die perimeter"
                    ),
                    0.0,
                )
            continue
        remaining = e - overflow / facing_sides
        if remaining < worst_remaining:
            worst_remaining = remaining
            worst_detail = f"die with {outer_sides} outer sides"
    ok = worst_remaining >= tech.min_d2d_edge
    report = EdgeBudgetReport(
        ok=ok,
        die_edge=e,
        cpo_len_per_outer_edge=r * e,
        memory_len=mem_need,
        worst_facing_edge=worst_remaining,
        detail=worst_detail if not ok else "",
    )
    bw = tech.d2d_bw_density * max(worst_remaining, 0.0)
    return report, bw


def derive_mcm(
    total_compute: float,
    N: int,
    x: int,
    y: int,
    m: int,
    o: int,
    r: float,
    tech: TechParams,
) -> McmArch:
    """Fill the derived fields of an MCM design point.

    Raises EdgeBudgetExceeded or OpticalPortOverflow when the geometry does
    not fit.
    """
    if min(N, x, y, m, o) < 1:
        raise ValueError("N, x, y, m, o must all be >= 1")
    if not 0.0 < r <= 1.0:
        raise ValueError("r must be in (0, 1]")
    if total_compute <= 0:
        raise ValueError("total_compute must be positive")
    die_perf = total_compute / (N * x * y)
    die_area = die_perf / tech.compute_density
    die_edge = math.sqrt(die_area)
    o_max = math.floor(r * die_edge * tech.cpo_bw_density / tech.optical_link_bw)
    if o > o_max:
        raise OpticalPortOverflow(
            f"o={o} exceeds CPO edge budget o_max={o_max} "
            f"(edge {die_edge:.2f} mm, r={r})"
        )
    report, nop_bw = _edge_budget(x, y, m, r, die_edge, tech)
    if not report.ok:
        raise EdgeBudgetExceeded(
            f"edge budget violated: {report.detail or 'facing edge below minimum'} "
            f"(worst facing edge {report.worst_facing_edge:.2f} mm, "
            f"min {tech.min_d2d_edge} mm)"
        )
    return McmArch(
        N=N,
        x=x,
        y=y,
        m=m,
        o=o,
        r=r,
        total_compute=total_compute,
        die_perf=die_perf,
        die_area=die_area,
        die_edge=die_edge,
        total_links=2 * (x + y) * o,
        nop_link_bw=nop_bw,
        mem_bw_per_die=m * tech.hbm_bw_per_die,
        mem_cap_per_die=m * tech.hbm_capacity_per_die,
    )


def max_optical_links_per_edge(total_compute: float, N: int, x: int, y: int, r: float, tech: TechParams) -> int:
    die_perf = total_compute / (N * x * y)
    die_edge = math.sqrt(die_perf / tech.compute_density)
    return math.floor(r * die_edge * tech.cpo_bw_density / tech.optical_link_bw)


def edge_budget_check(arch: McmArch, tech: TechParams) -> EdgeBudgetReport:
    report, _ = _edge_budget(arch.x, arch.y, arch.m, arch.r, arch.die_edge, tech)
    return report


def die_yield(die_area: float, tech: TechParams) -> float:
    """Negative-binomial yield model."""
    return (1.0 + die_area * tech.defect_density / tech.yield_alpha) ** (-tech.yield_alpha)


@dataclass(frozen=True)
class CostBreakdown:
    logic_die_cost: float
    memory_cost: float
    package_cost: float
    cpo_cost: float
    ocs_cost: float
    link_cost: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.logic_die_cost
            + self.memory_cost
            + self.package_cost
            + self.cpo_cost
            + self.ocs_cost
            + self.link_cost
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "logic_die_cost": self.logic_die_cost,
            "memory_cost": self.memory_cost,
            "package_cost": self.package_cost,
            "cpo_cost": self.cpo_cost,
            "ocs_cost": self.ocs_cost,
            "link_cost": self.link_cost,
            "total": self.total,
        }


def cost_model(arch: McmArch, total_ocs: int, tech: TechParams) -> CostBreakdown:
    """Cluster cost: dies (yielded wafer share), memory, package, CPO, OCS.

    ``total_ocs`` is the OCS count S of the physical topology (0 for
    electrically switched baselines).
    """
    n_dies = arch.N * arch.dies_per_mcm
    wafer_share = tech.wafer_cost * arch.die_area / WAFER_AREA_MM2
    logic = n_dies * wafer_share / die_yield(arch.die_area, tech)
    memory = n_dies * arch.m * tech.hbm_cost_per_die
    # Package area: logic grid plus memory die footprints, 10% assembly margin.
    hbm_area = tech.hbm_edge_width**2
    pkg_area_per_mcm = (arch.dies_per_mcm * arch.die_area + arch.dies_per_mcm * arch.m * hbm_area) * 1.1
    package = arch.N * pkg_area_per_mcm * tech.package_cost_per_mm2
    cpo = arch.N * arch.total_links * tech.cpo_cost_per_port
    ocs = total_ocs * tech.ocs_port_count * tech.ocs_cost_per_port
    return CostBreakdown(
        logic_die_cost=logic,
        memory_cost=memory,
        package_cost=package,
        cpo_cost=cpo,
        ocs_cost=ocs,
        link_cost=0.0,
    )
