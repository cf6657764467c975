"""Analytical simulator and multi-objective optimizer for LLM-training
clusters built from multi-chiplet modules and optical-circuit-switched
rail networks."""

from .arch import CostBreakdown, McmArch, TechParams, cost_model, derive_mcm, edge_budget_check
from .config import ExperimentConfig, parse_config
from .network import (
    LinkAllocation,
    LogicalTopology,
    PhysicalTopology,
    RailDimension,
    allocate_links,
    build_logical,
    derive_physical,
    map_parallelisms,
    validate_topology,
)
from .opt import (
    ArchVars,
    DesignPoint,
    OptimizeSettings,
    ParetoArchive,
    evaluate_design,
    inner_search,
    optimize,
    outer_step,
    pareto_update,
)
from .sim import (
    DiagnosticLog,
    SimResult,
    collective_time,
    compute_time,
    memory_footprint,
    simulate_iteration,
)
from .workload import (
    Collective,
    ModelConfig,
    Parallelism,
    ParallelStrategy,
    PhaseTag,
    TrafficEntry,
    TrafficProfile,
    default_placement,
    phase_schedule,
    project_traffic,
    traffic_heatmap,
    validate_strategy,
)

__version__ = "0.1.0"
