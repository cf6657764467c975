"""Walk through the nested search: inner strategy search on a fixed module,
outer architecture mutations driven by the diagnosed bottleneck, and the
resulting throughput/cost Pareto front. Also compares the optical design
against the electrical baselines.

Run with:  python3 demos/pareto_exploration.py
"""

from opticlust import (
    ArchVars,
    ModelConfig,
    OptimizeSettings,
    TechParams,
    derive_mcm,
    inner_search,
    optimize,
)
from opticlust.baselines import PRESETS, search_preset
from opticlust.opt import ArchBounds

tech = TechParams()
model = ModelConfig(
    num_layers=32, hidden_dim=2048, num_heads=16, head_dim=128,
    num_kv_heads=4, ffn_dim=1024, num_experts=64, top_k_experts=4,
    vocab_size=65536, context_length=4096, global_batch=512,
    bytes_per_element=2,
)
total_compute = 256 * 989.0  # a 256-die H100-class budget

# 1. Inner search: fix one module design, search the parallelism space
# with a seeded warmup plus a random-forest surrogate.
arch = derive_mcm(total_compute, N=32, x=2, y=4, m=6, o=3, r=0.6, tech=tech)
inner = inner_search(arch, model, tech, budget=16, seed=0)
best = inner.best
print(f"inner search on fixed module: {len(inner.evaluations)} evaluations, "
      f"{len(inner.feasible)} feasible")
s = best.strategy
print(f"  best strategy tp={s.tp} cp={s.cp} pp={s.pp} dp={s.dp} ep={s.ep}: "
      f"{best.throughput:.3e} tok/s, ${best.total_cost / 1e6:.2f}M, "
      f"bottleneck {best.result.logs.bottleneck.value}")
print()

# 2. Full nested optimization: bottleneck-guided mutations walk the module
# space; every feasible evaluation feeds one shared Pareto archive.
settings = OptimizeSettings(
    total_compute=total_compute,
    initial=ArchVars(N=32, x=2, y=4, m=4, o=2, r=0.5),
    inner_budget=12,
    outer_budget=6,
    total_budget=80,
    seed=0,
    bounds=ArchBounds(m_max=10, dies_max=8),
)
archive = optimize(model, tech, settings)
front = sorted(archive.points, key=lambda p: p.total_cost)
print(f"nested search: {len(archive.all_evaluated)} evaluations, "
      f"Pareto front of {len(front)}:")
for p in front:
    a, st = p.arch, p.strategy
    print(f"  N={a.N:3d} {a.x}x{a.y} m={a.m:2d} o={a.o} r={a.r:.2f} | "
          f"tp{st.tp}/cp{st.cp}/pp{st.pp}/dp{st.dp}/ep{st.ep} | "
          f"{p.throughput:.3e} tok/s  ${p.total_cost / 1e6:.2f}M")
print()

# 3. Baseline presets at the same compute budget: the reconfigurable
# optical design should lead, the flat GPU scale-out trail.
print("preset comparison (same compute budget):")
mcm_vars = dict(N=32, x=2, y=4, m=6, o=3, r=0.6)
for preset in PRESETS:
    point = search_preset(preset, model, total_compute, tech, budget=8,
                          seed=0, mcm_vars=mcm_vars)
    print(f"  {preset:12s} {point.throughput:.3e} tok/s  "
          f"${point.total_cost / 1e6:7.2f}M")
