"""Walk through the cost model: die yield, per-component cluster cost,
and the memory-capacity sweep showing throughput saturating while cost
keeps climbing.

Run with:  python3 demos/cost_model_walkthrough.py
"""

from opticlust import ModelConfig, ParallelStrategy, TechParams, derive_mcm, evaluate_design
from opticlust.arch import cost_model, die_yield
from opticlust.errors import OpticlustError

tech = TechParams()
model = ModelConfig(
    num_layers=96, hidden_dim=4096, num_heads=64, head_dim=128,
    num_kv_heads=4, ffn_dim=1536, num_experts=128, top_k_experts=8,
    vocab_size=151936, context_length=10240, global_batch=1024,
    bytes_per_element=2,
)
strategy = ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8, num_microbatches=8)

# 1. Yield falls with die area; the wafer cost is amortized over good dies.
print("die yield vs area (negative binomial, alpha=%.0f, D0=%g /mm2):"
      % (tech.yield_alpha, tech.defect_density))
for area in (100.0, 400.0, 814.0):
    print(f"  {area:6.0f} mm2 -> yield {die_yield(area, tech):.3f}")
print()

# 2. Full breakdown for the canonical 1024-die cluster.
arch = derive_mcm(1024 * 989.0, N=128, x=2, y=4, m=6, o=3, r=0.6, tech=tech)
point = evaluate_design(model, strategy, arch, tech)
cost = cost_model(arch, point.physical.total_ocs, tech)
print(f"cluster: {arch.N} modules x {arch.x * arch.y} dies "
      f"({arch.die_area:.0f} mm2 each), {point.physical.total_ocs} OCS")
for name in ("logic_die_cost", "memory_cost", "package_cost",
             "cpo_cost", "ocs_cost", "link_cost"):
    value = getattr(cost, name)
    print(f"  {name:16s} ${value / 1e6:7.3f}M  ({100 * value / cost.total:5.1f}%)")
print(f"  {'total':16s} ${cost.total / 1e6:7.3f}M")
print()

# 3. Sweep HBM dies per logic die: throughput rises until the workload
# stops being memory-bound, then flattens; cost rises the whole way.
print("m   throughput (tok/s)   total cost   note")
prev = None
for m in range(1, 16):
    try:
        a = derive_mcm(1024 * 989.0, N=128, x=2, y=4, m=m, o=3, r=0.6, tech=tech)
        p = evaluate_design(model, strategy, a, tech)
    except OpticlustError as exc:
        print(f"{m:2d}  ({type(exc).__name__})")
        continue
    note = ""
    if prev is not None and p.throughput <= prev * 1.001:
        note = "<- saturated"
    print(f"{m:2d}  {p.throughput:16.3e}   ${p.total_cost / 1e6:6.2f}M   {note}")
    prev = p.throughput
