"""Walk through network synthesis: bandwidth-proportional link allocation,
dynamic CP/EP link reuse, logical structures, and the fewest-OCS physical
topology with its exportable wiring plan.

Run with:  python3 demos/topology_synthesis.py
"""

import json

from opticlust import (
    ModelConfig,
    ParallelStrategy,
    TechParams,
    allocate_links,
    build_logical,
    derive_mcm,
    derive_physical,
    map_parallelisms,
    project_traffic,
)
from opticlust.network import wiring_plan

tech = TechParams()
model = ModelConfig(
    num_layers=96, hidden_dim=4096, num_heads=64, head_dim=128,
    num_kv_heads=4, ffn_dim=1536, num_experts=128, top_k_experts=8,
    vocab_size=151936, context_length=10240, global_batch=1024,
    bytes_per_element=2,
)
strategy = ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8, num_microbatches=8)

# 1. The module: 128 packages of 2x4 dies, 6 HBM dies each, 3 optical
# links per peripheral die edge at a 0.6 CPO area ratio.
arch = derive_mcm(1024 * 989.0, N=128, x=2, y=4, m=6, o=3, r=0.6, tech=tech)
print(f"MCM: {arch.x}x{arch.y} dies, {arch.total_links} optical links/module, "
      f"NoP link {arch.nop_link_bw:.0f} GB/s, "
      f"HBM {arch.m * tech.hbm_capacity_per_die:.0f} GB per die")
print()

# 2. Split parallelisms into intra-module (fast NoP) and inter-module
# (optical rails), then give each rail links proportional to its volume.
volumes = project_traffic(model, strategy).volumes()
intra, inter = map_parallelisms(strategy, arch.dies_per_mcm, volumes)
print("intra-module:", [p.value for p in intra])
print("inter-module:", [p.value for p in inter])

inter_vols = {p: volumes[p] for p in inter}
plain = allocate_links(arch.total_links, inter_vols)
print("plain allocation:", {p.value: n for p, n in plain.per_parallelism.items()})

# 3. CP (attention phase) and EP (expert phase) never talk at the same
# time, so one pool of links can serve both via OCS reswitching.
reuse = allocate_links(arch.total_links, inter_vols,
                       reuse_pair=tuple(p for p in inter if p.value in ("CP", "EP")))
print(f"with CP/EP reuse: shared pool {reuse.reuse_links} links, "
      f"others {({p.value: n for p, n in reuse.per_parallelism.items()})}")
print()

# 4. Logical structures (ring sizes per rail), then the physical topology
# that realizes them with the fewest optical circuit switches.
logical = build_logical(inter, strategy, reuse)
for p, s in logical.structures.items():
    print(f"  {p.value}: {s.shape.value} of size {s.group_size} "
          f"on {logical.links(p)} links")
for tag, cfg in logical.phase_configs.items():
    print(f"  phase {tag.value}: shared pool serves "
          f"{({p.value: n for p, n in cfg.items()})}")

phys = derive_physical(logical, strategy, arch.N, arch.total_links,
                       tech.ocs_port_count)
print(f"physical: {len(phys.dims)} rail dimension(s), "
      f"{phys.total_ocs} OCS total")
for d in phys.dims:
    print(f"  dim: {d.size} modules x {d.links} links, fan-in {d.fan_in}, "
          f"rails {[p.value for p in d.parallelisms]}")
print()

# 5. The wiring plan is a plain JSON document: per dimension, the OCS list
# and per-module port assignments, plus per-phase cross-connect tables.
plan = wiring_plan(phys, tech.ocs_port_count)
print("wiring plan keys:", sorted(plan))
print("first dimension:", json.dumps(plan["dimensions"][0]))
