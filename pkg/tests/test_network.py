"""Network synthesis tests: link-allocation arithmetic, logical shaping,
and fewest-OCS physical derivation against a brute-force oracle."""

import math

import numpy as np
import pytest

from opticlust import (
    LinkAllocation,
    ParallelStrategy,
    allocate_links,
    build_logical,
    derive_physical,
    map_parallelisms,
    validate_topology,
)
from opticlust.errors import (
    InsufficientLinks,
    NoFeasibleMapping,
    NoIntraFill,
    TpExceedsMcm,
)
from opticlust.network import (
    PhysicalTopology,
    RailDimension,
    RingShape,
    rail_degree,
    wiring_plan,
)
from opticlust.workload import Parallelism, PhaseTag

from .oracles import brute_force_min_ocs

CP, EP, DP, PP, TP = (
    Parallelism.CP,
    Parallelism.EP,
    Parallelism.DP,
    Parallelism.PP,
    Parallelism.TP,
)


# ---------------------------------------------------------------------------
# Rail degree and intra/inter mapping


def test_rail_degree_dp_residual():
    s = ParallelStrategy(tp=2, cp=2, pp=2, dp=8, ep=4)
    assert rail_degree(s, DP) == 2
    assert rail_degree(s, EP) == 4
    assert rail_degree(s, TP) == 2


def test_map_tp_fills_mcm_alone():
    s = ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8)
    intra, inter = map_parallelisms(s, 8, {p: 1.0 for p in Parallelism})
    assert intra == [TP]
    assert set(inter) == {CP, EP, PP}  # dp residual is 1


def test_map_partner_is_highest_volume():
    s = ParallelStrategy(tp=4, cp=2, pp=2, dp=4, ep=2)
    volumes = {TP: 9.0, CP: 5.0, EP: 3.0, DP: 1.0, PP: 2.0}
    intra, inter = map_parallelisms(s, 8, volumes)
    assert intra == [TP, CP]  # cp and ep both fit; cp carries more traffic
    assert CP not in inter and EP in inter


def test_map_tp_exceeds_mcm():
    s = ParallelStrategy(tp=16, cp=1, pp=1, dp=4, ep=1)
    with pytest.raises(TpExceedsMcm):
        map_parallelisms(s, 8, {})


def test_map_no_exact_fill():
    s = ParallelStrategy(tp=2, cp=3, pp=1, dp=5, ep=1)
    with pytest.raises(NoIntraFill):
        map_parallelisms(s, 8, {p: 1.0 for p in Parallelism})


# ---------------------------------------------------------------------------
# Link allocation arithmetic


def test_allocation_worked_example():
    volumes = {CP: 300.0, EP: 200.0, DP: 50.0, PP: 50.0}
    alloc = allocate_links(32, volumes)
    # Floors are {16, 10, 2, 2}; the 2 leftover links go to CP.
    assert alloc.per_parallelism == {CP: 18, EP: 10, DP: 2, PP: 2}
    assert alloc.total() == 32


def test_allocation_reuse_worked_example():
    volumes = {CP: 300.0, EP: 200.0, DP: 50.0, PP: 50.0}
    alloc = allocate_links(32, volumes, reuse_pair=(CP, EP))
    assert alloc.reuse_links == 24  # floor(32 * 300 / (100 + 300))
    assert alloc.per_parallelism == {DP: 4, PP: 4}
    assert alloc.links(CP) == alloc.links(EP) == 24
    assert alloc.total() == 32


def test_allocation_floor_formula_randomized():
    rng = np.random.default_rng(7)
    pool = [CP, EP, DP, PP]
    checked = 0
    while checked < 120:
        L = int(rng.integers(8, 64))
        k = int(rng.integers(2, 5))
        ps = list(rng.choice(len(pool), size=k, replace=False))
        volumes = {pool[i]: float(rng.integers(1, 500)) for i in ps}
        total = sum(volumes.values())
        floors = {p: math.floor(L * v / total) for p, v in volumes.items()}
        if min(floors.values()) < 1:
            continue  # min-one redistribution covered separately
        alloc = allocate_links(L, volumes)
        top = max(volumes, key=lambda p: volumes[p])
        for p, f in floors.items():
            if p == top:
                assert alloc.per_parallelism[p] == f + (L - sum(floors.values()))
            else:
                assert alloc.per_parallelism[p] == f
        assert alloc.total() == L
        checked += 1


def test_allocation_reuse_formula_randomized():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 120:
        L = int(rng.integers(8, 64))
        volumes = {
            CP: float(rng.integers(1, 500)),
            EP: float(rng.integers(1, 500)),
            DP: float(rng.integers(1, 500)),
            PP: float(rng.integers(1, 500)),
        }
        vmax = max(volumes[CP], volumes[EP])
        denom = volumes[DP] + volumes[PP] + vmax
        expected = math.floor(L * vmax / denom)
        if expected < 1 or L - expected < 2:
            continue
        alloc = allocate_links(L, volumes, reuse_pair=(CP, EP))
        assert alloc.reuse_links == expected
        assert alloc.total() == L
        checked += 1


def test_allocation_scale_invariance():
    volumes = {CP: 17.0, EP: 11.0, PP: 3.0}
    a = allocate_links(24, volumes)
    b = allocate_links(24, {p: v * 1000.0 for p, v in volumes.items()})
    assert a.per_parallelism == b.per_parallelism


def test_allocation_min_one_link():
    volumes = {CP: 1000.0, EP: 1.0, PP: 1.0}
    alloc = allocate_links(8, volumes)
    assert alloc.per_parallelism[EP] >= 1
    assert alloc.per_parallelism[PP] >= 1
    assert alloc.total() == 8


def test_allocation_insufficient_links():
    volumes = {CP: 5.0, EP: 4.0, PP: 3.0}
    with pytest.raises(InsufficientLinks):
        allocate_links(2, volumes)


def test_reuse_dominance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        L = int(rng.integers(8, 64))
        volumes = {
            CP: float(rng.integers(1, 400)),
            EP: float(rng.integers(1, 400)),
            DP: float(rng.integers(1, 400)),
            PP: float(rng.integers(1, 400)),
        }
        reuse = allocate_links(L, volumes, reuse_pair=(CP, EP))
        # Shared pool dominates the plain floor shares of both members.
        total = sum(volumes.values())
        floor_cp = math.floor(L * volumes[CP] / total)
        floor_ep = math.floor(L * volumes[EP] / total)
        assert reuse.reuse_links >= max(floor_cp, floor_ep)


def test_allocation_single_parallelism_takes_all():
    alloc = allocate_links(12, {PP: 5.0})
    assert alloc.per_parallelism == {PP: 12}


# ---------------------------------------------------------------------------
# Logical topology


def test_build_logical_rings_and_phase_configs():
    s = ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8, num_microbatches=8)
    volumes = {CP: 300.0, EP: 200.0, PP: 50.0}
    alloc = allocate_links(36, volumes, reuse_pair=(CP, EP))
    logical = build_logical([CP, EP, PP], s, alloc)
    assert logical.structures[CP].shape == RingShape.RING
    assert logical.structures[CP].group_size == 4
    assert logical.phase_configs[PhaseTag.ATTENTION] == {CP: alloc.reuse_links}
    assert logical.phase_configs[PhaseTag.FFN] == {EP: alloc.reuse_links}


def test_build_logical_ep_fully_connected_needs_links():
    s = ParallelStrategy(tp=1, cp=1, pp=1, dp=4, ep=4)
    many = LinkAllocation(per_parallelism={EP: 6})
    few = LinkAllocation(per_parallelism={EP: 2})
    fc = build_logical([EP], s, many, ep_fully_connected=True)
    ring = build_logical([EP], s, few, ep_fully_connected=True)
    assert fc.structures[EP].shape == RingShape.FULLY_CONNECTED
    assert ring.structures[EP].shape == RingShape.RING


# ---------------------------------------------------------------------------
# Physical topology: S formula and fewest-OCS oracle


def test_ocs_count_formula_literal_example():
    # Two dimensions of 4 MCMs each over 16 MCMs with k=1:
    # S = 4*floor(2/1) + 4*floor(1/1) = 12.
    topo = PhysicalTopology(
        dims=[
            RailDimension(size=4, links=2, fan_in=1, parallelisms=(CP,)),
            RailDimension(size=4, links=1, fan_in=1, parallelisms=(EP,)),
        ],
        mcm_count=16,
    )
    assert topo.total_ocs == 12


def test_ocs_count_formula_randomized():
    rng = np.random.default_rng(19)
    for _ in range(120):
        n_dims = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 6)) for _ in range(n_dims)]
        mcm_count = int(np.prod(sizes))
        dims = []
        for i, n_i in enumerate(sizes):
            r_i = int(rng.integers(1, 9))
            k_i = int(rng.integers(1, r_i + 1))
            dims.append(
                RailDimension(size=n_i, links=r_i, fan_in=k_i, parallelisms=(CP,))
            )
        topo = PhysicalTopology(dims=dims, mcm_count=mcm_count)
        expected = 0
        for i, d in enumerate(dims):
            others = 1
            for j, e in enumerate(dims):
                if j != i:
                    others *= e.size
            expected += others * (d.links // d.fan_in)
        assert topo.total_ocs == expected
        assert all(d.ocs_groups == d.links // d.fan_in for d in dims)


def _degree_triples(n):
    out = []
    for cp in range(1, n + 1):
        if n % cp:
            continue
        for ep in range(1, n // cp + 1):
            if (n // cp) % ep:
                continue
            pp = n // (cp * ep)
            out.append((cp, ep, pp))
    return out


def test_derive_physical_matches_brute_force():
    rng = np.random.default_rng(23)
    cases = 0
    for n in (4, 6, 8, 12, 16):
        for cp, ep, pp in _degree_triples(n):
            s = ParallelStrategy(tp=1, cp=cp, pp=pp, dp=ep, ep=ep,
                                 num_microbatches=max(1, pp))
            inter = [p for p in (CP, EP, PP) if rail_degree(s, p) > 1]
            if not inter:
                continue
            for port_count in (16, 64):
                links = {p: int(rng.integers(1, 6)) for p in inter}
                alloc = LinkAllocation(per_parallelism=dict(links))
                logical = build_logical(inter, s, alloc)
                total_links = sum(links.values()) + int(rng.integers(0, 3))
                sizes = {p: rail_degree(s, p) for p in inter}
                expected = brute_force_min_ocs(
                    sizes, links, n, total_links, port_count
                )
                if expected is None:
                    with pytest.raises(NoFeasibleMapping):
                        derive_physical(logical, s, n, total_links, port_count)
                else:
                    topo = derive_physical(logical, s, n, total_links, port_count)
                    assert topo.total_ocs == expected
                    report = validate_topology(topo, n, total_links, port_count)
                    assert report.ok, report.violations
                cases += 1
    assert cases >= 100


def test_derive_physical_reuse_pair_same_dimension():
    s = ParallelStrategy(tp=1, cp=4, pp=2, dp=2, ep=2, num_microbatches=2)
    alloc = allocate_links(
        24, {CP: 300.0, EP: 200.0, PP: 50.0}, reuse_pair=(CP, EP)
    )
    logical = build_logical([CP, EP, PP], s, alloc)
    topo = derive_physical(logical, s, 16, 24, 128)
    dim = topo.dim_of(CP)
    assert dim is not None and set(dim.parallelisms) == {CP, EP}
    assert dim.size == 8  # degrees 4 and 2 co-mapped


def test_derive_physical_single_parallelism():
    s = ParallelStrategy(tp=1, cp=8, pp=1, dp=1, ep=1)
    logical = build_logical([CP], s, LinkAllocation(per_parallelism={CP: 12}))
    topo = derive_physical(logical, s, 8, 12, 64)
    d = topo.dims[0]
    assert d.fan_in == min(64 // 8, 12) == 8
    assert topo.total_ocs == 12 // 8


def test_derive_physical_port_overflow():
    s = ParallelStrategy(tp=1, cp=32, pp=1, dp=1, ep=1)
    logical = build_logical([CP], s, LinkAllocation(per_parallelism={CP: 4}))
    with pytest.raises(NoFeasibleMapping):
        derive_physical(logical, s, 32, 4, 16)  # 32 MCMs > 16 ports


# ---------------------------------------------------------------------------
# Validation and export


def test_validate_topology_violations():
    topo = PhysicalTopology(
        dims=[RailDimension(size=4, links=9, fan_in=3, parallelisms=(CP,))],
        mcm_count=4,
    )
    assert validate_topology(topo, 4, 9, 12).ok  # k*N = 12 = P boundary
    report = validate_topology(topo, 4, 8, 12)
    assert not report.ok and any("overcommit" in v for v in report.violations)
    report = validate_topology(topo, 4, 9, 11)
    assert not report.ok and any("k*N" in v for v in report.violations)


def test_wiring_plan_roundtrip():
    import json

    s = ParallelStrategy(tp=1, cp=4, pp=4, dp=1, ep=1, num_microbatches=4)
    logical = build_logical(
        [CP, PP], s, LinkAllocation(per_parallelism={CP: 3, PP: 2})
    )
    topo = derive_physical(logical, s, 16, 5, 64)
    plan = wiring_plan(topo, 64)
    text = json.dumps(plan)
    assert json.loads(text)["total_ocs"] == topo.total_ocs
    assert len(plan["dimensions"]) == len(topo.dims)
