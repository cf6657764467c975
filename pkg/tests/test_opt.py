"""Search and Pareto tests: strategy enumeration constraints, archive vs.
brute-force dominance filter, deterministic seeding, and exhaustive
optimization of a fully enumerable toy space."""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from opticlust import (
    ArchVars,
    OptimizeSettings,
    ParetoArchive,
    ParallelStrategy,
    derive_mcm,
    evaluate_design,
    inner_search,
    optimize,
    outer_step,
    pareto_update,
    validate_strategy,
)
from opticlust.errors import NoFeasibleStrategy, OpticlustError, SearchExhausted
from opticlust.network import rail_degree
from opticlust.opt import (
    ArchBounds,
    _factor_pair,
    _rule_mutation,
    arch_feasible,
    valid_strategies,
)
from opticlust.sim import Bottleneck
from opticlust.workload import Parallelism

from .oracles import pareto_filter

TOY_COMPUTE = 8 * 400.0  # 8 dies of 400 TFLOPS
TOY_BOUNDS = ArchBounds(m_max=2, dies_max=4)


def toy_search_model():
    """Workload shape whose joint design space stays fully enumerable."""
    from opticlust import ModelConfig

    return ModelConfig(
        num_layers=2, hidden_dim=64, num_heads=4, head_dim=16, ffn_dim=128,
        num_experts=4, top_k_experts=2, vocab_size=512, context_length=32,
        global_batch=8, bytes_per_element=2,
    )


def enumerate_toy_space(tech):
    """Every (ArchVars, McmArch) in the bounded 8-device toy space."""
    out = []
    for n in (2, 4, 8):
        x, y = _factor_pair(8 // n)
        for m in range(1, TOY_BOUNDS.m_max + 1):
            for o in (1, 2, 3):
                v = ArchVars(n, x, y, m, o, 0.5)
                arch = arch_feasible(v, TOY_COMPUTE, tech)
                if arch is not None:
                    out.append((v, arch))
    return out


def evaluate_toy_space(model, tech):
    """Brute-force evaluation of every (arch, strategy) joint point."""
    points = []
    for _, arch in enumerate_toy_space(tech):
        for s in valid_strategies(model, 8, arch.dies_per_mcm, default_microbatches=2):
            try:
                points.append(evaluate_design(model, s, arch, tech))
            except (OpticlustError, ValueError):
                continue
    return points


# ---------------------------------------------------------------------------
# Strategy enumeration


def test_valid_strategies_all_validate(big_moe_model):
    cands = valid_strategies(big_moe_model, 1024, 8)
    assert cands
    for s in cands:
        validate_strategy(big_moe_model, s, 1024)
        fill = 8 // s.tp
        if fill > 1:
            assert any(
                rail_degree(s, p) == fill
                for p in (Parallelism.CP, Parallelism.EP, Parallelism.DP, Parallelism.PP)
            )


def test_valid_strategies_include_canonical(big_moe_model, canonical_strategy):
    cands = valid_strategies(big_moe_model, 1024, 8)
    assert canonical_strategy in cands


def test_valid_strategies_dense_model_skips_ep():
    from opticlust import ModelConfig

    dense = ModelConfig(
        num_layers=4, hidden_dim=32, num_heads=4, head_dim=8, ffn_dim=64,
        context_length=16, global_batch=16,
    )
    for s in valid_strategies(dense, 16, 4, default_microbatches=2):
        assert s.ep == 1


# ---------------------------------------------------------------------------
# evaluate_design


def test_evaluate_design_reuse_pair(big_moe_model, canonical_arch, canonical_strategy, tech):
    point = evaluate_design(big_moe_model, canonical_strategy, canonical_arch, tech)
    assert point.logical.reuse_pair == (Parallelism.CP, Parallelism.EP)
    off = evaluate_design(
        big_moe_model, canonical_strategy, canonical_arch, tech, force_reuse=False
    )
    assert off.logical.reuse_pair is None
    assert point.throughput >= off.throughput


def test_evaluate_design_record(big_moe_model, canonical_arch, canonical_strategy, tech):
    rec = evaluate_design(
        big_moe_model, canonical_strategy, canonical_arch, tech
    ).to_record()
    assert rec["arch"]["N"] == 128
    assert rec["strategy"]["tp"] == 8
    assert rec["total_ocs"] > 0
    assert rec["cost"]["total"] > 0
    assert rec["result"]["throughput"] > 0


# ---------------------------------------------------------------------------
# Pareto archive vs. brute force


@dataclass
class _FakePoint:
    arch: object
    strategy: object
    logical: object
    physical: object
    result: object
    cost: object
    throughput: float = 0.0
    total_cost: float = 0.0


def _fake(t, c):
    return _FakePoint(None, None, None, None, None, None, t, c)


def test_pareto_update_matches_brute_force():
    rng = np.random.default_rng(13)
    for _ in range(100):
        pts = [
            (float(rng.integers(1, 20)), float(rng.integers(1, 20)))
            for _ in range(50)
        ]
        archive = ParetoArchive()
        for t, c in pts:
            pareto_update(archive, _fake(t, c))
        got = sorted({(p.throughput, p.total_cost) for p in archive.points})
        want = sorted(set(pareto_filter(pts)))
        assert got == want
        assert len(archive.all_evaluated) == 50


# ---------------------------------------------------------------------------
# Inner search


def test_inner_search_deterministic(big_moe_model, canonical_arch, tech):
    a = inner_search(canonical_arch, big_moe_model, tech, budget=12, seed=3)
    b = inner_search(canonical_arch, big_moe_model, tech, budget=12, seed=3)
    assert [r.strategy for r in a.evaluations] == [r.strategy for r in b.evaluations]
    assert a.best.throughput == b.best.throughput
    c = inner_search(canonical_arch, big_moe_model, tech, budget=12, seed=4)
    assert [r.strategy for r in c.evaluations] != [r.strategy for r in a.evaluations]


def test_inner_search_budget_respected(big_moe_model, canonical_arch, tech):
    res = inner_search(
        canonical_arch, big_moe_model, tech, budget=6, seed=0,
        improvement_threshold=0.0,
    )
    assert len(res.evaluations) == 6


def test_inner_search_no_feasible(toy_model, tech):
    arch = derive_mcm(TOY_COMPUTE, N=8, x=1, y=1, m=1, o=1, r=0.5, tech=tech)
    from opticlust import ModelConfig

    odd = ModelConfig(
        num_layers=7, hidden_dim=32, num_heads=5, head_dim=8, ffn_dim=64,
        context_length=49, global_batch=13,
    )
    with pytest.raises(NoFeasibleStrategy):
        inner_search(arch, odd, tech, budget=4, seed=0)


# ---------------------------------------------------------------------------
# Outer search


class _Logs:
    def __init__(self, b, util=0.5):
        self.bottleneck = b
        self.compute_utilization = util


def test_rule_mutation_table(tech):
    v = ArchVars(4, 1, 2, 1, 1, 0.5)
    out = _rule_mutation(v, _Logs(Bottleneck.CAPACITY), TOY_BOUNDS, TOY_COMPUTE, tech)
    assert out.m == 2 and (out.N, out.x, out.y, out.o) == (4, 1, 2, 1)
    out = _rule_mutation(v, _Logs(Bottleneck.MEMORY), TOY_BOUNDS, TOY_COMPUTE, tech)
    assert out.m == 2
    out = _rule_mutation(v, _Logs(Bottleneck.OI), TOY_BOUNDS, TOY_COMPUTE, tech)
    assert out.o == 2 or out.x * out.y > 2  # more links, or a bigger MCM
    out = _rule_mutation(v, _Logs(Bottleneck.NOP), TOY_BOUNDS, TOY_COMPUTE, tech)
    assert (out.x, out.y) != (1, 2) or out.N != 4


def test_outer_step_skips_visited(tech):
    start = ArchVars(4, 1, 2, 1, 1, 0.5)
    history = [start]
    seen = {start.key()}
    for _ in range(10):
        nxt = outer_step(history, _Logs(Bottleneck.COMPUTE), TOY_COMPUTE, tech, TOY_BOUNDS)
        assert nxt.key() not in seen
        assert arch_feasible(nxt, TOY_COMPUTE, tech) is not None
        seen.add(nxt.key())
        history.append(nxt)


def test_outer_step_exhausts_finite_space(tech):
    space = enumerate_toy_space(tech)
    history = [space[0][0]]
    found = {space[0][0].key()}
    with pytest.raises(SearchExhausted):
        for _ in range(len(space) + 5):
            nxt = outer_step(
                history, _Logs(Bottleneck.COMPUTE), TOY_COMPUTE, tech, TOY_BOUNDS
            )
            found.add(nxt.key())
            history.append(nxt)
    # The walk visited exactly the reachable feasible space before stopping.
    assert found == {v.key() for v, _ in space}


# ---------------------------------------------------------------------------
# Full nested optimization on the enumerable toy space


def test_optimize_recovers_exhaustive_pareto(tech):
    model = toy_search_model()
    exhaustive = evaluate_toy_space(model, tech)
    assert 0 < len(exhaustive) <= 200
    want = sorted(set(pareto_filter([(p.throughput, p.total_cost) for p in exhaustive])))

    settings = OptimizeSettings(
        total_compute=TOY_COMPUTE,
        initial=ArchVars(4, 1, 2, 1, 1, 0.5),
        inner_budget=1000,
        outer_budget=100,
        total_budget=100000,
        seed=0,
        improvement_threshold=0.0,
        default_microbatches=2,
        bounds=TOY_BOUNDS,
    )
    archive = optimize(model, tech, settings)
    got = sorted({(p.throughput, p.total_cost) for p in archive.points})
    assert got == want


def test_optimize_deterministic(tech):
    model = toy_search_model()
    settings = OptimizeSettings(
        total_compute=TOY_COMPUTE,
        initial=ArchVars(4, 1, 2, 1, 1, 0.5),
        inner_budget=8,
        outer_budget=4,
        total_budget=32,
        seed=5,
        default_microbatches=2,
        bounds=TOY_BOUNDS,
    )
    a = optimize(model, tech, settings)
    b = optimize(model, tech, settings)
    assert [(p.throughput, p.total_cost) for p in a.all_evaluated] == [
        (p.throughput, p.total_cost) for p in b.all_evaluated
    ]


def test_optimize_respects_total_budget(tech):
    model = toy_search_model()
    settings = OptimizeSettings(
        total_compute=TOY_COMPUTE,
        initial=ArchVars(4, 1, 2, 1, 1, 0.5),
        inner_budget=50,
        outer_budget=50,
        total_budget=10,
        seed=0,
        improvement_threshold=0.0,
        default_microbatches=2,
        bounds=TOY_BOUNDS,
    )
    archive = optimize(model, tech, settings)
    assert len(archive.all_evaluated) <= 10
