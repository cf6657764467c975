"""Shared fixtures: a large MoE workload, a canonical MCM design point and
toy shapes small enough for exhaustive oracles."""

import pytest

from opticlust import ModelConfig, ParallelStrategy, derive_mcm
from opticlust.arch import TechParams

H100_TFLOPS = 989.0


@pytest.fixture(scope="session")
def tech():
    return TechParams()


@pytest.fixture(scope="session")
def big_moe_model():
    """A ~240B-parameter MoE shape (GQA, 128 experts, top-8) at 10k context."""
    return ModelConfig(
        num_layers=96,
        hidden_dim=4096,
        num_heads=64,
        head_dim=128,
        num_kv_heads=4,
        ffn_dim=1536,
        num_experts=128,
        top_k_experts=8,
        vocab_size=151936,
        context_length=10240,
        global_batch=1024,
        bytes_per_element=2,
    )


@pytest.fixture(scope="session")
def canonical_arch(tech):
    """1024 H100-class dies packed 2x4 per MCM, 6 HBM dies each, o=3."""
    return derive_mcm(
        1024 * H100_TFLOPS, N=128, x=2, y=4, m=6, o=3, r=0.6, tech=tech
    )


@pytest.fixture(scope="session")
def canonical_strategy():
    return ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8, num_microbatches=8)


@pytest.fixture(scope="session")
def representative_strategies():
    """Three hybrid strategies over 1024 devices used for trend checks."""
    return [
        ParallelStrategy(tp=8, cp=4, pp=4, dp=8, ep=8, num_microbatches=8),
        ParallelStrategy(tp=8, cp=2, pp=8, dp=8, ep=8, num_microbatches=8),
        ParallelStrategy(tp=8, cp=8, pp=4, dp=4, ep=4, num_microbatches=8),
    ]


@pytest.fixture(scope="session")
def toy_model():
    """Small dense-ish MoE shape for fast exhaustive checks."""
    return ModelConfig(
        num_layers=4,
        hidden_dim=64,
        num_heads=4,
        head_dim=16,
        ffn_dim=128,
        num_experts=4,
        top_k_experts=2,
        vocab_size=512,
        context_length=64,
        global_batch=16,
        bytes_per_element=2,
    )
