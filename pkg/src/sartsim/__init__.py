"""Deterministic simulator of branch-sampling LLM serving.

Compares a scheduler that samples extra reasoning branches, stops at the
first ``M`` completions and prunes low-reward branches against Vanilla and
Self-Consistency baselines on a continuous-batching engine model.
"""
__version__ = "0.1.0"

from .engine import Branch, BranchState, EngineConfig, KvLedger
from .metrics import accuracy, occupancy_trace, percentile, summarize
from .orderstats import cdf_order_stat, monotonicity_gap, monte_carlo_order_stat
from .scheduler import (Aggregation, Policy, PolicyConfig, RequestMeta, Simulator,
                        finalize, on_chunk_end, simulate)
from .simcore import SimClock, split_stream
from .workload import Request, WorkloadConfig, build_requests, reward_at

__all__ = [
    "Aggregation", "Branch", "BranchState", "EngineConfig", "KvLedger", "Policy",
    "PolicyConfig", "Request", "RequestMeta", "SimClock", "Simulator", "WorkloadConfig",
    "accuracy", "build_requests", "cdf_order_stat", "finalize", "monotonicity_gap",
    "monte_carlo_order_stat", "occupancy_trace", "on_chunk_end", "percentile",
    "reward_at", "simulate", "split_stream", "summarize",
]
