import pytest

from sartsim.engine import (Branch, BranchState, EngineConfig, KvBudgetExceeded, KvLedger,
                            charge_prefill, decode_chunk, release_branch)
from sartsim.simcore import ContractViolation, SimClock
from sartsim.workload import BranchOutcome, ConfigError, RewardTrajectory

from scripting import request


def fixed_draw(length=1000):
    def draw(req, j):
        return BranchOutcome(length, 0, 0.8), RewardTrajectory((length,), (0.8,))
    return draw


def test_prefill_cost_linear():
    cfg = EngineConfig(prefill_ms_per_token=0.1)
    clock = SimClock(0)
    charge_prefill(cfg, clock, KvLedger(), request(0, prompt_len=500), 1, fixed_draw())
    assert clock.now == 50


def test_prefill_creates_queued_branches_sharing_prefix():
    ledger = KvLedger()
    branches = charge_prefill(EngineConfig(), SimClock(0), ledger, request(0, prompt_len=300), 8, fixed_draw())
    assert len(branches) == 8
    assert all(b.state is BranchState.QUEUED for b in branches)
    assert [b.index for b in branches] == list(range(1, 9))
    assert ledger.total_resident == 300
    assert ledger.prefix == {0: 300}


def test_two_requests_get_separate_prefix_entries():
    ledger = KvLedger()
    for rid in (0, 1):
        charge_prefill(EngineConfig(), SimClock(0), ledger, request(rid, prompt_len=200), 2, fixed_draw())
    assert ledger.prefix == {0: 200, 1: 200}
    assert ledger.total_resident == 400


def test_prefill_refused_over_budget():
    ledger = KvLedger(budget=100)
    with pytest.raises(KvBudgetExceeded):
        charge_prefill(EngineConfig(), SimClock(0), ledger, request(0, prompt_len=101), 1, fixed_draw())


def _running(ledger, rid, lengths, prompt=100):
    branches = []
    for j, n in enumerate(lengths, start=1):
        branches.append(Branch(rid, j, BranchOutcome(n, 0, 0.5), RewardTrajectory((n,), (0.5,))))
    ledger.add_request(rid, prompt, [b.index for b in branches])
    for b in branches:
        b.state = BranchState.RUNNING
    return branches


def test_decode_partial_chunk_completes_branch():
    cfg = EngineConfig(T=400)
    ledger = KvLedger()
    (b,) = _running(ledger, 0, [100])
    res = decode_chunk(cfg, SimClock(0), ledger, [b])
    assert b.tokens_decoded == 100
    assert res.completed == [b]


def test_chunk_time_affine_in_batch_size():
    # T * (2 + 0.05 * 10) = 400 * 2.5
    cfg = EngineConfig(T=400, step_base_ms=2.0, step_per_branch_ms=0.05)
    ledger = KvLedger()
    batch = _running(ledger, 0, [5000] * 10)
    clock = SimClock(0)
    decode_chunk(cfg, clock, ledger, batch)
    assert clock.now == 1000
    assert ledger.total_resident == 100 + 10 * 400


def test_decode_preconditions():
    cfg = EngineConfig(B=2)
    ledger = KvLedger()
    with pytest.raises(ContractViolation):
        decode_chunk(cfg, SimClock(0), ledger, [])
    batch = _running(ledger, 0, [50, 50, 50])
    with pytest.raises(ContractViolation):
        decode_chunk(cfg, SimClock(0), ledger, batch)
    batch[0].state = BranchState.QUEUED
    with pytest.raises(ContractViolation):
        decode_chunk(cfg, SimClock(0), ledger, batch[:2])


def test_release_frees_prefix_with_last_branch():
    cfg = EngineConfig(T=10)
    ledger = KvLedger()
    b1, b2 = _running(ledger, 0, [10, 30], prompt=100)
    decode_chunk(cfg, SimClock(0), ledger, [b1, b2])
    assert ledger.total_resident == 120
    b1.state = BranchState.COMPLETED
    assert release_branch(ledger, b1) == 10
    assert ledger.total_resident == 110
    b2.state = BranchState.PRUNED
    assert release_branch(ledger, b2) == 10 + 100
    assert ledger.total_resident == 0
    assert ledger.prefix == {}


def test_release_rules():
    ledger = KvLedger()
    (b,) = _running(ledger, 0, [10])
    with pytest.raises(ContractViolation):
        release_branch(ledger, b)
    b.state = BranchState.EARLY_STOPPED
    release_branch(ledger, b)
    with pytest.raises(ContractViolation):
        release_branch(ledger, b)


def test_audit_detects_drift():
    ledger = KvLedger()
    batch = _running(ledger, 0, [50, 50])
    decode_chunk(EngineConfig(T=10), SimClock(0), ledger, batch)
    assert ledger.audit(batch) == 120
    batch[0].tokens_decoded += 1
    with pytest.raises(ContractViolation):
        ledger.audit(batch)


def test_token_time_integral_over_chunk():
    # one branch, prefix 100, decodes 10 tokens over 10 steps of 1 ms:
    # prefix contributes 100*10, growth 1+2+...+10 = 55
    cfg = EngineConfig(T=10, step_base_ms=1.0, step_per_branch_ms=0.0)
    ledger = KvLedger()
    batch = _running(ledger, 0, [50])
    decode_chunk(cfg, SimClock(0), ledger, batch)
    assert ledger.token_ms[0] == pytest.approx(1000 + 55)
    # a branch finishing after 4 steps holds 4 tokens for the remaining 6
    ledger = KvLedger()
    batch = _running(ledger, 1, [4])
    decode_chunk(cfg, SimClock(0), ledger, batch)
    assert ledger.token_ms[1] == pytest.approx(1000 + (1 + 2 + 3 + 4) + 6 * 4)


def test_engine_config_validation():
    with pytest.raises(ConfigError) as e:
        EngineConfig.from_dict({"B": 0})
    assert e.value.field == "engine.B"
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"T": 0})
