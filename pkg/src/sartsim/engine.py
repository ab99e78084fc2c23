"""Cost and memory model of one inference replica.

Prefill is charged per prompt token, decoding in chunks of ``T`` steps whose
per-step cost is affine in the batch size at the chunk start.  KV memory is
tracked in tokens: a request's prompt prefix is stored once and shared by all
of its branches, each branch adds its own decoded tokens, and everything is
released as soon as a branch terminates.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

from .simcore import ContractViolation, SimClock
from .workload import BranchOutcome, ConfigError, Request, RewardTrajectory


class KvBudgetExceeded(ContractViolation):
    pass


@dataclass(frozen=True)
class EngineConfig:
    B: int = 64
    T: int = 400
    prefill_ms_per_token: float = 0.1
    step_base_ms: float = 2.0
    step_per_branch_ms: float = 0.05
    kv_budget: int = 2_000_000
    # generation cap per branch; admission reserves this much KV for every running branch
    max_new_tokens: int = 32768
    # engine time charged per reward-model evaluation (SART policies only)
    prm_cost_ms: float = 0.0

    def validate(self, prefix: str = "engine") -> "EngineConfig":
        if self.B < 1:
            raise ConfigError(f"{prefix}.B", "must be >= 1")
        if self.T < 1:
            raise ConfigError(f"{prefix}.T", "must be >= 1")
        for name in ("prefill_ms_per_token", "step_base_ms", "step_per_branch_ms", "prm_cost_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{prefix}.{name}", "must be >= 0")
        if self.kv_budget < 1:
            raise ConfigError(f"{prefix}.kv_budget", "must be >= 1")
        if self.max_new_tokens < 1:
            raise ConfigError(f"{prefix}.max_new_tokens", "must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d: dict | None, prefix: str = "engine") -> "EngineConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        return cls(**d).validate(prefix)

    def t_prefill(self, prompt_len: int) -> int:
        return _ms(self.prefill_ms_per_token * prompt_len)

    def t_step(self, batch_size: int) -> float:
        return self.step_base_ms + self.step_per_branch_ms * batch_size

    def chunk_ms(self, batch_size: int) -> int:
        return _ms(self.T * self.t_step(batch_size))


def _ms(x: float) -> int:
    # round half up; costs are non-negative
    return int(x + 0.5)


class BranchState(enum.Enum):
    QUEUED = "Queued"
    RUNNING = "Running"
    COMPLETED = "Completed"
    PRUNED = "Pruned"
    EARLY_STOPPED = "EarlyStopped"

    @property
    def terminal(self) -> bool:
        return self in (BranchState.COMPLETED, BranchState.PRUNED, BranchState.EARLY_STOPPED)


@dataclass
class Branch:
    request_id: int
    index: int
    outcome: BranchOutcome
    traj: RewardTrajectory
    tokens_decoded: int = 0
    state: BranchState = BranchState.QUEUED
    enqueue_time: int = 0
    start_time: int | None = None
    end_time: int | None = None
    # tokens decoded in the most recent chunk; orders completions inside a chunk
    last_chunk_tokens: int = 0
    # reward observed when the branch left the batch (final reward if completed)
    terminal_reward: float | None = None

    @property
    def remaining(self) -> int:
        return self.outcome.target_length - self.tokens_decoded

    @property
    def key(self) -> tuple[int, int]:
        return (self.request_id, self.index)


@dataclass
class KvLedger:
    """Token-level KV accounting with per-request prefix sharing.

    ``token_ms`` integrates each request's resident tokens over virtual time.
    """

    budget: int = 2_000_000
    total_resident: int = 0
    prefix_total: int = 0
    prefix: dict = field(default_factory=dict)
    live: dict = field(default_factory=dict)       # request id -> set of live branch indices
    decoded: dict = field(default_factory=dict)    # (request id, index) -> resident tokens
    request_tokens: dict = field(default_factory=dict)
    token_ms: dict = field(default_factory=dict)

    def fits(self, extra: int) -> bool:
        return self.total_resident + extra <= self.budget

    def add_request(self, req_id: int, prefix_tokens: int, branch_indices) -> None:
        if req_id in self.prefix:
            raise ContractViolation(f"request {req_id} already prefilled")
        if not self.fits(prefix_tokens):
            raise KvBudgetExceeded(f"prefix of request {req_id} does not fit")
        self.prefix[req_id] = prefix_tokens
        self.live[req_id] = set(branch_indices)
        for j in branch_indices:
            self.decoded[(req_id, j)] = 0
        self.request_tokens[req_id] = prefix_tokens
        self.token_ms.setdefault(req_id, 0.0)
        self.total_resident += prefix_tokens
        self.prefix_total += prefix_tokens

    def grow(self, branch: Branch, n: int) -> None:
        self.decoded[branch.key] += n
        self.request_tokens[branch.request_id] += n
        self.total_resident += n

    def release(self, branch: Branch) -> int:
        """Drop a terminated branch; frees the prefix with the request's last branch."""
        if not branch.state.terminal:
            raise ContractViolation(f"branch {branch.key} released while {branch.state.value}")
        if branch.key not in self.decoded:
            raise ContractViolation(f"branch {branch.key} released twice")
        rid = branch.request_id
        freed = self.decoded.pop(branch.key)
        self.live[rid].discard(branch.index)
        if not self.live[rid]:
            p = self.prefix.pop(rid)
            self.prefix_total -= p
            freed += p
            del self.live[rid]
            del self.request_tokens[rid]
        else:
            self.request_tokens[rid] -= freed
        self.total_resident -= freed
        return freed

    def integrate(self, dt: float) -> None:
        if dt <= 0:
            return
        for rid, tok in self.request_tokens.items():
            self.token_ms[rid] += tok * dt

    def integrate_chunk(self, chunk_ms: int, T: int, batch, decoded_now: dict) -> None:
        """Integrate over a decode chunk, before ``grow`` is applied.

        A branch decoding ``d`` tokens holds one more token after each of its
        first ``d`` steps, then stays flat until the chunk boundary.
        """
        step = chunk_ms / T
        self.integrate(chunk_ms)
        for b in batch:
            d = decoded_now[b.key]
            self.token_ms[b.request_id] += step * (d * (d + 1) / 2 + (T - d) * d)

    def audit(self, branches) -> int:
        """Recompute the resident total from branch objects; raise on mismatch."""
        total = 0
        per_req: dict = {}
        for b in branches:
            if b.state.terminal:
                continue
            per_req.setdefault(b.request_id, 0)
            per_req[b.request_id] += b.tokens_decoded
        for rid, tok in per_req.items():
            total += self.prefix.get(rid, 0) + tok
        if total != self.total_resident or set(per_req) != set(self.prefix):
            raise ContractViolation(
                f"KV ledger drift: recomputed {total}, tracked {self.total_resident}")
        if total > self.budget:
            raise KvBudgetExceeded(f"resident {total} exceeds budget {self.budget}")
        return total


def charge_prefill(cfg: EngineConfig, clock: SimClock, ledger: KvLedger, req: Request,
                   n_branches: int, draw) -> list[Branch]:
    """Prefill ``req`` and create ``n_branches`` queued branches sharing its prefix.

    ``draw(req, j)`` returns the (outcome, trajectory) of branch ``j``.
    """
    ledger.add_request(req.id, req.prompt_len, range(1, n_branches + 1))
    dt = cfg.t_prefill(req.prompt_len)
    ledger.integrate(dt)
    clock.advance(dt)
    branches = []
    for j in range(1, n_branches + 1):
        outcome, traj = draw(req, j)
        branches.append(Branch(req.id, j, outcome, traj, enqueue_time=clock.now))
    return branches


@dataclass(frozen=True)
class ChunkResult:
    start: int
    end: int
    batch_size: int
    decoded: dict
    completed: list


def decode_chunk(cfg: EngineConfig, clock: SimClock, ledger: KvLedger, batch) -> ChunkResult:
    """Decode up to ``T`` tokens for every branch in ``batch``.

    The chunk is charged ``T`` steps at the batch size of its start, whether
    or not branches finish early.
    """
    if not batch:
        raise ContractViolation("decode_chunk needs a non-empty batch")
    if len(batch) > cfg.B:
        raise ContractViolation(f"batch of {len(batch)} exceeds B={cfg.B}")
    decoded = {}
    for b in batch:
        if b.state is not BranchState.RUNNING:
            raise ContractViolation(f"branch {b.key} in batch while {b.state.value}")
        decoded[b.key] = min(cfg.T, b.remaining)
    growth = sum(decoded.values())
    if not ledger.fits(growth):
        raise KvBudgetExceeded(
            f"running batch needs {growth} more tokens; budget exhausted and preemption is unsupported")
    start = clock.now
    dt = cfg.chunk_ms(len(batch))
    ledger.integrate_chunk(dt, cfg.T, batch, decoded)
    clock.advance(dt)
    completed = []
    for b in batch:
        d = decoded[b.key]
        b.tokens_decoded += d
        b.last_chunk_tokens = d
        ledger.grow(b, d)
        if b.remaining == 0:
            completed.append(b)
    return ChunkResult(start, clock.now, len(batch), decoded, completed)


def release_branch(ledger: KvLedger, branch: Branch) -> int:
    return ledger.release(branch)
