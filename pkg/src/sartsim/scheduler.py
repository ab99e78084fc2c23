"""Branch-sampling scheduler: early stopping, two-phase pruning and baselines.

The main loop fills the decode batch from the branch queue first and prefills
a waiting request only when no branch is waiting.  After each chunk of ``T``
decode steps, every request with a branch in the batch is processed in
ascending id order: completions move an exploring request to the exploit
phase, completed branches leave the batch, low-reward branches are pruned, and
the request is finalized once ``M`` branches completed or none remain.
"""
from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, field

from .engine import (Branch, BranchState, ChunkResult, EngineConfig, KvLedger,
                     charge_prefill, decode_chunk)
from .simcore import ContractViolation, SimClock
from .workload import ConfigError, Request, WorkloadConfig, draw_branch, reward_at


class Policy(enum.Enum):
    VANILLA = "Vanilla"
    SELF_CONSISTENCY = "SelfConsistency"
    SART = "SART"
    SART_NO_PRUNE = "SARTNoPrune"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        key = str(name).replace("-", "").replace("_", "").lower()
        aliases = {
            "vanilla": cls.VANILLA,
            "sc": cls.SELF_CONSISTENCY,
            "selfconsistency": cls.SELF_CONSISTENCY,
            "sart": cls.SART,
            "sartnoprune": cls.SART_NO_PRUNE,
            "noprune": cls.SART_NO_PRUNE,
        }
        if key not in aliases:
            raise ConfigError("policy.name", f"unknown policy {name!r}")
        return aliases[key]


class Aggregation(enum.Enum):
    HIGHEST_REWARD = "HighestReward"
    MAJORITY_VOTE = "MajorityVote"
    SINGLE = "Single"


_DEFAULT_AGG = {
    Policy.VANILLA: Aggregation.SINGLE,
    Policy.SELF_CONSISTENCY: Aggregation.MAJORITY_VOTE,
    Policy.SART: Aggregation.HIGHEST_REWARD,
    Policy.SART_NO_PRUNE: Aggregation.HIGHEST_REWARD,
}


@dataclass(frozen=True)
class PolicyConfig:
    policy: Policy = Policy.SART
    N: int = 8
    M: int = 4
    alpha: float = 0.5
    beta: int = 4
    aggregation: Aggregation = Aggregation.HIGHEST_REWARD

    @classmethod
    def make(cls, policy="sart", N: int = 8, M: int | None = None, alpha: float = 0.5,
             beta: int | None = None, aggregation=None) -> "PolicyConfig":
        """Build a validated config, filling in the usual defaults.

        ``M`` and ``beta`` default to ``N // 2``.  Vanilla is forced to a
        single branch and Self-Consistency waits for all ``N`` branches.
        """
        policy = policy if isinstance(policy, Policy) else Policy.parse(policy)
        if policy is Policy.VANILLA:
            N, M, beta = 1, 1, 0
        elif policy is Policy.SELF_CONSISTENCY:
            M = N
            beta = 0 if beta is None else beta
        if M is None:
            M = max(1, N // 2)
        if beta is None:
            beta = min(N // 2, max(N - 1, 0))
        if aggregation is None:
            aggregation = _DEFAULT_AGG[policy]
        elif not isinstance(aggregation, Aggregation):
            try:
                aggregation = Aggregation(aggregation)
            except ValueError:
                raise ConfigError("policy.aggregation", f"unknown aggregation {aggregation!r}")
        return cls(policy, int(N), int(M), float(alpha), int(beta), aggregation).validate()

    def validate(self, prefix: str = "policy") -> "PolicyConfig":
        if self.N < 1:
            raise ConfigError(f"{prefix}.N", "must be >= 1")
        if not 1 <= self.M <= self.N:
            raise ConfigError(f"{prefix}.M", f"need 1 <= M <= N (M={self.M}, N={self.N})")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"{prefix}.alpha", "must be in [0, 1]")
        if not 0 <= self.beta <= max(self.N - 1, 0):
            raise ConfigError(f"{prefix}.beta", f"need 0 <= beta <= N-1 (beta={self.beta})")
        if self.policy is Policy.VANILLA and (self.N, self.M) != (1, 1):
            raise ConfigError(f"{prefix}.N", "Vanilla runs exactly one branch")
        return self

    @property
    def uses_rewards(self) -> bool:
        return self.policy in (Policy.SART, Policy.SART_NO_PRUNE)

    @property
    def prunes(self) -> bool:
        return self.policy is Policy.SART

    def as_dict(self) -> dict:
        return {"name": self.policy.value, "N": self.N, "M": self.M, "alpha": self.alpha,
                "beta": self.beta, "aggregation": self.aggregation.value}


class Phase(enum.Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"


@dataclass
class RequestMeta:
    phase: Phase
    threshold: float
    max_num_pruned: int
    num_completed: int = 0
    num_pruned: int = 0

    @classmethod
    def initial(cls, policy: PolicyConfig) -> "RequestMeta":
        return cls(Phase.EXPLORE, policy.alpha, policy.beta)


@dataclass
class ChunkDecision:
    completed: list = field(default_factory=list)   # branch indices, ascending
    pruned: list = field(default_factory=list)
    new_threshold: float | None = None
    finalize: bool = False
    reward_evals: int = 0


def on_chunk_end(meta: RequestMeta, policy: PolicyConfig, completed, incomplete) -> ChunkDecision:
    """Per-request bookkeeping after one decode chunk.

    ``completed`` and ``incomplete`` are this request's branches that were in
    the chunk's batch.  ``meta`` is updated in place; pruned branches get
    their ``terminal_reward`` set to the reward that condemned them.
    """
    dec = ChunkDecision()
    completed = sorted(completed, key=lambda b: b.index)
    incomplete = sorted(incomplete, key=lambda b: b.index)

    if policy.uses_rewards and completed:
        dec.reward_evals += len(completed)
        if meta.phase is Phase.EXPLORE:
            # earliest finisher within the chunk; ties go to the lowest index
            first = min(completed, key=lambda b: (b.last_chunk_tokens, b.index))
            meta.phase = Phase.EXPLOIT
            meta.threshold = first.outcome.final_reward
            meta.max_num_pruned = policy.N - 1
            dec.new_threshold = meta.threshold

    for b in completed:
        b.terminal_reward = b.outcome.final_reward
        meta.num_completed += 1
        dec.completed.append(b.index)

    if policy.prunes:
        for b in incomplete:
            r = reward_at(b.traj, b.tokens_decoded)
            dec.reward_evals += 1
            if meta.num_pruned < meta.max_num_pruned and r < meta.threshold:
                b.terminal_reward = r
                meta.num_pruned += 1
                dec.pruned.append(b.index)

    if policy.policy in (Policy.VANILLA, Policy.SELF_CONSISTENCY):
        dec.finalize = meta.num_completed >= policy.N
    else:
        dec.finalize = (meta.num_completed >= policy.M
                        or meta.num_completed + meta.num_pruned == policy.N)
    return dec


@dataclass(frozen=True)
class FinalResponse:
    request_id: int
    chosen_branch: int | None
    label: int
    is_correct: bool
    finalize_time: int


def finalize(policy: PolicyConfig, branches, finalize_time: int = 0) -> FinalResponse:
    """Pick the request's answer from its terminated branches.

    Only completed branches vote or compete on reward; if none completed the
    pruned ones are used, ranked by the reward at which they were pruned.
    """
    branches = sorted(branches, key=lambda b: b.index)
    pool = [b for b in branches if b.state is BranchState.COMPLETED]
    if not pool:
        pool = [b for b in branches if b.state is BranchState.PRUNED]
    if not pool:
        raise ContractViolation("finalize called with no completed or pruned branch")
    rid = pool[0].request_id
    agg = policy.aggregation

    if agg is Aggregation.MAJORITY_VOTE:
        counts = Counter(b.outcome.answer_label for b in pool)
        top = max(counts.values())
        label = next(b.outcome.answer_label for b in pool if counts[b.outcome.answer_label] == top)
        return FinalResponse(rid, None, label, label == 0, finalize_time)

    if agg is Aggregation.HIGHEST_REWARD:
        chosen = pool[0]
        for b in pool[1:]:
            if _reward(b) > _reward(chosen):
                chosen = b
    else:
        chosen = pool[0]
    label = chosen.outcome.answer_label
    return FinalResponse(rid, chosen.index, label, label == 0, finalize_time)


def _reward(b: Branch) -> float:
    if b.terminal_reward is not None:
        return b.terminal_reward
    return b.outcome.final_reward


@dataclass
class RequestRecord:
    request_id: int
    arrival_time: int
    prefill_start: int
    finalize_time: int
    is_correct: bool
    label: int
    chosen_branch: int | None
    branch_states: list
    branch_lengths: list
    target_lengths: list
    token_ms: float = 0.0

    @property
    def queuing_latency(self) -> int:
        return self.prefill_start - self.arrival_time

    @property
    def inference_latency(self) -> int:
        return self.finalize_time - self.prefill_start

    @property
    def e2e_latency(self) -> int:
        return self.finalize_time - self.arrival_time

    @property
    def completed_lengths(self) -> list:
        return [n for n, s in zip(self.branch_lengths, self.branch_states) if s == "Completed"]

    def as_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "arrival_time": self.arrival_time,
            "prefill_start": self.prefill_start,
            "finalize_time": self.finalize_time,
            "queuing_latency": self.queuing_latency,
            "inference_latency": self.inference_latency,
            "e2e_latency": self.e2e_latency,
            "is_correct": self.is_correct,
            "label": self.label,
            "chosen_branch": self.chosen_branch,
            "branch_states": self.branch_states,
            "branch_lengths": self.branch_lengths,
            "target_lengths": self.target_lengths,
            "token_ms": round(self.token_ms, 3),
        }


@dataclass(frozen=True)
class ChunkEvent:
    start: int
    end: int
    batch_size: int
    running_branches: int
    resident_tokens: int


@dataclass
class SimResult:
    records: list
    chunks: list
    events: list
    audits: int
    max_completed: dict


class Simulator:
    """Runs one policy over a fixed request list on a single engine replica.

    ``draw(req, j)`` supplies branch outcomes and trajectories; by default
    they come from the seeded workload oracle, keyed by request and branch so
    that different policies on the same seed see identical branches.
    ``events`` collects ``(time, kind, request_id, branch_index)`` tuples when
    ``trace`` is on.
    """

    def __init__(self, requests, policy: PolicyConfig, engine: EngineConfig | None = None,
                 calib: WorkloadConfig | None = None, seed: int = 0, draw=None,
                 audit: bool = True, trace: bool = False):
        self.policy = policy.validate()
        self.engine = (engine or EngineConfig()).validate()
        self.calib = calib or WorkloadConfig()
        if self.calib.max_len > self.engine.max_new_tokens:
            raise ConfigError("engine.max_new_tokens",
                              f"must be >= workload.max_len ({self.calib.max_len})")
        self.seed = seed
        self.requests = sorted(requests, key=lambda r: (r.arrival_time, r.id))
        self.by_id = {r.id: r for r in self.requests}
        if draw is None:
            T = self.engine.T
            draw = lambda req, j: draw_branch(seed, req, j, T, self.calib)  # noqa: E731
        self.draw = draw
        self.audit = audit
        self.trace = trace

        self.clock = SimClock(0)
        self.ledger = KvLedger(self.engine.kv_budget)
        self.pending = deque(self.requests)
        self.request_queue: deque = deque()
        self.branch_queue: deque = deque()
        self.batch: list = []
        self.meta: dict = {}
        self.branches: dict = {}
        self.prefill_start: dict = {}
        self.records: dict = {}
        self.chunks: list = []
        self.events: list = []
        self.audits = 0
        self.max_completed: dict = {}

    def _emit(self, kind, rid=None, j=None):
        if self.trace:
            self.events.append((self.clock.now, kind, rid, j))

    def _admit_arrivals(self):
        while self.pending and self.pending[0].arrival_time <= self.clock.now:
            self.request_queue.append(self.pending.popleft())

    def _reserved(self, running: int) -> int:
        # worst case: every running branch grows to max_new_tokens; no preemption
        return self.ledger.prefix_total + running * self.engine.max_new_tokens

    def _fill_batch(self):
        budget = self.engine.kv_budget
        while len(self.batch) < self.engine.B:
            if self.branch_queue:
                if self._reserved(len(self.batch) + 1) > budget:
                    break
                b = self.branch_queue.popleft()
                b.state = BranchState.RUNNING
                b.start_time = self.clock.now
                self.batch.append(b)
                self._emit("start", b.request_id, b.index)
            elif self.request_queue:
                req = self.request_queue[0]
                if self._reserved(len(self.batch)) + req.prompt_len > budget:
                    break
                self.request_queue.popleft()
                self._prefill(req)
                self._admit_arrivals()
            else:
                break

    def _prefill(self, req: Request):
        self.prefill_start[req.id] = self.clock.now
        self._emit("prefill", req.id)
        # queued branches of other requests keep their prefix resident meanwhile
        new = charge_prefill(self.engine, self.clock, self.ledger, req, self.policy.N, self.draw)
        self.meta[req.id] = RequestMeta.initial(self.policy)
        self.branches[req.id] = new
        self.branch_queue.extend(new)

    def run(self) -> SimResult:
        while True:
            self._admit_arrivals()
            self._fill_batch()
            if not self.batch:
                if self.branch_queue or self.request_queue:
                    raise ContractViolation("KV budget too small to admit any work")
                if not self.pending:
                    break
                dt = self.pending[0].arrival_time - self.clock.now
                self.ledger.integrate(dt)
                self.clock.jump_to(self.pending[0].arrival_time)
                continue
            chunk = decode_chunk(self.engine, self.clock, self.ledger, self.batch)
            self._bookkeeping(chunk)
            self.chunks.append(ChunkEvent(chunk.start, self.clock.now, chunk.batch_size,
                                          len(self.batch), self.ledger.total_resident))
            if self.audit:
                live = [b for rid in self.ledger.live for b in self.branches[rid]]
                self.ledger.audit(live)
                self.audits += 1

        if len(self.records) != len(self.requests):
            raise ContractViolation("simulation ended with unfinished requests")
        records = [self.records[r.id] for r in sorted(self.requests, key=lambda r: r.id)]
        return SimResult(records, self.chunks, self.events, self.audits, self.max_completed)

    def _bookkeeping(self, chunk: ChunkResult):
        done = {b.key for b in chunk.completed}
        involved = sorted({b.request_id for b in self.batch})
        by_req: dict = {}
        for b in self.batch:
            by_req.setdefault(b.request_id, []).append(b)
        leaving = set()
        for rid in involved:
            mine = by_req[rid]
            completed = [b for b in mine if b.key in done]
            incomplete = [b for b in mine if b.key not in done]
            meta = self.meta[rid]
            dec = on_chunk_end(meta, self.policy, completed, incomplete)
            if dec.reward_evals and self.engine.prm_cost_ms:
                dt = dec.reward_evals * self.engine.prm_cost_ms
                self.ledger.integrate(dt)
                self.clock.advance(int(dt + 0.5))
            if dec.new_threshold is not None:
                self._emit("exploit", rid)
            for b in completed:
                self._terminate(b, BranchState.COMPLETED, "complete")
                leaving.add(b.key)
            pruned = set(dec.pruned)
            for b in incomplete:
                if b.index in pruned:
                    self._terminate(b, BranchState.PRUNED, "prune")
                    leaving.add(b.key)
            self.max_completed[rid] = meta.num_completed
            if dec.finalize:
                self._finalize(rid)
                leaving.update(b.key for b in mine)
        self.batch = [b for b in self.batch if b.key not in leaving]

    def _terminate(self, b: Branch, state: BranchState, kind: str):
        b.state = state
        b.end_time = self.clock.now
        self.ledger.release(b)
        self._emit(kind, b.request_id, b.index)

    def _finalize(self, rid: int):
        branches = self.branches[rid]
        for b in branches:
            if not b.state.terminal:
                # queued branches are dropped without ever running
                if b.state is BranchState.QUEUED:
                    self.branch_queue.remove(b)
                self._terminate(b, BranchState.EARLY_STOPPED, "early_stop")
        resp = finalize(self.policy, branches, self.clock.now)
        self._emit("finalize", rid, resp.chosen_branch)
        req = self.by_id[rid]
        self.records[rid] = RequestRecord(
            rid, req.arrival_time, self.prefill_start[rid], self.clock.now,
            resp.is_correct, resp.label, resp.chosen_branch,
            [b.state.value for b in branches],
            [b.tokens_decoded for b in branches],
            [b.outcome.target_length for b in branches],
            self.ledger.token_ms.pop(rid, 0.0),
        )


def simulate(requests, policy: PolicyConfig, engine: EngineConfig | None = None,
             calib: WorkloadConfig | None = None, seed: int = 0, **kw) -> SimResult:
    return Simulator(requests, policy, engine, calib, seed, **kw).run()
