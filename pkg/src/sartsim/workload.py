"""Request stream and the stochastic stand-ins for the LLM and the reward model.

Every branch of a request gets a target length, an answer label and a reward
trajectory.  Length and correctness are drawn independently so that longer
reasoning is not more likely to be right.  Rewards are informative: correct
branches score higher on average, and intermediate scores get less noisy as a
branch approaches its final token.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import ndtr, ndtri

from .simcore import split_stream


class ConfigError(ValueError):
    """A scenario or calibration value is out of range.

    ``field`` holds the dotted config path of the offending value.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class WorkloadConfig:
    # branch length: lognormal per request, truncated to [min_len, max_len]
    median_len: float = 8000.0
    sigma_log: float = 0.5
    min_len: int = 256
    max_len: int = 32768
    # spread of per-request medians (0 = every request shares median_len)
    median_log_sd: float = 0.0
    # per-request difficulty p_correct ~ Beta(a, b)
    difficulty_a: float = 4.0
    difficulty_b: float = 2.0
    num_wrong_labels: int = 4
    reward_correct_mean: float = 0.8
    reward_correct_sd: float = 0.1
    reward_wrong_mean: float = 0.4
    reward_wrong_sd: float = 0.15
    traj_sigma: float = 0.15
    reward_prior: float = 0.6
    prompt_min: int = 64
    prompt_max: int = 1024

    def validate(self, prefix: str = "workload") -> "WorkloadConfig":
        def bad(name, msg):
            raise ConfigError(f"{prefix}.{name}", msg)

        if self.median_len <= 0:
            bad("median_len", "must be > 0")
        if self.sigma_log <= 0:
            bad("sigma_log", "must be > 0")
        if not 1 <= self.min_len <= self.max_len:
            bad("min_len", "need 1 <= min_len <= max_len")
        if self.median_log_sd < 0:
            bad("median_log_sd", "must be >= 0")
        if self.difficulty_a <= 0:
            bad("difficulty_a", "must be > 0")
        if self.difficulty_b <= 0:
            bad("difficulty_b", "must be > 0")
        if self.num_wrong_labels < 1:
            bad("num_wrong_labels", "must be >= 1")
        for name in ("reward_correct_sd", "reward_wrong_sd", "traj_sigma"):
            if getattr(self, name) < 0:
                bad(name, "must be >= 0")
        for name in ("reward_correct_mean", "reward_wrong_mean", "reward_prior"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad(name, "must be in [0, 1]")
        if not 1 <= self.prompt_min <= self.prompt_max:
            bad("prompt_min", "need 1 <= prompt_min <= prompt_max")
        return self

    @classmethod
    def from_dict(cls, d: dict | None, prefix: str = "workload") -> "WorkloadConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        return cls(**d).validate(prefix)


@dataclass(frozen=True)
class Request:
    id: int
    arrival_time: int
    prompt_len: int
    p_correct: float
    length_median: float
    length_sigma: float


@dataclass(frozen=True)
class BranchOutcome:
    target_length: int
    answer_label: int
    final_reward: float

    @property
    def is_correct(self) -> bool:
        return self.answer_label == 0


@dataclass(frozen=True)
class RewardTrajectory:
    """Reward checkpoints keyed by decoded-token count.

    ``positions`` is strictly increasing and ends at the branch's target
    length, whose value is the final reward.
    """

    positions: tuple[int, ...]
    values: tuple[float, ...]
    prior: float = 0.6

    @property
    def checkpoints(self) -> dict[int, float]:
        return dict(zip(self.positions, self.values))

    @property
    def final_reward(self) -> float:
        return self.values[-1]


def reward_at(traj: RewardTrajectory, tokens_decoded: int) -> float:
    """Reward at the greatest checkpoint <= ``tokens_decoded`` (prior before the first)."""
    if tokens_decoded < 0:
        raise ValueError("tokens_decoded must be >= 0")
    i = bisect.bisect_right(traj.positions, tokens_decoded)
    if i == 0:
        return traj.prior
    return traj.values[i - 1]


def generate_arrivals(
    rate: float,
    horizon: int,
    rng: np.random.Generator,
    calib: WorkloadConfig | None = None,
    attr_rng: np.random.Generator | None = None,
    max_requests: int | None = None,
) -> list[Request]:
    """Poisson arrivals at ``rate`` requests/s over ``[0, horizon]`` ms.

    Gaps are drawn from ``rng``; prompt length and difficulty come from
    ``attr_rng`` (defaults to ``rng``) so the arrival times do not depend on
    the calibration.
    """
    if rate <= 0:
        raise ConfigError("arrival_rate", "must be > 0")
    if horizon < 0:
        raise ConfigError("horizon_ms", "must be >= 0")
    calib = calib or WorkloadConfig()
    attr_rng = attr_rng if attr_rng is not None else rng
    mean_gap = 1000.0 / rate
    limit = max_requests if max_requests is not None else math.inf

    times: list[int] = []
    t = 0.0
    while len(times) < limit:
        gaps = rng.exponential(mean_gap, size=1024)
        done = False
        for g in gaps:
            t += g
            if t > horizon or len(times) >= limit:
                done = True
                break
            times.append(int(t))
        if done:
            break

    requests = []
    for i, at in enumerate(times):
        prompt_len = int(attr_rng.integers(calib.prompt_min, calib.prompt_max + 1))
        p_correct = float(attr_rng.beta(calib.difficulty_a, calib.difficulty_b))
        median = calib.median_len
        if calib.median_log_sd > 0:
            median *= math.exp(calib.median_log_sd * attr_rng.standard_normal())
        requests.append(Request(i, at, prompt_len, p_correct, median, calib.sigma_log))
    return requests


def build_requests(seed: int, rate: float, horizon: int, calib: WorkloadConfig,
                   max_requests: int | None = None) -> list[Request]:
    return generate_arrivals(
        rate, horizon, split_stream(seed, "arrivals"), calib,
        attr_rng=split_stream(seed, "requests"), max_requests=max_requests,
    )


def _lognormal_cdf(x, median, sigma):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(np.maximum(x, 0.0)) - math.log(median)) / sigma
    return ndtr(z)


def length_cdf(length, median: float, sigma: float, min_len: int, max_len: int):
    """P(target_length <= length) for the truncated, ceiling-rounded lognormal."""
    lo, hi = _lognormal_cdf([min_len, max_len], median, sigma)
    f = (_lognormal_cdf(length, median, sigma) - lo) / (hi - lo)
    return np.clip(f, 0.0, 1.0)


def request_length_cdf(req: Request, calib: WorkloadConfig):
    def cdf(length):
        return length_cdf(length, req.length_median, req.length_sigma, calib.min_len, calib.max_len)
    return cdf


def _sample_length(req: Request, calib: WorkloadConfig, u: float) -> int:
    lo, hi = _lognormal_cdf([calib.min_len, calib.max_len], req.length_median, req.length_sigma)
    p = lo + u * (hi - lo)
    x = math.exp(math.log(req.length_median) + req.length_sigma * float(ndtri(p)))
    return min(max(math.ceil(x), calib.min_len), calib.max_len)


def sample_branch_outcome(req: Request, rng: np.random.Generator,
                          calib: WorkloadConfig | None = None) -> BranchOutcome:
    calib = calib or WorkloadConfig()
    u_len, u_label = rng.random(2)
    length = _sample_length(req, calib, float(u_len))
    if u_label < req.p_correct:
        label = 0
        mean, sd = calib.reward_correct_mean, calib.reward_correct_sd
    else:
        label = 1 + int(rng.integers(calib.num_wrong_labels))
        mean, sd = calib.reward_wrong_mean, calib.reward_wrong_sd
    reward = float(np.clip(mean + sd * rng.standard_normal(), 0.0, 1.0))
    return BranchOutcome(length, label, reward)


def make_trajectory(outcome: BranchOutcome, T: int, rng: np.random.Generator,
                    calib: WorkloadConfig | None = None) -> RewardTrajectory:
    """Rewards at every multiple of ``T`` below the target length, plus the final token.

    Checkpoint noise has standard deviation ``traj_sigma * (1 - t / length)``.
    """
    calib = calib or WorkloadConfig()
    L = outcome.target_length
    pos = np.arange(T, L, T, dtype=np.int64)
    noise = rng.standard_normal(len(pos)) * calib.traj_sigma * (1.0 - pos / L)
    vals = np.clip(outcome.final_reward + noise, 0.0, 1.0)
    return RewardTrajectory(
        tuple(int(p) for p in pos) + (L,),
        tuple(float(v) for v in vals) + (outcome.final_reward,),
        calib.reward_prior,
    )


def draw_branch(seed: int, req: Request, j: int, T: int,
                calib: WorkloadConfig) -> tuple[BranchOutcome, RewardTrajectory]:
    """Outcome and trajectory of branch ``j`` of ``req``.

    Keyed by (seed, request id, branch index) only, so every policy run on the
    same seed sees the same branches.
    """
    rng = split_stream(seed, f"branch/{req.id}/{j}")
    outcome = sample_branch_outcome(req, rng, calib)
    return outcome, make_trajectory(outcome, T, rng, calib)
