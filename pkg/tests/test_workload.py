import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sartsim.simcore import split_stream
from sartsim.workload import (ConfigError, Request, RewardTrajectory, WorkloadConfig,
                              draw_branch, generate_arrivals, length_cdf, make_trajectory,
                              reward_at, sample_branch_outcome)

CAL = WorkloadConfig()


def poisson_outside(lam, lo, hi):
    """P(K < lo) + P(K > hi) for K ~ Poisson(lam), by summing the pmf term by term."""
    pmf = math.exp(-lam)
    below = 0.0
    inside = 0.0
    for k in range(0, hi + 1):
        if k > 0:
            pmf *= lam / k
        if k < lo:
            below += pmf
        else:
            inside += pmf
    return below + (1.0 - below - inside)


def test_arrival_counts_within_poisson_bounds():
    # the bound [30, 95] is a near-certain interval for Poisson(60)
    assert poisson_outside(60.0, 30, 95) < 1e-4
    counts = [len(generate_arrivals(1.0, 60_000, split_stream(s, "arrivals"))) for s in range(100)]
    assert all(30 <= c <= 95 for c in counts)


def test_zero_horizon_gives_no_requests():
    assert generate_arrivals(4.0, 0, split_stream(0, "arrivals")) == []


def test_bad_rate_rejected():
    with pytest.raises(ConfigError):
        generate_arrivals(0.0, 1000, split_stream(0, "a"))


def test_mean_gap_matches_rate():
    reqs = generate_arrivals(1.0, 10**9, split_stream(3, "arrivals"), max_requests=100_000)
    assert len(reqs) == 100_000
    # integer truncation of arrival times shifts the mean gap by < 1 ms overall
    mean_gap = reqs[-1].arrival_time / (len(reqs) - 1)
    assert abs(mean_gap - 1000.0) / 1000.0 < 0.02


def test_arrivals_ordered_and_attributes_in_range():
    reqs = generate_arrivals(4.0, 100_000, split_stream(1, "a"), CAL)
    times = [r.arrival_time for r in reqs]
    assert times == sorted(times)
    assert all(r.arrival_time <= 100_000 for r in reqs)
    assert all(0.0 <= r.p_correct <= 1.0 for r in reqs)
    assert all(CAL.prompt_min <= r.prompt_len <= CAL.prompt_max for r in reqs)
    assert [r.id for r in reqs] == list(range(len(reqs)))


def _req(p=0.7, median=8000.0, sigma=0.5):
    return Request(0, 0, 100, p, median, sigma)


@pytest.fixture(scope="module")
def outcomes():
    rng = split_stream(11, "outcomes")
    req = _req(0.6)
    return [sample_branch_outcome(req, rng, CAL) for _ in range(100_000)]


def test_certain_request_always_correct():
    rng = split_stream(0, "x")
    assert all(sample_branch_outcome(_req(1.0), rng).answer_label == 0 for _ in range(500))


def test_length_label_independent(outcomes):
    lengths = np.array([o.target_length for o in outcomes], dtype=float)
    correct = np.array([o.answer_label == 0 for o in outcomes], dtype=float)
    rho = np.corrcoef(lengths, correct)[0, 1]
    assert abs(rho) < 0.02
    gap = abs(lengths[correct == 1].mean() - lengths[correct == 0].mean())
    assert gap < 0.02 * lengths.mean()


def test_length_median_and_bounds(outcomes):
    lengths = np.array([o.target_length for o in outcomes])
    assert abs(np.median(lengths) - 8000) / 8000 < 0.03
    assert lengths.min() >= CAL.min_len and lengths.max() <= CAL.max_len


def test_rewards_informative_and_bounded(outcomes):
    r = np.array([o.final_reward for o in outcomes])
    ok = np.array([o.answer_label == 0 for o in outcomes])
    assert r.min() >= 0.0 and r.max() <= 1.0
    assert r[ok].mean() - r[~ok].mean() >= 0.3


def test_wrong_labels_cover_label_space(outcomes):
    labels = {o.answer_label for o in outcomes}
    assert labels == set(range(CAL.num_wrong_labels + 1))


def test_length_cdf_matches_samples(outcomes):
    lengths = np.sort([o.target_length for o in outcomes])
    for L in (2000, 6000, 8000, 12000, 20000):
        emp = np.searchsorted(lengths, L, side="right") / len(lengths)
        assert abs(emp - float(length_cdf(L, 8000, 0.5, 256, 32768))) < 0.01
    assert float(length_cdf(255, 8000, 0.5, 256, 32768)) == 0.0
    assert float(length_cdf(32768, 8000, 0.5, 256, 32768)) == 1.0


def test_reward_at_prior_and_terminal():
    traj = RewardTrajectory((400, 800, 1000), (0.3, 0.5, 0.72), prior=0.6)
    assert reward_at(traj, 0) == 0.6
    assert reward_at(traj, 399) == 0.6
    assert reward_at(traj, 1000) == 0.72
    assert reward_at(traj, 5000) == 0.72
    with pytest.raises(ValueError):
        reward_at(traj, -1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), T=st.integers(50, 2000), p=st.floats(0, 1))
def test_trajectory_properties(seed, T, p):
    rng = split_stream(seed, "traj")
    out = sample_branch_outcome(_req(p), rng, CAL)
    traj = make_trajectory(out, T, rng, CAL)
    cps = traj.checkpoints
    assert traj.positions[-1] == out.target_length
    assert cps[out.target_length] == out.final_reward
    assert all(0.0 <= v <= 1.0 for v in traj.values)
    assert all(q % T == 0 for q in traj.positions[:-1])
    # piecewise-constant lookup agrees with the stored map at sampled query points
    keys = sorted(cps)
    queries = np.unique(np.linspace(0, out.target_length + T, 200).astype(int))
    for q in queries:
        below = [k for k in keys if k <= q]
        expected = cps[below[-1]] if below else traj.prior
        assert reward_at(traj, int(q)) == expected


def test_draw_branch_keyed_by_request_and_index():
    req = _req()
    a = draw_branch(5, req, 3, 400, CAL)
    b = draw_branch(5, req, 3, 400, CAL)
    c = draw_branch(5, req, 4, 400, CAL)
    assert a == b
    assert a != c


def test_config_validation_names_field():
    with pytest.raises(ConfigError) as e:
        WorkloadConfig.from_dict({"sigma_log": -1})
    assert e.value.field == "workload.sigma_log"
    with pytest.raises(ConfigError) as e:
        WorkloadConfig.from_dict({"bogus": 1})
    assert e.value.field == "workload.bogus"
