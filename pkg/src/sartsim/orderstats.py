"""Distribution of the M-th smallest of N i.i.d. draws.

If one branch length has CDF ``F``, the M-th completion among N branches
started together has CDF ``sum_{i=M}^{N} C(N, i) F^i (1 - F)^(N - i)``.  That
tail grows with N, which is why sampling extra branches and stopping at M
completions shortens the wait.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, logsumexp

_LOG_SPACE_ABOVE = 60


def _check(M: int, N: int):
    if not (isinstance(M, (int, np.integer)) and isinstance(N, (int, np.integer))):
        raise ValueError("M and N must be integers")
    if not 1 <= M <= N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={N}")


def cdf_order_stat(M: int, N: int, F):
    """P(X_(M) <= x) given ``F = F_X(x)``.

    ``F`` may be a float, an array of floats, or a ``Fraction`` (exact result).
    """
    _check(M, N)
    if isinstance(F, Fraction):
        if not 0 <= F <= 1:
            raise ValueError("F must lie in [0, 1]")
        return sum(math.comb(N, i) * F**i * (1 - F) ** (N - i) for i in range(M, N + 1))
    F_arr = np.asarray(F, dtype=float)
    if np.any(np.isnan(F_arr)) or np.any((F_arr < 0) | (F_arr > 1)):
        raise ValueError("F must lie in [0, 1]")
    if N > _LOG_SPACE_ABOVE:
        out = _tail_log(M, N, F_arr).reshape(F_arr.shape)
    else:
        out = _tail_direct(M, N, F_arr)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _tail_direct(M, N, F):
    G = 1.0 - F
    # all terms are non-negative, so plain summation does not cancel
    total = np.zeros_like(F)
    for i in range(M, N + 1):
        total = total + math.comb(N, i) * F**i * G ** (N - i)
    return total


def _tail_log(M, N, F):
    F = np.atleast_1d(F)
    out = np.empty_like(F)
    i = np.arange(M, N + 1)
    log_comb = gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1)
    for k, f in enumerate(F):
        if f == 0.0:
            out[k] = 0.0
        elif f == 1.0:
            out[k] = 1.0
        else:
            out[k] = math.exp(min(0.0, logsumexp(log_comb + i * math.log(f) + (N - i) * math.log1p(-f))))
    return out


def monotonicity_gap(M: int, N: int, F):
    """``cdf_order_stat(M, N + 1, F) - cdf_order_stat(M, N, F)``, never negative.

    The extra draw helps only when exactly M-1 of the first N are below x and
    it lands below x too, so the gap is ``C(N, M-1) F^M (1-F)^(N-M+1)``.
    """
    _check(M, N)
    if isinstance(F, Fraction):
        if not 0 <= F <= 1:
            raise ValueError("F must lie in [0, 1]")
        return math.comb(N, M - 1) * F**M * (1 - F) ** (N - M + 1)
    F_arr = np.asarray(F, dtype=float)
    if np.any(np.isnan(F_arr)) or np.any((F_arr < 0) | (F_arr > 1)):
        raise ValueError("F must lie in [0, 1]")
    if N > _LOG_SPACE_ABOVE:
        with np.errstate(divide="ignore"):
            log_gap = (gammaln(N + 1) - gammaln(M) - gammaln(N - M + 2)
                       + M * np.log(F_arr) + (N - M + 1) * np.log1p(-F_arr))
        out = np.exp(log_gap)
    else:
        out = math.comb(N, M - 1) * F_arr**M * (1.0 - F_arr) ** (N - M + 1)
    return float(out) if out.ndim == 0 else out


def monte_carlo_order_stat(M: int, N: int, sampler, x: float, trials: int,
                           rng: np.random.Generator) -> float:
    """Fraction of trials whose M-th smallest of N draws is <= x.

    ``sampler(rng, shape)`` returns an array of i.i.d. draws of that shape.
    """
    _check(M, N)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    draws = np.asarray(sampler(rng, (trials, N)))
    kth = np.partition(draws, M - 1, axis=1)[:, M - 1]
    return float(np.mean(kth <= x))


def monte_carlo_cdf_grid(M: int, N: int, sampler, xs, trials: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Empirical P(X_(M) <= x) for every x in ``xs`` from one shared set of draws."""
    _check(M, N)
    draws = np.asarray(sampler(rng, (trials, N)))
    kth = np.partition(draws, M - 1, axis=1)[:, M - 1]
    kth.sort()
    return np.searchsorted(kth, np.asarray(xs, dtype=float), side="right") / trials


def expected_order_stat_length(M: int, N: int, length_cdf, max_len: int) -> float:
    """E[X_(M)] for an integer length in ``[0, max_len]`` with CDF ``length_cdf``.

    Uses E[X] = sum_{L >= 0} P(X > L) over the integer grid.
    """
    grid = np.arange(0, max_len + 1)
    tail = 1.0 - cdf_order_stat(M, N, np.asarray(length_cdf(grid), dtype=float))
    return float(np.sum(tail[:-1]))


def stopping_step_cdf(M: int, N: int, length_cdf, T: int, max_len: int):
    """CDF of the decode step at which the M-th branch completes, chunked by ``T``.

    The stop lands on ``ceil(X_(M) / T) * T`` so its CDF at ``k*T`` equals
    the order-statistic CDF at ``k*T``.  Returns ``(steps, probabilities)``.
    """
    steps = np.arange(T, max_len + T, T)
    return steps, cdf_order_stat(M, N, np.asarray(length_cdf(steps), dtype=float))


def uniform_sampler(rng, shape):
    return rng.random(shape)
